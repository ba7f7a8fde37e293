"""Probability vectors over finite index sets: empirical distributions,
sampling, expectations, and L1 geometry.

All distributions in the system (population state/action distributions,
per-agent weighted views, policy outputs, transition rows) are `Simplex`
values over 0-based index sets.
"""

from __future__ import annotations

import numpy as np

# Construction renormalizes only when the sum has drifted by at most this
# much; larger drift is treated as a logic bug in the caller.
SUM_TOLERANCE = 1e-9


class Simplex:
    """An immutable probability vector over {0, ..., n-1}.

    Entries are nonnegative and sum to 1 (renormalized at construction when
    the drift is within ``SUM_TOLERANCE``, rejected otherwise).
    """

    __slots__ = ("weights",)

    def __init__(self, weights):
        w = np.asarray(weights, dtype=np.float64)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("simplex weights must be a nonempty 1-d vector")
        if not np.all(np.isfinite(w)):
            raise ValueError("simplex weights must be finite")
        if np.any(w < 0.0):
            raise ValueError(f"simplex weights must be nonnegative, got min {w.min()}")
        s = w.sum()
        if abs(s - 1.0) > SUM_TOLERANCE:
            raise ValueError(f"simplex weights sum to {s!r}, expected 1 within {SUM_TOLERANCE}")
        w = w / s
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)

    def __setattr__(self, name, value):
        raise AttributeError("Simplex is immutable")

    def __len__(self) -> int:
        return self.weights.size

    def __getitem__(self, k: int) -> float:
        return float(self.weights[k])

    def __repr__(self) -> str:
        return f"Simplex({np.array2string(self.weights, precision=6)})"

    @classmethod
    def uniform(cls, n: int) -> "Simplex":
        if n < 1:
            raise ValueError("set size must be >= 1")
        return cls(np.full(n, 1.0 / n))

    @classmethod
    def point_mass(cls, k: int, n: int) -> "Simplex":
        if not 0 <= k < n:
            raise ValueError(f"index {k} out of range for set size {n}")
        w = np.zeros(n)
        w[k] = 1.0
        return cls(w)


def empirical_distribution(samples, set_size: int) -> Simplex:
    """Fraction of occurrences of each index among `samples`."""
    if set_size < 1:
        raise ValueError("set size must be >= 1")
    idx = np.asarray(samples, dtype=np.int64)
    if idx.size == 0:
        raise ValueError("samples must be nonempty")
    if idx.min() < 0 or idx.max() >= set_size:
        raise ValueError(f"sample index out of range [0, {set_size})")
    counts = np.bincount(idx, minlength=set_size)
    return Simplex(counts / idx.size)


def l1_distance(p: Simplex, q: Simplex) -> float:
    if len(p) != len(q):
        raise ValueError(f"length mismatch: {len(p)} vs {len(q)}")
    return float(np.abs(p.weights - q.weights).sum())


def sample(p: Simplex, rng: np.random.Generator) -> int:
    """Draw one index distributed as `p`. Deterministic given the rng state."""
    return int(_draw(p.weights, rng.random()))


def sample_many(p: Simplex, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw `n` i.i.d. indices distributed as `p`."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return _draw(p.weights, rng.random(n))


def expectation(p: Simplex, values) -> float:
    v = np.asarray(values, dtype=np.float64)
    if v.shape != p.weights.shape:
        raise ValueError(f"length mismatch: {len(p)} vs {v.size}")
    return float(p.weights @ v)


def _draw(weights: np.ndarray, u):
    """Inverse-CDF lookup of uniform draw(s) `u` in the pmf `weights`."""
    cdf = np.cumsum(weights)
    cdf[-1] = 1.0
    return np.minimum(np.searchsorted(cdf, u, side="right"), weights.size - 1)


def sample_rows(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One categorical draw per row of a (n, k) matrix of probabilities."""
    cdf = np.cumsum(probs, axis=1)
    u = rng.random(probs.shape[0])
    idx = (cdf < u[:, None]).sum(axis=1)
    return np.minimum(idx, probs.shape[1] - 1)
