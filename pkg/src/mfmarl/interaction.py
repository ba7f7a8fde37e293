"""Doubly stochastic interaction matrices and per-agent weighted views.

The matrix entry W(i, j) is the weight agent j carries in agent i's view of
the population. Rows must sum to 1 for the views to be distributions;
columns must also sum to 1 for the population-average cancellation that the
mean-field comparison relies on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .simplex import Simplex

VALIDATION_TOL = 1e-9


@dataclass(frozen=True)
class ValidationReport:
    """Row/column sum deviations and negative entries of a candidate matrix."""

    row_deviation: np.ndarray
    col_deviation: np.ndarray
    min_entry: float
    tol: float
    passed: bool

    def __str__(self) -> str:
        status = "pass" if self.passed else "FAIL"
        return (
            f"{status}: max row dev {self.row_deviation.max():.3e}, "
            f"max col dev {self.col_deviation.max():.3e}, min entry {self.min_entry:.3e} "
            f"(tol {self.tol:g})"
        )


class InteractionMatrix:
    """An immutable N x N doubly stochastic weight matrix."""

    __slots__ = ("n_agents", "weights")

    def __init__(self, weights):
        w = np.asarray(weights, dtype=np.float64)
        report = validate_doubly_stochastic(w, VALIDATION_TOL)
        if not report.passed:
            raise ValueError(f"matrix is not doubly stochastic: {report}")
        if w.max() > 1.0 + VALIDATION_TOL:
            raise ValueError("matrix entries must lie in [0, 1]")
        w = w.copy()
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "n_agents", w.shape[0])

    def __setattr__(self, name, value):
        raise AttributeError("InteractionMatrix is immutable")

    def save_csv(self, path) -> None:
        np.savetxt(path, self.weights, delimiter=",", fmt="%.17g")

    @classmethod
    def load_csv(cls, path) -> "InteractionMatrix":
        return cls(np.loadtxt(path, delimiter=",", ndmin=2))


def uniform(n: int) -> InteractionMatrix:
    """All-pairs interaction with weight 1/n, the exchangeable special case."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return InteractionMatrix(np.full((n, n), 1.0 / n))


def ring_k_neighbor(n: int, k: int) -> InteractionMatrix:
    """Circulant matrix with weight 1/k on offsets {1, ..., k} (self excluded
    unless k = n, where offset n wraps onto the diagonal)."""
    if not 1 <= k <= n:
        raise ValueError(f"k must satisfy 1 <= k <= n, got k={k}, n={n}")
    w = np.zeros((n, n))
    for off in range(1, k + 1):
        w[np.arange(n), (np.arange(n) + off) % n] += 1.0 / k
    return InteractionMatrix(w)


def ring_symmetric(n: int, k: int) -> InteractionMatrix:
    """Symmetric circulant with weight 1/k on offsets +-1..+-k/2 (k even)."""
    if k % 2 != 0:
        raise ValueError("symmetric window needs an even neighbor count")
    if not 2 <= k < n:
        raise ValueError(f"k must satisfy 2 <= k < n, got k={k}, n={n}")
    w = np.zeros((n, n))
    for off in range(1, k // 2 + 1):
        w[np.arange(n), (np.arange(n) + off) % n] += 1.0 / k
        w[np.arange(n), (np.arange(n) - off) % n] += 1.0 / k
    return InteractionMatrix(w)


def sinkhorn_random(
    n: int,
    rng: np.random.Generator,
    tol: float = 1e-10,
    max_iters: int = 10_000,
) -> InteractionMatrix:
    """Random doubly stochastic matrix by alternating row/column normalization
    of a strictly positive random start."""
    if n < 1:
        raise ValueError("n must be >= 1")
    w = rng.uniform(0.1, 1.1, size=(n, n))
    for _ in range(max_iters):
        w /= w.sum(axis=1, keepdims=True)
        w /= w.sum(axis=0, keepdims=True)
        dev = max(
            np.abs(w.sum(axis=1) - 1.0).max(),
            np.abs(w.sum(axis=0) - 1.0).max(),
        )
        if dev < tol:
            return InteractionMatrix(w)
    raise RuntimeError(f"sinkhorn normalization did not reach {tol:g} in {max_iters} iterations")


def validate_doubly_stochastic(w, tol: float) -> ValidationReport:
    m = np.asarray(w, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"matrix must be square, got shape {m.shape}")
    row_dev = np.abs(m.sum(axis=1) - 1.0)
    col_dev = np.abs(m.sum(axis=0) - 1.0)
    min_entry = float(m.min())
    passed = bool(row_dev.max() <= tol and col_dev.max() <= tol and min_entry >= -tol)
    return ValidationReport(row_dev, col_dev, min_entry, tol, passed)


def weighted_view(
    w: InteractionMatrix, agent: int, items, set_size: int
) -> Simplex:
    """Agent's weighted distribution over the items held by the population:
    entry k is the total W(agent, j) weight of agents j holding item k."""
    if not 0 <= agent < w.n_agents:
        raise ValueError(f"agent {agent} out of range [0, {w.n_agents})")
    idx = np.asarray(items, dtype=np.int64)
    if idx.size != w.n_agents:
        raise ValueError(f"need one item per agent: {idx.size} vs {w.n_agents}")
    if idx.min() < 0 or idx.max() >= set_size:
        raise ValueError(f"item index out of range [0, {set_size})")
    return Simplex(np.bincount(idx, weights=w.weights[agent], minlength=set_size))


def weighted_views_all(w: InteractionMatrix, items, set_size: int) -> np.ndarray:
    """All agents' weighted views at once, as an (N, set_size) matrix."""
    idx = np.asarray(items, dtype=np.int64)
    if idx.size != w.n_agents:
        raise ValueError(f"need one item per agent: {idx.size} vs {w.n_agents}")
    if idx.min() < 0 or idx.max() >= set_size:
        raise ValueError(f"item index out of range [0, {set_size})")
    indicator = np.zeros((w.n_agents, set_size))
    indicator[np.arange(w.n_agents), idx] = 1.0
    return w.weights @ indicator
