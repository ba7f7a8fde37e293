"""Environment definitions.

An `EnvModel` bundles finite state/action spaces with a reward function
r(x, u, mu, nu) and a transition kernel P(x, u, mu, nu) -> distribution over
states, where mu and nu are the state/action distributions the agent sees.
The firm-network model is the concrete environment used in experiments; a
reward that is affine in (mu, nu) additionally carries an `AffineRewardSpec`
from which the approximation-bound constants are derived.

States are 0-based indices internally; the firm model's quality levels
1..Q map to index = level - 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .simplex import Simplex, expectation


class AffineRewardRequiredError(ValueError):
    """Raised when an operation needs the affine reward decomposition but the
    environment's reward is not affine in its distribution arguments."""


@dataclass(frozen=True)
class AffineRewardSpec:
    """Decomposition r(x, u, mu, nu) = a . mu + b . nu + f[x, u]."""

    a: np.ndarray
    b: np.ndarray
    f: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=np.float64)
        b = np.asarray(self.b, dtype=np.float64)
        f = np.asarray(self.f, dtype=np.float64)
        if f.ndim != 2 or a.ndim != 1 or b.ndim != 1:
            raise ValueError("a, b must be vectors and f a |X| x |U| matrix")
        if f.shape != (a.size, b.size):
            raise ValueError(f"f shape {f.shape} does not match (|X|, |U|) = ({a.size}, {b.size})")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b)) and np.all(np.isfinite(f))):
            raise ValueError("affine reward coefficients must be finite")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "f", f)


@dataclass(frozen=True)
class RewardConstants:
    """Bound and Lipschitz constants implied by an affine reward:
    m_f = max |f|, m_r = |a|_1 + |b|_1 + m_f, l_r = max(|a|_1, |b|_1)."""

    m_r: float
    l_r: float
    m_f: float


def affine_reward_eval(spec: AffineRewardSpec, x: int, u: int, mu: Simplex, nu: Simplex) -> float:
    if len(mu) != spec.a.size or len(nu) != spec.b.size:
        raise ValueError("distribution lengths do not match the affine coefficients")
    if not (0 <= x < spec.f.shape[0] and 0 <= u < spec.f.shape[1]):
        raise ValueError(f"state/action index ({x}, {u}) out of range")
    return float(spec.a @ mu.weights + spec.b @ nu.weights + spec.f[x, u])


def reward_constants(spec: AffineRewardSpec) -> RewardConstants:
    a1 = float(np.abs(spec.a).sum())
    b1 = float(np.abs(spec.b).sum())
    m_f = float(np.abs(spec.f).max())
    return RewardConstants(m_r=a1 + b1 + m_f, l_r=max(a1, b1), m_f=m_f)


class EnvModel:
    """Finite-space environment with distribution-dependent dynamics.

    `reward` and `transition` take 0-based state/action indices plus the
    state/action distributions seen by the agent. Optional vectorized hooks
    (`reward_batch`, `transition_sample_batch`, `kernel`, `reward_matrix`)
    let concrete models accelerate the population simulator and the
    mean-field recursion; callers fall back to the scalar contract when a
    hook is absent.
    """

    def __init__(
        self,
        n_states: int,
        n_actions: int,
        gamma: float,
        reward: Callable[[int, int, Simplex, Simplex], float],
        transition: Callable[[int, int, Simplex, Simplex], Simplex],
        *,
        lipschitz_p: Optional[float] = None,
        affine: Optional[AffineRewardSpec] = None,
        reward_bound: Optional[float] = None,
        reward_batch=None,
        transition_sample_batch=None,
        kernel=None,
        reward_matrix=None,
    ):
        if n_states < 1 or n_actions < 1:
            raise ValueError("state and action spaces must be nonempty")
        if not 0.0 <= gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {gamma}")
        self.n_states = n_states
        self.n_actions = n_actions
        self.gamma = gamma
        self.reward = reward
        self.transition = transition
        self.lipschitz_p = lipschitz_p
        self.affine = affine
        self.reward_batch = reward_batch
        self.transition_sample_batch = transition_sample_batch
        self.kernel = kernel
        self.reward_matrix = reward_matrix
        if reward_bound is None and affine is not None:
            reward_bound = reward_constants(affine).m_r
        if reward_bound is None:
            raise ValueError("non-affine environments must declare a reward bound")
        self.reward_bound = float(reward_bound)


@dataclass(frozen=True)
class FirmModelConfig:
    """Network of firms choosing whether to invest in product quality.

    States are quality levels 1..q; actions are {0: hold, 1: invest}.
    Reward is alpha_r * x - beta_r * (local mean quality)^sigma - lambda_r * u;
    sigma = 1 is the affine case.
    """

    q: int
    k: int
    alpha_r: float = 1.0
    beta_r: float = 0.5
    lambda_r: float = 0.5
    sigma: float = 1.0

    def __post_init__(self):
        if self.q < 1:
            raise ValueError("q must be >= 1")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.sigma < 1:
            raise ValueError("sigma must be >= 1")


def _increment_pmf(c: np.ndarray, max_m: int) -> np.ndarray:
    """Law of floor(chi * c) for chi ~ Uniform[0, 1], one row per entry of c.

    Row entries m = 0..max_m hold P(m) = min((m+1)/c, 1) - min(m/c, 1);
    c = 0 rows are a point mass at m = 0.
    """
    c = np.atleast_1d(np.asarray(c, dtype=np.float64))
    m = np.arange(max_m + 1, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        hi = np.minimum((m + 1.0) / c[:, None], 1.0)
        lo = np.minimum(m / c[:, None], 1.0)
    pmf = np.clip(hi - lo, 0.0, 1.0)
    zero = c <= 0.0
    if zero.any():
        pmf[zero] = 0.0
        pmf[zero, 0] = 1.0
    return pmf


def firm_transition_distribution(
    cfg: FirmModelConfig, x: int, u: int, mu_bar: float
) -> Simplex:
    """Distribution of the next quality level given quality x in 1..q, the
    invest decision u, and the local mean quality mu_bar."""
    q = cfg.q
    if not 1 <= x <= q:
        raise ValueError(f"quality level {x} out of range 1..{q}")
    if u not in (0, 1):
        raise ValueError(f"action must be 0 or 1, got {u}")
    if not -1e-9 <= mu_bar <= q + 1e-9:
        raise ValueError(f"mean quality {mu_bar} out of range [0, {q}]")
    mu_bar = min(max(mu_bar, 0.0), float(q))
    out = np.zeros(q)
    if u == 0:
        out[x - 1] = 1.0
        return Simplex(out)
    c = (1.0 - mu_bar / q) * (q - x)
    pmf = _increment_pmf(np.array([c]), q - x)[0]
    out[x - 1 : q] = pmf
    return Simplex(out)


def firm_reward(cfg: FirmModelConfig, x: int, u: int, mu_view: Simplex) -> float:
    """alpha_r * x - beta_r * (mean viewed quality)^sigma - lambda_r * u."""
    if not 1 <= x <= cfg.q:
        raise ValueError(f"quality level {x} out of range 1..{cfg.q}")
    if u not in (0, 1):
        raise ValueError(f"action must be 0 or 1, got {u}")
    mu_bar = expectation(mu_view, np.arange(1, cfg.q + 1))
    return cfg.alpha_r * x - cfg.beta_r * mu_bar**cfg.sigma - cfg.lambda_r * u


def firm_affine_spec(cfg: FirmModelConfig) -> AffineRewardSpec:
    """Affine decomposition of the sigma = 1 firm reward."""
    if cfg.sigma != 1:
        raise AffineRewardRequiredError(
            f"firm reward with sigma={cfg.sigma} is not affine in the mean field"
        )
    labels = np.arange(1, cfg.q + 1, dtype=np.float64)
    a = -cfg.beta_r * labels
    b = np.zeros(2)
    f = cfg.alpha_r * labels[:, None] - cfg.lambda_r * np.array([0.0, 1.0])[None, :]
    return AffineRewardSpec(a=a, b=b, f=f)


def build_firm_env(cfg: FirmModelConfig, gamma: float) -> EnvModel:
    """Wire the firm model into the EnvModel contract.

    The transition's increment law is evaluated in closed form so the
    mean-field kernel is deterministic and exact; the population simulator
    uses the equivalent floor(chi * c) draw through the batch hook.
    """
    q = cfg.q
    labels = np.arange(1, q + 1, dtype=np.float64)

    def reward(x, u, mu, nu):
        return firm_reward(cfg, x + 1, u, mu)

    def transition(x, u, mu, nu):
        return firm_transition_distribution(cfg, x + 1, u, expectation(mu, labels))

    def reward_batch(states, actions, mu_views, nu_views):
        mu_bar = mu_views @ labels
        return cfg.alpha_r * labels[states] - cfg.beta_r * mu_bar**cfg.sigma - cfg.lambda_r * actions

    def transition_sample_batch(states, actions, mu_views, nu_views, rng):
        mu_bar = np.clip(mu_views @ labels, 0.0, float(q))
        c = (1.0 - mu_bar / q) * (q - labels[states])
        m = np.floor(rng.random(states.size) * c).astype(np.int64)
        m = np.minimum(m, q - 1 - states)
        return np.where(actions == 1, states + m, states)

    def kernel(mu, nu):
        mu_bar = min(max(float(labels @ mu.weights), 0.0), float(q))
        k = np.zeros((q, 2, q))
        k[np.arange(q), 0, np.arange(q)] = 1.0
        c = (1.0 - mu_bar / q) * (q - labels)
        pmf = _increment_pmf(c, q - 1)
        for xi in range(q):
            k[xi, 1, xi:] = pmf[xi, : q - xi]
        return k

    def reward_matrix(mu, nu):
        mu_bar = float(labels @ mu.weights)
        pay = cfg.alpha_r * labels - cfg.beta_r * mu_bar**cfg.sigma
        return pay[:, None] - cfg.lambda_r * np.array([0.0, 1.0])[None, :]

    affine = firm_affine_spec(cfg) if cfg.sigma == 1 else None
    bound = None if affine is not None else _estimate_reward_bound(cfg)
    return EnvModel(
        n_states=q,
        n_actions=2,
        gamma=gamma,
        reward=reward,
        transition=transition,
        lipschitz_p=estimate_firm_lipschitz_p(cfg),
        affine=affine,
        reward_bound=bound,
        reward_batch=reward_batch,
        transition_sample_batch=transition_sample_batch,
        kernel=kernel,
        reward_matrix=reward_matrix,
    )


def _estimate_reward_bound(cfg: FirmModelConfig, trials: int = 100_000) -> float:
    """max |r| over a random sweep, inflated 10% (for sigma != 1 rewards)."""
    rng = np.random.default_rng(20240)
    labels = np.arange(1, cfg.q + 1, dtype=np.float64)
    mu_bar = rng.dirichlet(np.ones(cfg.q), size=trials) @ labels
    x = labels[rng.integers(cfg.q, size=trials)]
    u = rng.integers(2, size=trials)
    r = cfg.alpha_r * x - cfg.beta_r * mu_bar**cfg.sigma - cfg.lambda_r * u
    return 1.1 * float(np.abs(r).max())


def estimate_firm_lipschitz_p(cfg: FirmModelConfig, trials: int = 100_000) -> float:
    """Declared transition Lipschitz constant for the firm model.

    Empirical max of |P(x,u,mu1) - P(x,u,mu2)|_1 / |mu1 - mu2|_1 over random
    tuples, inflated by a 1.1 safety factor. The probe mixes independent
    pairs with small perturbations (including mass moved between the extreme
    quality levels, where the ratio peaks) to get close to the supremum.
    """
    q = cfg.q
    if q == 1:
        return 0.0
    rng = np.random.default_rng(20241)
    labels = np.arange(1, q + 1, dtype=np.float64)

    third = trials // 3
    mu1 = rng.dirichlet(np.ones(q), size=trials)
    mu2 = np.empty_like(mu1)
    # Independent pairs, small mixtures toward a random direction, and small
    # mass moves between the extreme quality levels.
    mu2[:third] = rng.dirichlet(np.ones(q), size=third)
    mix = slice(third, 2 * third)
    eps_mix = rng.uniform(1e-4, 0.05, size=third)
    mu2[mix] = (1 - eps_mix[:, None]) * mu1[mix] + eps_mix[:, None] * rng.dirichlet(
        np.ones(q), size=third
    )
    ext = slice(2 * third, trials)
    n_ext = trials - 2 * third
    mu2[ext] = mu1[ext]
    delta = np.minimum(mu1[ext][:, 0], rng.uniform(1e-4, 0.05, size=n_ext))
    mu2[ext, 0] -= delta
    mu2[ext, q - 1] += delta

    x = rng.integers(1, q + 1, size=trials)
    c1 = (1.0 - np.clip(mu1 @ labels, 0, q) / q) * (q - x)
    c2 = (1.0 - np.clip(mu2 @ labels, 0, q) / q) * (q - x)
    p1 = _increment_pmf(c1, q - 1)
    p2 = _increment_pmf(c2, q - 1)
    dp = np.abs(p1 - p2).sum(axis=1)
    dmu = np.abs(mu1 - mu2).sum(axis=1)
    ok = dmu > 1e-12
    ratio = dp[ok] / dmu[ok]
    return 1.1 * float(ratio.max(initial=0.0))
