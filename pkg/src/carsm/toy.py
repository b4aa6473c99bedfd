"""Bimodal-bandit experiment: discretized categorical policy trained with ARSM
versus a Gaussian policy trained by reparametrization.

All trials of one policy type run as a single vectorized batch; every trial
has its own parameters and optimizer moments, so this is equivalent to running
them one after another.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np
from scipy import stats

from .approx import Adam
from .envs import BanditConfig, bandit_mean_reward, bandit_mean_reward_grad, discretize_action, grid_index
from .policy import action_probs, entropy_grad, sample_dirichlet

POLICIES = ("discrete", "gaussian")


@dataclass
class ToyConfig:
    m: float = 0.0
    policy: str = "discrete"
    trials: int = 100
    samples: int = 500_000
    batch: int = 100
    C: int = 21
    lr: float = 0.03
    alpha0: float = 1.0
    seed: int = 0
    bandit: BanditConfig | None = None

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise ValueError(f"policy must be one of {POLICIES}")
        if self.C < 3:
            raise ValueError("the action grid needs at least 3 points")
        if self.samples < self.batch:
            raise ValueError("need at least one batch of samples")
        if self.bandit is None:
            self.bandit = BanditConfig.preset(self.m)

    @property
    def iterations(self) -> int:
        return self.samples // self.batch


@dataclass
class ToyResult:
    config: ToyConfig
    final_probs: np.ndarray              # (trials, C) mass on the action grid
    heatmap: np.ndarray                  # (iterations, C) trial-averaged mass
    outcomes: list[str] = field(default_factory=list)

    def count(self, outcome: str) -> int:
        return sum(o == outcome for o in self.outcomes)


def entropy_schedule(alpha0: float, i: int, n: int) -> float:
    """Quadratic decay from ``alpha0`` at iteration 0 to zero at ``n``."""
    return alpha0 * (1.0 - i / n) ** 2


def gaussian_grid_mass(mu, sigma, C: int) -> np.ndarray:
    """Gaussian mass of each grid cell; tails fold into the end cells (actions are clipped)."""
    mu = np.asarray(mu, dtype=float)[..., None]
    sigma = np.asarray(sigma, dtype=float)[..., None]
    grid = discretize_action(np.arange(C), C)
    half = 1.0 / (C - 1)
    lo = np.concatenate([[-np.inf], grid[1:] - half])
    hi = np.concatenate([grid[:-1] + half, [np.inf]])
    return stats.norm.cdf((hi - mu) / sigma) - stats.norm.cdf((lo - mu) / sigma)


def classify(probs, cfg: ToyConfig) -> list[str]:
    """``global``/``inferior`` when more than half the mass sits within one grid step of that optimum."""
    probs = np.atleast_2d(probs)
    out = []
    for target_name, a_star in (("global", cfg.bandit.a_left), ("inferior", cfg.bandit.a_right)):
        i = int(grid_index(a_star, cfg.C))
        window = probs[:, max(i - 1, 0):i + 2].sum(axis=1)
        out.append(np.where(window > 0.5, target_name, ""))
    return [g or inf or "none" for g, inf in zip(*out)]


@numba.njit(cache=True, inline="always")
def _swap_argmin(v, logw, phi, c, j, l0, l1, l2):
    """Action after swapping the Dirichlet draws of coordinates ``c`` and ``j``.

    ``l0, l1, l2`` index the three smallest entries of ``v``; ties go to the
    lower index.
    """
    if l0 != c and l0 != j:
        best_i = l0
    elif l1 != c and l1 != j:
        best_i = l1
    else:
        best_i = l2
    best_v = v[best_i]
    vj = logw[c] - phi[j]           # j < c, so j wins ties against c
    if vj < best_v or (vj == best_v and j < best_i):
        best_i, best_v = j, vj
    vc = logw[j] - phi[c]
    if vc < best_v or (vc == best_v and c < best_i):
        best_i = c
    return best_i


@numba.njit(cache=True)
def arsm_bandit_grad(phi, w, r):
    """Batch-mean ARSM coefficients for single-dimension categorical bandits.

    ``phi`` is ``(U, C)``, ``w`` the Dirichlet draws ``(U, B, C)`` and ``r`` the
    reward of every action per draw ``(U, B, C)``. Same estimator as
    :func:`carsm.arsm.g_tensor_step` applied to :func:`carsm.arsm.pseudo_table`.
    """
    U, B, C = w.shape
    out = np.zeros((U, C))
    F = np.empty((C, C))
    for u in range(U):
        for b in range(B):
            logw = np.log(w[u, b])
            v = logw - phi[u]
            low = np.argsort(v)
            l0, l1, l2 = low[0], low[1], low[2]
            a = l0
            F[:, :] = r[u, b, a]
            active = False
            for c in range(C):
                for j in range(c):
                    p = _swap_argmin(v, logw, phi[u], c, j, l0, l1, l2)
                    if p != a:
                        active = True
                    F[c, j] = r[u, b, p]
                    F[j, c] = r[u, b, p]
            if not active:
                continue
            for j in range(C):
                mean = 0.0
                for c in range(C):
                    mean += F[c, j]
                mean /= C
                coef = 1.0 / C - w[u, b, j]
                for c in range(C):
                    out[u, c] += (F[c, j] - mean) * coef
    return out / B


def _discrete_trials(cfg: ToyConfig, rng: np.random.Generator):
    U, B, C = cfg.trials, cfg.batch, cfg.C
    grid = discretize_action(np.arange(C), C)
    mean_r = bandit_mean_reward(grid, cfg.bandit)
    sd = np.where(grid >= cfg.bandit.m, cfg.bandit.noise_sd1, cfg.bandit.noise_sd2)
    phi = np.zeros((U, C))
    opt = Adam(cfg.lr, U * C)
    heat = np.empty((cfg.iterations, C))
    for i in range(cfg.iterations):
        probs = action_probs(phi)
        heat[i] = probs.mean(axis=0)
        w = sample_dirichlet(1, C, rng, size=(U, B))[:, :, 0]       # (U, B, C)
        # one noisy reward per (sample, action): each unique pseudo action is evaluated once
        r_all = mean_r + sd * rng.standard_normal((U, B, C))
        grad = arsm_bandit_grad(phi, w, r_all)
        grad += entropy_schedule(cfg.alpha0, i, cfg.iterations) * entropy_grad(phi)
        phi = opt.step(phi.ravel(), -grad.ravel()).reshape(U, C)
    return action_probs(phi), heat


def _gaussian_trials(cfg: ToyConfig, rng: np.random.Generator):
    U, B, C = cfg.trials, cfg.batch, cfg.C
    params = np.concatenate([np.full(U, cfg.bandit.m), np.zeros(U)])  # mu, log sigma
    opt = Adam(cfg.lr, 2 * U)
    heat = np.empty((cfg.iterations, C))
    for i in range(cfg.iterations):
        mu, sigma = params[:U], np.exp(params[U:])
        heat[i] = gaussian_grid_mass(mu, sigma, C).mean(axis=0)
        eps = rng.standard_normal((U, B))
        a = mu[:, None] + sigma[:, None] * eps
        inside = (a >= -1.0) & (a <= 1.0)
        dr = np.where(inside, bandit_mean_reward_grad(np.clip(a, -1.0, 1.0), cfg.bandit), 0.0)
        d_mu = dr.mean(axis=1)
        # entropy 0.5 ln(2 pi e sigma^2) has unit derivative in log sigma
        d_logsig = (dr * eps).mean(axis=1) * sigma + entropy_schedule(cfg.alpha0, i, cfg.iterations)
        params = opt.step(params, -np.concatenate([d_mu, d_logsig]))
    mu, sigma = params[:U], np.exp(params[U:])
    return gaussian_grid_mass(mu, sigma, C), heat


def train_toy(cfg: ToyConfig) -> ToyResult:
    rng = np.random.default_rng(cfg.seed)
    if cfg.policy == "discrete":
        final, heat = _discrete_trials(cfg, rng)
    else:
        final, heat = _gaussian_trials(cfg, rng)
    return ToyResult(cfg, final, heat, classify(final, cfg))


def proportion_test(x1: int, n1: int, x2: int, n2: int, alternative: str = "greater") -> float:
    """Two-sample proportion test with Yates continuity correction.

    ``alternative="greater"`` tests ``p1 > p2``; ``"two-sided"`` matches the
    usual chi-square form of the same test.
    """
    p1, p2 = x1 / n1, x2 / n2
    pooled = (x1 + x2) / (n1 + n2)
    se = np.sqrt(pooled * (1.0 - pooled) * (1.0 / n1 + 1.0 / n2))
    if se == 0:
        return 1.0
    correction = 0.5 * (1.0 / n1 + 1.0 / n2)
    diff = p1 - p2
    z = np.sign(diff) * max(abs(diff) - correction, 0.0) / se
    if alternative == "two-sided":
        return float(2.0 * stats.norm.sf(abs(z)))
    if alternative == "greater":
        return float(stats.norm.sf(z))
    raise ValueError("alternative must be 'greater' or 'two-sided'")
