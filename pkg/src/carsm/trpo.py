"""Trust-region step for the factorized categorical policy.

Any ascent direction can drive the step (A2C or CARSM). The curvature is the
Fisher matrix of the policy, i.e. the Hessian of ``KL(old || new)`` at the old
parameters, applied through Gauss-Newton products ``J^T M J v``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .approx import Mlp
from .policy import action_probs
from .rollout import policy_logits

log = logging.getLogger(__name__)

_PROB_FLOOR = 1e-12


@dataclass
class TrpoConfig:
    max_kl: float = 0.01
    cg_iters: int = 10
    cg_tol: float = 1e-10
    damping: float = 0.1
    backtrack_steps: int = 10
    backtrack_ratio: float = 0.5

    def __post_init__(self):
        if self.max_kl <= 0:
            raise ValueError("max_kl must be positive")


class ConjugateGradientError(ArithmeticError):
    pass


def kl_factored_categorical(old_probs, new_probs) -> float:
    """``KL(old || new)`` summed over dimensions, averaged over leading (state) axes."""
    old = np.asarray(old_probs, dtype=float)
    new = np.maximum(np.asarray(new_probs, dtype=float), _PROB_FLOOR)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(old > 0, old * (np.log(old) - np.log(new)), 0.0)
    return float(np.mean(terms.sum(axis=(-2, -1))))


def kl_gradient(policy_net: Mlp, states, old_probs, K: int, C: int) -> np.ndarray:
    """Parameter gradient of the mean KL from fixed ``old_probs`` to the current policy."""
    new_probs = action_probs(policy_logits(policy_net, states, K, C))
    n = len(states)
    dlogits = (new_probs - old_probs) / n
    grad, _ = policy_net.backward(states, dlogits.reshape(n, -1))
    return grad


def fisher_vector_product(policy_net: Mlp, states, v, damping: float, K: int, C: int) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (policy_net.n_params,):
        raise ValueError("vector length does not match parameter count")
    states = np.atleast_2d(states)
    n = len(states)
    p = action_probs(policy_logits(policy_net, states, K, C))
    jv = policy_net.jvp(states, v).reshape(n, K, C)
    mjv = p * (jv - (p * jv).sum(axis=-1, keepdims=True))
    hv, _ = policy_net.backward(states, mjv.reshape(n, -1) / n)
    return hv + damping * v


def conjugate_gradient(apply_H, g, cfg: TrpoConfig = TrpoConfig()) -> np.ndarray:
    """Approximately solve ``H d = g`` for symmetric positive-definite ``H``."""
    g = np.asarray(g, dtype=float)
    d = np.zeros_like(g)
    r = g.copy()
    p = r.copy()
    rr = r @ r
    for _ in range(cfg.cg_iters):
        if rr <= cfg.cg_tol:
            break
        hp = apply_H(p)
        php = p @ hp
        if not np.isfinite(php) or php <= 0:
            raise ConjugateGradientError(f"non-positive curvature p'Hp={php}")
        step = rr / php
        d += step * p
        r -= step * hp
        rr_new = r @ r
        if not np.isfinite(rr_new):
            raise ConjugateGradientError("non-finite residual")
        p = r + (rr_new / rr) * p
        rr = rr_new
    return d


@dataclass
class TrpoStepInfo:
    accepted: bool
    kl: float
    step_fraction: float
    quad_model: float  # 0.5 s'Hs of the full step (≈ max_kl)


def trpo_step(policy_net: Mlp, gradient, states, K: int, C: int,
              cfg: TrpoConfig = TrpoConfig()) -> TrpoStepInfo:
    """Natural-gradient step scaled to the KL radius, then backtracking.

    The step is accepted at the first fraction whose measured KL is within
    ``max_kl`` and whose linearized improvement ``g's`` is positive. The
    network is updated in place; on rejection it is left untouched.
    """
    gradient = np.asarray(gradient, dtype=float)
    states = np.atleast_2d(states)
    theta_old = policy_net.get_params()
    if not np.any(gradient):
        return TrpoStepInfo(False, 0.0, 0.0, 0.0)

    def apply_H(v):
        return fisher_vector_product(policy_net, states, v, cfg.damping, K, C)

    try:
        d = conjugate_gradient(apply_H, gradient, cfg)
    except ConjugateGradientError as err:
        log.warning("TRPO update skipped: %s", err)
        return TrpoStepInfo(False, 0.0, 0.0, 0.0)
    dHd = d @ apply_H(d)
    if not np.isfinite(dHd) or dHd <= 0:
        log.warning("TRPO update skipped: degenerate curvature %s", dHd)
        return TrpoStepInfo(False, 0.0, 0.0, 0.0)
    full_step = np.sqrt(2.0 * cfg.max_kl / dHd) * d
    quad = 0.5 * full_step @ apply_H(full_step)

    old_probs = action_probs(policy_logits(policy_net, states, K, C))
    frac = 1.0
    for _ in range(cfg.backtrack_steps):
        step = frac * full_step
        policy_net.set_params(theta_old + step)
        kl = kl_factored_categorical(old_probs, action_probs(policy_logits(policy_net, states, K, C)))
        if kl <= cfg.max_kl and gradient @ step > 0:
            return TrpoStepInfo(True, kl, frac, quad)
        frac *= cfg.backtrack_ratio
    policy_net.set_params(theta_old)
    return TrpoStepInfo(False, 0.0, 0.0, quad)
