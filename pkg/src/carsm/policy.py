"""Factorized categorical policy sampled through the Dirichlet argmin trick.

Logits have shape ``(..., K, C)``: one categorical over ``C`` choices for each
of ``K`` action dimensions. Action indices are 0-based throughout the code
(the write-up numbers actions ``1..C``).

A categorical draw is reparametrized as ``argmin_i(ln w_i - phi_i)`` with
``w ~ Dirichlet(1_C)``; its law is exactly ``softmax(phi)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import log_softmax, softmax


def sample_dirichlet(K: int, C: int, rng: np.random.Generator, size=()) -> np.ndarray:
    """Independent Dirichlet(1_C) rows, shape ``(*size, K, C)``."""
    if K < 1 or C < 1:
        raise ValueError("K and C must be positive")
    size = (size,) if isinstance(size, int) else tuple(size)
    e = rng.standard_exponential(size + (K, C))
    return e / e.sum(axis=-1, keepdims=True)


def _finite_logits(logits) -> np.ndarray:
    logits = np.asarray(logits, dtype=float)
    if not np.all(np.isfinite(logits)):
        raise ValueError("logits must be finite")
    return logits


def select_action(logits, dirichlet) -> np.ndarray:
    """Per-dimension ``argmin_i(ln w_i - phi_i)``; ties go to the lowest index."""
    logits = _finite_logits(logits)
    dirichlet = np.asarray(dirichlet, dtype=float)
    if logits.shape != dirichlet.shape:
        raise ValueError(f"shape mismatch {logits.shape} vs {dirichlet.shape}")
    return np.argmin(np.log(dirichlet) - logits, axis=-1)


def action_probs(logits) -> np.ndarray:
    return softmax(np.asarray(logits, dtype=float), axis=-1)


def log_prob(logits, action) -> np.ndarray:
    """Sum over dimensions of ``ln softmax(phi_k)[a_k]``."""
    logits = np.asarray(logits, dtype=float)
    action = np.asarray(action)
    C = logits.shape[-1]
    if np.any(action < 0) or np.any(action >= C):
        raise IndexError(f"action index out of range for C={C}")
    logp = log_softmax(logits, axis=-1)
    picked = np.take_along_axis(logp, action[..., None], axis=-1)[..., 0]
    return picked.sum(axis=-1)


def log_prob_grad(logits, action) -> np.ndarray:
    """d log_prob / d logits: ``onehot(a) - softmax(phi)`` per dimension."""
    logits = np.asarray(logits, dtype=float)
    action = np.asarray(action)
    grad = -action_probs(logits)
    np.put_along_axis(grad, action[..., None],
                      np.take_along_axis(grad, action[..., None], axis=-1) + 1.0, axis=-1)
    return grad


def entropy(logits) -> np.ndarray:
    """Sum of per-dimension entropies in nats."""
    logp = log_softmax(np.asarray(logits, dtype=float), axis=-1)
    p = np.exp(logp)
    return -(p * logp).sum(axis=(-2, -1))


def entropy_grad(logits) -> np.ndarray:
    logp = log_softmax(np.asarray(logits, dtype=float), axis=-1)
    p = np.exp(logp)
    h = -(p * logp).sum(axis=-1, keepdims=True)
    return -p * (logp + h)


def sample_action(logits, rng: np.random.Generator) -> np.ndarray:
    """Draw an action by the argmin rule with fresh Dirichlet noise."""
    logits = np.asarray(logits, dtype=float)
    *batch, K, C = logits.shape
    return select_action(logits, sample_dirichlet(K, C, rng, size=tuple(batch)))


@dataclass
class GaussianPolicyParams:
    """One-dimensional Gaussian policy used only on the toy bandit."""

    mu: float
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")


def gaussian_sample(params: GaussianPolicyParams, rng: np.random.Generator, size=None):
    eps = rng.standard_normal(size)
    return params.mu + params.sigma * eps, eps


def gaussian_logprob(params: GaussianPolicyParams, a):
    z = (np.asarray(a, dtype=float) - params.mu) / params.sigma
    return -0.5 * z * z - np.log(params.sigma) - 0.5 * np.log(2.0 * np.pi)


def gaussian_entropy(params: GaussianPolicyParams) -> float:
    return 0.5 * np.log(2.0 * np.pi * np.e * params.sigma ** 2)


def gaussian_reparam_grad(params: GaussianPolicyParams, eps, reward_grad, low=-1.0, high=1.0):
    """Pathwise gradient of ``mean(r(clip(mu + sigma*eps)))`` w.r.t. ``(mu, sigma)``.

    ``reward_grad`` is the derivative of the noise-free mean reward. Samples
    clipped to the action box carry no pathwise gradient.
    """
    eps = np.asarray(eps, dtype=float)
    a = params.mu + params.sigma * eps
    inside = (a >= low) & (a <= high)
    dr = np.where(inside, reward_grad(np.clip(a, low, high)), 0.0)
    return float(np.mean(dr)), float(np.mean(dr * eps))
