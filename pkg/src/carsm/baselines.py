"""REINFORCE and A2C (with GAE) for comparison against CARSM."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .approx import Adam, Mlp
from .critic import on_policy_targets
from .policy import entropy, entropy_grad, log_prob, log_prob_grad
from .rollout import Trajectory, policy_logits


@dataclass
class GaeConfig:
    gamma: float = 0.99
    lam: float = 0.95
    normalize: bool = True

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0 or not 0.0 <= self.lam <= 1.0:
            raise ValueError("gamma and lam must lie in [0, 1]")


def reinforce_gradient(traj: Trajectory, policy_net: Mlp, gamma: float, baseline=0.0) -> np.ndarray:
    """Ascent direction ``sum_t (y_t - b_t) grad log pi(a_t | s_t)``."""
    y = on_policy_targets(traj.rewards, gamma) - np.asarray(baseline, dtype=float)
    dlogits = y[:, None, None] * log_prob_grad(traj.logits, traj.actions)
    grad, _ = policy_net.backward(traj.states, dlogits.reshape(len(traj), -1))
    return grad


def gae(rewards, values, dones, cfg: GaeConfig) -> np.ndarray:
    """Generalized advantage estimates; ``values`` carries one bootstrap entry."""
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    dones = np.asarray(dones, dtype=float)
    T = len(rewards)
    if values.shape != (T + 1,) or dones.shape != (T,):
        raise ValueError("need len(values) == len(rewards) + 1 == len(dones) + 1")
    adv = np.empty(T)
    acc = 0.0
    for t in range(T - 1, -1, -1):
        live = 1.0 - dones[t]
        delta = rewards[t] + cfg.gamma * values[t + 1] * live - values[t]
        acc = delta + cfg.gamma * cfg.lam * live * acc
        adv[t] = acc
    if cfg.normalize:
        adv = normalize_advantages(adv)
    return adv


def normalize_advantages(adv) -> np.ndarray:
    adv = np.asarray(adv, dtype=float)
    centered = adv - adv.mean()
    std = centered.std()
    return centered / std if std > 0 else centered


@dataclass
class A2cLoss:
    total: float
    policy: float
    value: float
    entropy: float


def a2c_loss(traj: Trajectory, advantages, returns, policy_net: Mlp, value_net: Mlp,
             alpha: float = 0.0, value_coef: float = 0.5):
    """``L_policy + value_coef * L_value - alpha * H`` and its gradients for both networks.

    Advantages and returns are treated as constants.
    """
    T = len(traj)
    K, C = traj.K, traj.C
    logits = policy_logits(policy_net, traj.states, K, C)
    values = value_net.forward(traj.states)[:, 0]
    adv = np.asarray(advantages, dtype=float)
    returns = np.asarray(returns, dtype=float)

    l_policy = -np.mean(adv * log_prob(logits, traj.actions))
    resid = values - returns
    l_value = np.mean(resid ** 2)
    ent = np.mean(entropy(logits))
    loss = A2cLoss(l_policy + value_coef * l_value - alpha * ent, l_policy, l_value, ent)

    dlogits = -(adv[:, None, None] * log_prob_grad(logits, traj.actions)) / T
    if alpha:
        dlogits -= alpha * entropy_grad(logits) / T
    g_policy, _ = policy_net.backward(traj.states, dlogits.reshape(T, -1))
    g_value, _ = value_net.backward(traj.states, (value_coef * 2.0 * resid / T)[:, None])
    return loss, g_policy, g_value


def a2c_advantages(traj: Trajectory, value_net: Mlp, cfg: GaeConfig) -> np.ndarray:
    values = value_net.forward(np.vstack([traj.states, traj.next_states[-1:]]))[:, 0]
    return gae(traj.rewards, values, traj.dones, cfg)


def a2c_update(traj: Trajectory, policy_net: Mlp, value_net: Mlp, policy_opt: Adam,
               value_opt: Adam, cfg: GaeConfig, v_iter: int = 10, alpha: float = 0.0,
               value_coef: float = 0.5) -> list[A2cLoss]:
    """``v_iter`` joint gradient steps on one batch; advantages frozen up front."""
    adv = a2c_advantages(traj, value_net, cfg)
    returns = on_policy_targets(traj.rewards, cfg.gamma)
    losses = []
    for _ in range(v_iter):
        loss, g_p, g_v = a2c_loss(traj, adv, returns, policy_net, value_net, alpha, value_coef)
        policy_opt.apply(policy_net, g_p)
        value_opt.apply(value_net, g_v)
        losses.append(loss)
    return losses


def a2c_policy_gradient(traj: Trajectory, value_net: Mlp, policy_net: Mlp, cfg: GaeConfig,
                        alpha: float = 0.0) -> np.ndarray:
    """Ascent direction ``mean_t A_t grad log pi + alpha grad H`` (used as a TRPO direction)."""
    adv = a2c_advantages(traj, value_net, cfg)
    T = len(traj)
    dlogits = adv[:, None, None] * log_prob_grad(traj.logits, traj.actions) / T
    if alpha:
        dlogits += alpha * entropy_grad(traj.logits) / T
    grad, _ = policy_net.backward(traj.states, dlogits.reshape(T, -1))
    return grad
