"""Action-value critic: replay buffer, expected-SARSA and Monte-Carlo targets,
Bellman-loss training, and soft target networks."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .approx import Adam, Mlp
from .envs import discretize_action
from .policy import action_probs, sample_action
from .rollout import policy_logits


def critic_input(states, actions, C: int) -> np.ndarray:
    """State concatenated with the action mapped onto the ``[-1, 1]`` grid."""
    states = np.asarray(states, dtype=float)
    feats = discretize_action(np.asarray(actions), C)
    return np.concatenate([states, feats], axis=-1)


def critic_eval(critic: Mlp, states, actions, C: int) -> np.ndarray:
    """``Q(s, a)`` for one pair (scalar) or a batch (``(n,)``)."""
    out = critic.forward(critic_input(states, actions, C))
    return out[..., 0]


class ReplayBuffer:
    """Fixed-capacity FIFO ring of transitions."""

    def __init__(self, capacity: int, obs_dim: int, K: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.states = np.zeros((capacity, obs_dim))
        self.actions = np.zeros((capacity, K), dtype=int)
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros((capacity, obs_dim))
        self.dones = np.zeros(capacity, dtype=bool)
        self.inserted = 0

    def __len__(self):
        return min(self.inserted, self.capacity)

    def add(self, s, a, r, s_next, done):
        i = self.inserted % self.capacity
        self.states[i] = s
        self.actions[i] = a
        self.rewards[i] = r
        self.next_states[i] = s_next
        self.dones[i] = done
        self.inserted += 1

    def sample(self, n: int, rng: np.random.Generator) -> "TransitionBatch":
        if n > len(self):
            raise ValueError(f"buffer holds {len(self)} transitions, {n} requested")
        idx = rng.choice(len(self), size=n, replace=False)
        return TransitionBatch(self.states[idx], self.actions[idx], self.rewards[idx],
                               self.next_states[idx], self.dones[idx])


@dataclass
class TransitionBatch:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    dones: np.ndarray

    def __len__(self):
        return len(self.rewards)


@dataclass
class TargetNets:
    policy: Mlp
    critic: Mlp

    @classmethod
    def from_online(cls, policy: Mlp, critic: Mlp) -> "TargetNets":
        return cls(policy.copy(), critic.copy())


def all_actions(K: int, C: int) -> np.ndarray:
    return np.array(list(itertools.product(range(C), repeat=K)), dtype=int)


def expected_next_value(states, policy: Mlp, critic: Mlp, K: int, C: int,
                        rng: np.random.Generator | None = None, M: int = 16,
                        enum_limit: int = 64) -> np.ndarray:
    """``E_{a ~ policy(.|s)} critic(s, a)`` for each row of ``states``.

    Exact enumeration when ``C**K <= enum_limit``, otherwise the mean over
    ``M`` sampled actions.
    """
    states = np.atleast_2d(np.asarray(states, dtype=float))
    n = len(states)
    probs = action_probs(policy_logits(policy, states, K, C))  # (n, K, C)
    if C ** K <= enum_limit:
        acts = all_actions(K, C)                               # (A, K)
        p_joint = np.prod(probs[:, np.arange(K), acts], axis=-1)  # (n, A)
        s_rep = np.repeat(states, len(acts), axis=0)
        a_rep = np.tile(acts, (n, 1))
        q = critic_eval(critic, s_rep, a_rep, C).reshape(n, len(acts))
        return (p_joint * q).sum(axis=1)
    if rng is None:
        raise ValueError("sampling the expectation needs a generator")
    logits = policy_logits(policy, states, K, C)
    sampled = sample_action(np.repeat(logits[:, None], M, axis=1), rng)  # (n, M, K)
    s_rep = np.repeat(states, M, axis=0)
    q = critic_eval(critic, s_rep, sampled.reshape(n * M, K), C).reshape(n, M)
    return q.mean(axis=1)


def off_policy_targets(batch: TransitionBatch, targets: TargetNets, gamma: float, K: int, C: int,
                       rng: np.random.Generator | None = None, M: int = 16,
                       enum_limit: int = 64) -> np.ndarray:
    """Expected-SARSA targets ``r + gamma (1 - done) E_{a'~pi'} Q'(s', a')``."""
    if len(batch) == 0:
        raise ValueError("empty batch")
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must lie in [0, 1]")
    y = np.asarray(batch.rewards, dtype=float).copy()
    if gamma == 0.0:
        return y
    live = ~np.asarray(batch.dones, dtype=bool)
    if live.any():
        ev = expected_next_value(batch.next_states[live], targets.policy, targets.critic,
                                 K, C, rng, M, enum_limit)
        y[live] += gamma * ev
    return y


def on_policy_targets(rewards, gamma: float) -> np.ndarray:
    """Discounted reward-to-go ``y_t = r_t + gamma y_{t+1}``."""
    rewards = np.asarray(rewards, dtype=float)
    y = np.empty_like(rewards)
    acc = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        acc = rewards[t] + gamma * acc
        y[t] = acc
    return y


def bellman_loss(critic: Mlp, inputs, targets) -> tuple[float, np.ndarray]:
    """Sum of squared residuals and its parameter gradient."""
    q = critic.forward(inputs)[:, 0]
    resid = q - targets
    grad, _ = critic.backward(inputs, 2.0 * resid[:, None])
    return float(resid @ resid), grad


def critic_update(critic: Mlp, optimizer: Adam, buffer: ReplayBuffer, on_states, on_actions, y_on,
                  targets: TargetNets, n_critic: int, gamma: float, K: int, C: int,
                  rng: np.random.Generator, M: int = 16, enum_limit: int = 64) -> list[float]:
    """``n_critic`` Adam steps on the mixed off-/on-policy Bellman loss with ``L = T``."""
    T = len(y_on)
    if len(buffer) < T:
        raise ValueError("replay buffer smaller than the on-policy batch")
    on_inputs = critic_input(on_states, on_actions, C)
    y_on = np.asarray(y_on, dtype=float)
    losses = []
    for _ in range(n_critic):
        batch = buffer.sample(T, rng)
        y_off = off_policy_targets(batch, targets, gamma, K, C, rng, M, enum_limit)
        inputs = np.concatenate([critic_input(batch.states, batch.actions, C), on_inputs])
        loss, grad = bellman_loss(critic, inputs, np.concatenate([y_off, y_on]))
        optimizer.apply(critic, grad)
        losses.append(loss)
    return losses


def soft_update(targets: TargetNets, online_policy: Mlp, online_critic: Mlp, tau: float) -> TargetNets:
    """Move target parameters a fraction ``tau`` toward the online ones (in place)."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError("tau must lie in [0, 1]")
    for target, online in ((targets.policy, online_policy), (targets.critic, online_critic)):
        if target.layer_sizes != online.layer_sizes:
            raise ValueError("target and online networks differ in shape")
        target.set_params(tau * online.get_params() + (1.0 - tau) * target.get_params())
    return targets
