"""Episode collection with the Dirichlet-augmented sampler."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .approx import Mlp
from .envs import Env, EnvState
from .policy import sample_dirichlet, select_action


@dataclass
class Trajectory:
    """One on-policy episode: ``T`` steps of ``K``-dimensional ``C``-way actions."""

    states: np.ndarray        # (T, obs_dim)
    dirichlet: np.ndarray     # (T, K, C)
    logits: np.ndarray        # (T, K, C)
    actions: np.ndarray       # (T, K) int
    rewards: np.ndarray       # (T,)
    next_states: np.ndarray   # (T, obs_dim)
    dones: np.ndarray         # (T,) bool
    snapshots: list[EnvState] = field(default_factory=list)

    def __len__(self):
        return len(self.rewards)

    @property
    def K(self) -> int:
        return self.logits.shape[1]

    @property
    def C(self) -> int:
        return self.logits.shape[2]


def policy_logits(policy_net: Mlp, states, K: int, C: int) -> np.ndarray:
    out = policy_net.forward(states)
    return out.reshape(out.shape[:-1] + (K, C))


def collect_episode(env: Env, policy_net: Mlp, rng: np.random.Generator, buffer=None,
                    keep_snapshots: bool = False) -> Trajectory:
    """Run one episode, storing every transition in ``buffer`` if given."""
    K, C = env.K, env.C
    s = env.reset()
    states, dirichlet, logits, actions, rewards, next_states, dones = [], [], [], [], [], [], []
    snapshots = []
    done = False
    while not done:
        if keep_snapshots:
            snapshots.append(env.snapshot())
        w = sample_dirichlet(K, C, rng)
        phi = policy_logits(policy_net, s, K, C)
        a = select_action(phi, w)
        res = env.step(a)
        if buffer is not None:
            buffer.add(s, a, res.reward, res.next_state, res.done)
        states.append(s)
        dirichlet.append(w)
        logits.append(phi)
        actions.append(a)
        rewards.append(res.reward)
        next_states.append(res.next_state)
        dones.append(res.done)
        s, done = res.next_state, res.done
    return Trajectory(np.array(states), np.array(dirichlet), np.array(logits),
                      np.array(actions, dtype=int), np.array(rewards, dtype=float),
                      np.array(next_states), np.array(dones, dtype=bool), snapshots)
