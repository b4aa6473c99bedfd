"""Training loops, run configuration and per-episode logging.

Every algorithm follows the same cadence: collect one episode, update the
auxiliary networks (critic or value net), take one policy step, log. A run is
fully determined by its :class:`RunConfig` (seed included).
"""

from __future__ import annotations

import json
import time
from collections import deque
from dataclasses import asdict, dataclass, field, fields
from typing import Iterator

import numpy as np

from .approx import Adam, Mlp
from .arsm import arsm_mc_gradient, carsm_gradient
from .baselines import GaeConfig, a2c_advantages, a2c_loss, a2c_policy_gradient, a2c_update
from .critic import (ReplayBuffer, TargetNets, critic_eval, critic_update, on_policy_targets,
                     soft_update)
from .envs import make_env
from .rollout import collect_episode
from .trpo import TrpoConfig, TrpoStepInfo, trpo_step

ALGOS = ("carsm", "a2c", "arsm-mc", "trpo", "trpo-carsm")

# learning rates used when the config leaves them unset
_DEFAULT_LR = {
    "carsm": (1e-3, 1e-2),
    "arsm-mc": (1e-3, 1e-2),
    "trpo-carsm": (1e-2, 1e-2),
    "a2c": (3e-4, 3e-4),
    "trpo": (3e-4, 3e-4),
}


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class RunConfig:
    algo: str = "carsm"
    env: str = "cartpole"
    C: int | None = None
    seed: int = 0
    episodes: int = 1000
    lr_policy: float | None = None
    lr_critic: float | None = None
    n_critic: int = 50
    tau: float = 0.01
    gamma: float = 0.99
    alpha0: float = 0.01
    alpha_decay: float = 0.999
    hidden: tuple[int, ...] = (64, 64)
    expectation_samples: int = 16
    enum_limit: int = 64
    replay_capacity: int = 100_000
    rollout_budget: int = 16
    v_iter: int = 10
    gae_lambda: float = 0.95
    value_coef: float = 0.5
    max_kl: float = 0.01
    cg_iters: int = 10
    cg_damping: float = 0.1
    max_steps: int | None = None
    stop_avg: float | None = None
    record_wall_clock: bool = False

    def __post_init__(self):
        if self.algo not in ALGOS:
            raise ValueError(f"unknown algorithm {self.algo!r}; choose from {ALGOS}")
        if self.episodes < 1:
            raise ValueError("episode budget must be positive")
        self.hidden = tuple(int(h) for h in self.hidden)
        for name in ("lr_policy", "lr_critic"):
            value = getattr(self, name)
            if value is not None and value < 0:
                raise ValueError(f"{name} must be non-negative")

    def resolved(self) -> "RunConfig":
        lr_p, lr_c = _DEFAULT_LR[self.algo]
        out = RunConfig(**asdict(self))
        if out.lr_policy is None:
            out.lr_policy = lr_p
        if out.lr_critic is None:
            out.lr_critic = lr_c
        return out

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)


@dataclass
class EpisodeLog:
    episode: int
    timesteps: int
    ret: float
    avg100: float
    alpha: float
    critic_loss: float
    wall_ms: float


CSV_HEADER = "episode,timesteps,return,avg100,alpha,critic_loss,wall_ms"


@dataclass
class RunStats:
    """Diagnostics that do not belong in the per-episode CSV."""

    episode_steps: int = 0
    rollout_steps: int = 0
    rollouts_per_update: list[int] = field(default_factory=list)
    trpo: list[TrpoStepInfo] = field(default_factory=list)


def _check_finite(value, what):
    if not np.all(np.isfinite(value)):
        raise TrainingDiverged(f"non-finite {what}")


class _Setup:
    """Environment, networks, optimizers and generators for one run."""

    def __init__(self, cfg: RunConfig):
        seeds = np.random.SeedSequence(cfg.seed).spawn(6)
        self.env = make_env(cfg.env, cfg.C, seed=seeds[0], max_steps=cfg.max_steps)
        env = self.env
        self.K, self.C = env.K, env.C
        self.act_rng = np.random.default_rng(seeds[1])
        self.aux_rng = np.random.default_rng(seeds[2])
        self.rollout_rng = np.random.default_rng(seeds[5])
        self.policy = Mlp.init([env.obs_dim, *cfg.hidden, env.K * env.C], seed=seeds[3])
        self.policy_opt = Adam(cfg.lr_policy, self.policy.n_params)
        if cfg.algo in ("a2c", "trpo"):
            self.aux = Mlp.init([env.obs_dim, *cfg.hidden, 1], seed=seeds[4])
        else:
            self.aux = Mlp.init([env.obs_dim + env.K, *cfg.hidden, 1], seed=seeds[4])
        self.aux_opt = Adam(cfg.lr_critic, self.aux.n_params)
        self.buffer = ReplayBuffer(cfg.replay_capacity, env.obs_dim, env.K)
        self.targets = TargetNets.from_online(self.policy, self.aux)


def train(cfg: RunConfig, stats: RunStats | None = None) -> Iterator[EpisodeLog]:
    """Yield one :class:`EpisodeLog` per collected episode."""
    cfg = cfg.resolved()
    stats = stats if stats is not None else RunStats()
    s = _Setup(cfg)
    gae_cfg = GaeConfig(cfg.gamma, cfg.gae_lambda, normalize=True)
    trpo_cfg = TrpoConfig(max_kl=cfg.max_kl, cg_iters=cfg.cg_iters, damping=cfg.cg_damping)
    uses_critic = cfg.algo in ("carsm", "trpo-carsm")

    def q_fn(states, actions):
        return critic_eval(s.aux, states, actions, s.C)

    alpha = cfg.alpha0
    recent = deque(maxlen=100)
    start = time.perf_counter()
    for episode in range(1, cfg.episodes + 1):
        traj = collect_episode(s.env, s.policy, s.act_rng,
                               buffer=s.buffer if uses_critic else None,
                               keep_snapshots=cfg.algo == "arsm-mc")
        stats.episode_steps += len(traj)
        y_on = on_policy_targets(traj.rewards, cfg.gamma)
        critic_loss = 0.0

        if uses_critic:
            losses = critic_update(s.aux, s.aux_opt, s.buffer, traj.states, traj.actions, y_on,
                                   s.targets, cfg.n_critic, cfg.gamma, s.K, s.C, s.aux_rng,
                                   cfg.expectation_samples, cfg.enum_limit)
            critic_loss = float(np.mean(losses)) if losses else 0.0
            _check_finite(critic_loss, "critic loss")
            grad = carsm_gradient(traj, y_on, s.policy, q_fn, alpha)
            _check_finite(grad, "policy gradient")
            if cfg.algo == "carsm":
                s.policy_opt.apply(s.policy, -grad)
            else:
                stats.trpo.append(trpo_step(s.policy, grad, traj.states, s.K, s.C, trpo_cfg))
            soft_update(s.targets, s.policy, s.aux, cfg.tau)

        elif cfg.algo == "arsm-mc":
            mc = arsm_mc_gradient(s.env, traj, y_on, s.policy, cfg.gamma, cfg.rollout_budget,
                                  s.rollout_rng, entropy_coef=alpha)
            stats.rollouts_per_update.append(mc.n_rollouts)
            stats.rollout_steps += mc.rollout_steps
            _check_finite(mc.grad, "policy gradient")
            s.policy_opt.apply(s.policy, -mc.grad)

        elif cfg.algo == "a2c":
            losses = a2c_update(traj, s.policy, s.aux, s.policy_opt, s.aux_opt, gae_cfg,
                                cfg.v_iter, alpha, cfg.value_coef)
            critic_loss = float(np.mean([l.value for l in losses]))
            _check_finite(critic_loss, "value loss")

        else:  # trpo with the A2C direction
            grad = a2c_policy_gradient(traj, s.aux, s.policy, gae_cfg, alpha)
            _check_finite(grad, "policy gradient")
            stats.trpo.append(trpo_step(s.policy, grad, traj.states, s.K, s.C, trpo_cfg))
            adv = np.zeros(len(traj))
            value_losses = []
            for _ in range(cfg.v_iter):
                loss, _, g_v = a2c_loss(traj, adv, y_on, s.policy, s.aux, 0.0, cfg.value_coef)
                s.aux_opt.apply(s.aux, g_v)
                value_losses.append(loss.value)
            critic_loss = float(np.mean(value_losses))

        ret = float(traj.rewards.sum())
        recent.append(ret)
        wall = (time.perf_counter() - start) * 1e3 if cfg.record_wall_clock else 0.0
        yield EpisodeLog(episode, stats.episode_steps + stats.rollout_steps, ret,
                         float(np.mean(recent)), alpha, critic_loss, wall)
        alpha *= cfg.alpha_decay
        if cfg.stop_avg is not None and len(recent) == recent.maxlen and np.mean(recent) >= cfg.stop_avg:
            return


def run(cfg: RunConfig, stats: RunStats | None = None) -> list[EpisodeLog]:
    return list(train(cfg, stats))


def episodes_to_threshold(logs: list[EpisodeLog], threshold: float, window: int = 100) -> int | None:
    """First episode whose full ``window``-episode moving average reaches ``threshold``."""
    for log in logs:
        if log.episode >= window and log.avg100 >= threshold:
            return log.episode
    return None


def format_csv(logs: list[EpisodeLog]) -> str:
    lines = [CSV_HEADER]
    for l in logs:
        lines.append(f"{l.episode},{l.timesteps},{l.ret:.10g},{l.avg100:.10g},{l.alpha:.10g},"
                     f"{l.critic_loss:.10g},{l.wall_ms:.3f}")
    return "\n".join(lines) + "\n"


def read_csv(path) -> list[EpisodeLog]:
    with open(path) as fh:
        header = fh.readline().strip()
        if header != CSV_HEADER:
            raise ValueError(f"unexpected header {header!r}")
        out = []
        for line in fh:
            e, ts, r, avg, a, cl, w = line.strip().split(",")
            out.append(EpisodeLog(int(e), int(ts), float(r), float(avg), float(a), float(cl), float(w)))
    return out
