"""Native environments: bimodal bandit, CartPole (discrete and discretized
continuous force) and Acrobot, each with exact snapshot/restore.

Physics constants follow the public classic-control definitions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def discretize_action(indices, C: int) -> np.ndarray:
    """Map 0-based grid indices to the uniform ``C``-point grid on ``[-1, 1]``."""
    if C < 2:
        raise ValueError("discretization needs C >= 2")
    indices = np.asarray(indices)
    if np.any(indices < 0) or np.any(indices >= C):
        raise IndexError(f"action index out of range for C={C}")
    return (2.0 * indices - (C - 1)) / (C - 1)


def grid_index(values, C: int) -> np.ndarray:
    """Inverse of :func:`discretize_action` (nearest grid point)."""
    return np.rint((np.asarray(values, dtype=float) + 1.0) * (C - 1) / 2.0).astype(int)


# ---------------------------------------------------------------------------
# bimodal bandit

@dataclass(frozen=True)
class BanditConfig:
    """Two parabolas meeting at ``m``; left peak ``c2(1+m)^2/4``, right peak ``c1(1-m)^2/4``.

    ``noise_sd1`` applies on ``[m, 1]`` and ``noise_sd2`` on ``[-1, m)``; both
    are standard deviations.
    """

    m: float = -0.8
    c1: float = 40.0 / 1.8 ** 2
    c2: float = 41.0 / 0.2 ** 2
    noise_sd1: float = 2.0
    noise_sd2: float = 1.0

    def __post_init__(self):
        if not -1.0 < self.m < 1.0:
            raise ValueError("intersection point must lie in (-1, 1)")
        if self.c1 <= 0 or self.c2 <= 0:
            raise ValueError("curvatures must be positive")
        if self.noise_sd1 < 0 or self.noise_sd2 < 0:
            raise ValueError("noise levels must be non-negative")
        if not self.r_left > self.r_right:
            raise ValueError("left peak must be the global optimum")

    @classmethod
    def preset(cls, m: float) -> "BanditConfig":
        """The two reference settings (``m = -0.8`` and ``m = 0``)."""
        if m == -0.8:
            return cls(m=-0.8, c1=40.0 / 1.8 ** 2, c2=41.0 / 0.2 ** 2)
        if m == 0.0:
            return cls(m=0.0, c1=40.0 / 0.5 ** 2, c2=41.0 / 0.5 ** 2)
        raise ValueError(f"no reference constants for m={m}")

    @property
    def a_left(self) -> float:
        return (self.m - 1.0) / 2.0

    @property
    def a_right(self) -> float:
        return (1.0 + self.m) / 2.0

    @property
    def r_left(self) -> float:
        return self.c2 * (1.0 + self.m) ** 2 / 4.0

    @property
    def r_right(self) -> float:
        return self.c1 * (1.0 - self.m) ** 2 / 4.0


def bandit_mean_reward(a, cfg: BanditConfig):
    a = np.asarray(a, dtype=float)
    return np.where(a >= cfg.m,
                    -cfg.c1 * (a - 1.0) * (a - cfg.m),
                    -cfg.c2 * (a + 1.0) * (a - cfg.m))


def bandit_mean_reward_grad(a, cfg: BanditConfig):
    a = np.asarray(a, dtype=float)
    return np.where(a >= cfg.m,
                    -cfg.c1 * (2.0 * a - 1.0 - cfg.m),
                    -cfg.c2 * (2.0 * a + 1.0 - cfg.m))


def bandit_reward(a, cfg: BanditConfig, rng: np.random.Generator | None):
    """Noisy reward; ``rng=None`` returns the noise-free mean."""
    a = np.asarray(a, dtype=float)
    if np.any(a < -1.0) or np.any(a > 1.0):
        raise ValueError("bandit action outside [-1, 1]")
    mean = bandit_mean_reward(a, cfg)
    if rng is None:
        return mean
    sd = np.where(a >= cfg.m, cfg.noise_sd1, cfg.noise_sd2)
    return mean + sd * rng.standard_normal(a.shape)


# ---------------------------------------------------------------------------
# episodic environments

@dataclass(frozen=True)
class StepResult:
    next_state: np.ndarray
    reward: float
    done: bool


@dataclass(frozen=True)
class EnvState:
    physical: np.ndarray
    steps: int
    done: bool


class Env:
    """Common surface: ``K`` action dimensions with ``C`` choices each."""

    name = "env"
    obs_dim: int
    K: int = 1
    C: int
    max_steps: int

    def __init__(self, seed=None):
        self.rng = np.random.default_rng(seed)
        self._state = None
        self.steps = 0
        self.done = True

    def reset(self) -> np.ndarray:
        self._state = self._initial_state()
        self.steps = 0
        self.done = False
        return self.observe()

    def step(self, action) -> StepResult:
        if self.done:
            raise RuntimeError("episode has terminated; call reset()")
        action = np.atleast_1d(np.asarray(action))
        if action.shape != (self.K,) or np.any(action < 0) or np.any(action >= self.C):
            raise IndexError(f"invalid action {action!r}")
        reward, terminal = self._advance(action)
        self.steps += 1
        self.done = bool(terminal or self.steps >= self.max_steps)
        return StepResult(self.observe(), float(reward), self.done)

    def snapshot(self) -> EnvState:
        return EnvState(self._state.copy(), self.steps, self.done)

    def restore(self, snap: EnvState) -> np.ndarray:
        self._state = snap.physical.copy()
        self.steps = snap.steps
        self.done = snap.done
        return self.observe()

    def observe(self) -> np.ndarray:
        return self._state.copy()

    def _initial_state(self) -> np.ndarray:
        raise NotImplementedError

    def _advance(self, action):
        raise NotImplementedError


@dataclass(frozen=True)
class CartPoleParams:
    gravity: float = 9.8
    masscart: float = 1.0
    masspole: float = 0.1
    length: float = 0.5  # half the pole length
    force_mag: float = 10.0
    tau: float = 0.02
    theta_threshold: float = 12 * 2 * np.pi / 360
    x_threshold: float = 2.4


def cartpole_dynamics(state, force: float, p: CartPoleParams = CartPoleParams()) -> np.ndarray:
    """One explicit-Euler step of the cart-pole equations of motion."""
    x, x_dot, theta, theta_dot = state
    total_mass = p.masspole + p.masscart
    polemass_length = p.masspole * p.length
    costheta, sintheta = np.cos(theta), np.sin(theta)
    temp = (force + polemass_length * theta_dot ** 2 * sintheta) / total_mass
    thetaacc = (p.gravity * sintheta - costheta * temp) / (
        p.length * (4.0 / 3.0 - p.masspole * costheta ** 2 / total_mass))
    xacc = temp - polemass_length * thetaacc * costheta / total_mass
    return np.array([x + p.tau * x_dot,
                     x_dot + p.tau * xacc,
                     theta + p.tau * theta_dot,
                     theta_dot + p.tau * thetaacc])


class CartPole(Env):
    """Balance a pole; +1 per step, capped at ``max_steps``.

    With ``continuous=False`` the two actions push left/right with force 10.
    With ``continuous=True`` action ``i`` applies force ``10 * grid[i]`` on the
    uniform ``C``-point grid over ``[-1, 1]``.
    """

    obs_dim = 4

    def __init__(self, seed=None, continuous=False, C=2, max_steps=200,
                 params: CartPoleParams = CartPoleParams()):
        super().__init__(seed)
        self.continuous = continuous
        self.C = int(C) if continuous else 2
        if self.C < 2:
            raise ValueError("CartPole needs at least two actions")
        self.max_steps = max_steps
        self.params = params
        self.name = "cartpole-cont" if continuous else "cartpole"

    def force(self, action_index: int) -> float:
        if self.continuous:
            return float(self.params.force_mag * discretize_action(action_index, self.C))
        return self.params.force_mag if action_index == 1 else -self.params.force_mag

    def _initial_state(self):
        return self.rng.uniform(-0.05, 0.05, size=4)

    def _advance(self, action):
        p = self.params
        self._state = cartpole_dynamics(self._state, self.force(int(action[0])), p)
        x, _, theta, _ = self._state
        terminal = x < -p.x_threshold or x > p.x_threshold or \
            theta < -p.theta_threshold or theta > p.theta_threshold
        return 1.0, terminal


class Acrobot(Env):
    """Two-link swing-up; reward -1 per step until the tip clears height 1."""

    obs_dim = 6
    name = "acrobot"
    dt = 0.2
    link_length_1 = 1.0
    link_mass_1 = 1.0
    link_mass_2 = 1.0
    link_com_pos_1 = 0.5
    link_com_pos_2 = 0.5
    link_moi = 1.0
    max_vel_1 = 4 * np.pi
    max_vel_2 = 9 * np.pi
    torques = (-1.0, 0.0, 1.0)

    def __init__(self, seed=None, max_steps=500):
        super().__init__(seed)
        self.C = 3
        self.max_steps = max_steps

    def _initial_state(self):
        return self.rng.uniform(-0.1, 0.1, size=4)

    def observe(self):
        s = self._state
        return np.array([np.cos(s[0]), np.sin(s[0]), np.cos(s[1]), np.sin(s[1]), s[2], s[3]])

    def _dsdt(self, s, torque):
        m1, m2 = self.link_mass_1, self.link_mass_2
        l1 = self.link_length_1
        lc1, lc2 = self.link_com_pos_1, self.link_com_pos_2
        I1 = I2 = self.link_moi
        g = 9.8
        theta1, theta2, dtheta1, dtheta2 = s
        d1 = m1 * lc1 ** 2 + m2 * (l1 ** 2 + lc2 ** 2 + 2 * l1 * lc2 * np.cos(theta2)) + I1 + I2
        d2 = m2 * (lc2 ** 2 + l1 * lc2 * np.cos(theta2)) + I2
        phi2 = m2 * lc2 * g * np.cos(theta1 + theta2 - np.pi / 2.0)
        phi1 = (-m2 * l1 * lc2 * dtheta2 ** 2 * np.sin(theta2)
                - 2 * m2 * l1 * lc2 * dtheta2 * dtheta1 * np.sin(theta2)
                + (m1 * lc1 + m2 * l1) * g * np.cos(theta1 - np.pi / 2.0) + phi2)
        ddtheta2 = (torque + d2 / d1 * phi1 - m2 * l1 * lc2 * dtheta1 ** 2 * np.sin(theta2) - phi2) \
            / (m2 * lc2 ** 2 + I2 - d2 ** 2 / d1)
        ddtheta1 = -(d2 * ddtheta2 + phi1) / d1
        return np.array([dtheta1, dtheta2, ddtheta1, ddtheta2])

    def _advance(self, action):
        torque = self.torques[int(action[0])]
        s, h = self._state, self.dt
        k1 = self._dsdt(s, torque)
        k2 = self._dsdt(s + h / 2 * k1, torque)
        k3 = self._dsdt(s + h / 2 * k2, torque)
        k4 = self._dsdt(s + h * k3, torque)
        ns = s + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        ns[0] = _wrap(ns[0])
        ns[1] = _wrap(ns[1])
        ns[2] = np.clip(ns[2], -self.max_vel_1, self.max_vel_1)
        ns[3] = np.clip(ns[3], -self.max_vel_2, self.max_vel_2)
        self._state = ns
        terminal = bool(-np.cos(ns[0]) - np.cos(ns[1] + ns[0]) > 1.0)
        return (0.0 if terminal else -1.0), terminal


def _wrap(x, low=-np.pi, high=np.pi):
    span = high - low
    while x > high:
        x -= span
    while x < low:
        x += span
    return x


class BanditEnv(Env):
    """The bimodal bandit as a one-step episodic task over a ``C``-point grid."""

    obs_dim = 1
    name = "bandit"
    max_steps = 1

    def __init__(self, seed=None, C=21, cfg: BanditConfig = BanditConfig()):
        super().__init__(seed)
        if C < 2:
            raise ValueError("bandit needs C >= 2")
        self.C = int(C)
        self.cfg = cfg

    def _initial_state(self):
        return np.ones(1)

    def _advance(self, action):
        a = discretize_action(int(action[0]), self.C)
        return float(bandit_reward(a, self.cfg, self.rng)), True


ENV_NAMES = ("cartpole", "cartpole-cont", "acrobot", "bandit")


def make_env(name: str, C: int | None = None, seed=None, max_steps: int | None = None) -> Env:
    if name == "cartpole":
        return CartPole(seed, max_steps=max_steps or 200)
    if name == "cartpole-cont":
        return CartPole(seed, continuous=True, C=C or 101, max_steps=max_steps or 200)
    if name == "acrobot":
        return Acrobot(seed, max_steps=max_steps or 500)
    if name == "bandit":
        return BanditEnv(seed, C=C or 21)
    raise ValueError(f"unknown environment {name!r}; choose from {ENV_NAMES}")
