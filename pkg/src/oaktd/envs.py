"""Classic control tasks: Mountain Car, Acrobot, CartPole and Puddle World.

Environments are stateless: every method takes the current state explicitly and
returns a new array, so many instances can share nothing and run in parallel.
Randomness only enters through the ``rng`` argument (a ``numpy.random.Generator``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

ENV_IDS = ("mountain-car", "acrobot", "cartpole", "puddle-world")


@dataclass(frozen=True)
class EnvSpec:
    env_id: str
    state_dim: int
    action_count: int
    gamma: float
    state_bounds: tuple[tuple[float, float], ...]
    episode_cap: int | None = None

    @property
    def bounds_array(self) -> np.ndarray:
        return np.asarray(self.state_bounds, dtype=float)


class StepOutcome(NamedTuple):
    next_state: np.ndarray
    reward: float
    terminal: bool


class Env:
    spec: EnvSpec

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def step(self, state, action: int, rng: np.random.Generator) -> StepOutcome:
        self._check_action(action)
        return self._transition(state, action, self._draw_noise(rng))

    def lookahead(self, state, action: int) -> StepOutcome:
        """Mean one-step model: ``step`` with every stochastic term at its mean."""
        self._check_action(action)
        return self._transition(state, action, None)

    def is_terminal(self, state) -> bool:
        return False

    def _draw_noise(self, rng):
        return None

    def _transition(self, state, action, noise) -> StepOutcome:
        raise NotImplementedError

    def _check_action(self, action) -> None:
        if not 0 <= action < self.spec.action_count:
            raise ValueError(
                f"invalid action {action} for {self.spec.env_id} "
                f"(expected 0..{self.spec.action_count - 1})"
            )


def _clip(x: float, lo: float, hi: float) -> float:
    return lo if x < lo else hi if x > hi else x


class MountainCar(Env):
    """Actions: 0 reverse, 1 zero throttle, 2 forward."""

    MIN_POS, MAX_POS = -1.2, 0.5
    MAX_SPEED = 0.07
    GOAL = 0.5

    spec = EnvSpec(
        env_id="mountain-car",
        state_dim=2,
        action_count=3,
        gamma=0.99,
        state_bounds=((-1.2, 0.5), (-0.07, 0.07)),
    )

    def reset(self, rng):
        return np.array([rng.uniform(-0.6, -0.4), 0.0])

    def is_terminal(self, state) -> bool:
        return state[0] >= self.GOAL

    def _transition(self, state, action, noise):
        x, v = float(state[0]), float(state[1])
        v = _clip(v + 0.001 * (action - 1) - 0.0025 * math.cos(3 * x), -self.MAX_SPEED, self.MAX_SPEED)
        x = _clip(x + v, self.MIN_POS, self.MAX_POS)
        if x == self.MIN_POS and v < 0:
            v = 0.0
        if x >= self.GOAL:
            return StepOutcome(np.array([x, v]), 0.0, True)
        return StepOutcome(np.array([x, v]), -1.0, False)


def grid_states(env: Env) -> np.ndarray:
    """The 171 x 141 position/velocity grid, position-major (row-major)."""
    if env.spec.env_id != "mountain-car":
        raise ValueError(f"grid_states supports mountain-car only, got {env.spec.env_id}")
    xs = np.linspace(-1.2, 0.5, 171)
    vs = np.linspace(-0.07, 0.07, 141)
    X, V = np.meshgrid(xs, vs, indexing="ij")
    return np.column_stack([X.ravel(), V.ravel()])


class Acrobot(Env):
    """Two-link acrobot with the book dynamics, one RK4 step per action.

    State is (theta1, theta2, dtheta1, dtheta2); actions 0/1/2 apply torque -1/0/+1.
    """

    LINK_LENGTH_1 = 1.0
    LINK_MASS_1 = LINK_MASS_2 = 1.0
    LINK_COM_1 = LINK_COM_2 = 0.5
    LINK_MOI = 1.0
    G = 9.8
    DT = 0.2
    MAX_VEL_1 = 4 * math.pi
    MAX_VEL_2 = 9 * math.pi

    spec = EnvSpec(
        env_id="acrobot",
        state_dim=4,
        action_count=3,
        gamma=0.99,
        state_bounds=((-math.pi, math.pi), (-math.pi, math.pi), (-4 * math.pi, 4 * math.pi), (-9 * math.pi, 9 * math.pi)),
    )

    def reset(self, rng):
        return np.zeros(4)

    def is_terminal(self, state) -> bool:
        return -math.cos(state[0]) - math.cos(state[1] + state[0]) > 1.0

    def _dsdt(self, s, torque):
        m1, m2 = self.LINK_MASS_1, self.LINK_MASS_2
        l1 = self.LINK_LENGTH_1
        lc1, lc2 = self.LINK_COM_1, self.LINK_COM_2
        I1 = I2 = self.LINK_MOI
        g = self.G
        theta1, theta2, dtheta1, dtheta2 = s
        d1 = m1 * lc1**2 + m2 * (l1**2 + lc2**2 + 2 * l1 * lc2 * math.cos(theta2)) + I1 + I2
        d2 = m2 * (lc2**2 + l1 * lc2 * math.cos(theta2)) + I2
        phi2 = m2 * lc2 * g * math.cos(theta1 + theta2 - math.pi / 2.0)
        phi1 = (
            -m2 * l1 * lc2 * dtheta2**2 * math.sin(theta2)
            - 2 * m2 * l1 * lc2 * dtheta2 * dtheta1 * math.sin(theta2)
            + (m1 * lc1 + m2 * l1) * g * math.cos(theta1 - math.pi / 2)
            + phi2
        )
        ddtheta2 = (torque + d2 / d1 * phi1 - m2 * l1 * lc2 * dtheta1**2 * math.sin(theta2) - phi2) / (
            m2 * lc2**2 + I2 - d2**2 / d1
        )
        ddtheta1 = -(d2 * ddtheta2 + phi1) / d1
        return (dtheta1, dtheta2, ddtheta1, ddtheta2)

    def _transition(self, state, action, noise):
        torque = float(action - 1)
        s = tuple(float(c) for c in state)
        h = self.DT
        k1 = self._dsdt(s, torque)
        k2 = self._dsdt(tuple(si + h / 2 * ki for si, ki in zip(s, k1)), torque)
        k3 = self._dsdt(tuple(si + h / 2 * ki for si, ki in zip(s, k2)), torque)
        k4 = self._dsdt(tuple(si + h * ki for si, ki in zip(s, k3)), torque)
        ns = [si + h / 6.0 * (a + 2 * b + 2 * c + d) for si, a, b, c, d in zip(s, k1, k2, k3, k4)]
        ns[0] = _wrap(ns[0])
        ns[1] = _wrap(ns[1])
        ns[2] = _clip(ns[2], -self.MAX_VEL_1, self.MAX_VEL_1)
        ns[3] = _clip(ns[3], -self.MAX_VEL_2, self.MAX_VEL_2)
        next_state = np.array(ns)
        if self.is_terminal(next_state):
            return StepOutcome(next_state, 0.0, True)
        return StepOutcome(next_state, -1.0, False)


def _wrap(angle: float) -> float:
    """Map an angle into [-pi, pi)."""
    return (angle + math.pi) % (2 * math.pi) - math.pi


class CartPole(Env):
    """Cart-pole balancing with Euler integration; actions 0 push left, 1 push right.

    Velocities are clipped to the normalization bounds; on failure the position
    and angle of the returned (terminal) state are clipped as well.
    """

    GRAVITY = 9.8
    MASS_CART = 1.0
    MASS_POLE = 0.1
    HALF_LENGTH = 0.5
    FORCE = 10.0
    TAU = 0.02
    X_LIMIT = 2.4
    THETA_LIMIT = 12 * 2 * math.pi / 360

    spec = EnvSpec(
        env_id="cartpole",
        state_dim=4,
        action_count=2,
        gamma=1.0,
        state_bounds=((-2.4, 2.4), (-3.0, 3.0), (-12 * 2 * math.pi / 360, 12 * 2 * math.pi / 360), (-3.5, 3.5)),
        episode_cap=500,
    )

    def reset(self, rng):
        return rng.uniform(-0.05, 0.05, size=4)

    def is_terminal(self, state) -> bool:
        return abs(state[0]) > self.X_LIMIT or abs(state[2]) > self.THETA_LIMIT

    def _transition(self, state, action, noise):
        x, x_dot, theta, theta_dot = (float(c) for c in state)
        force = self.FORCE if action == 1 else -self.FORCE
        total_mass = self.MASS_CART + self.MASS_POLE
        polemass_length = self.MASS_POLE * self.HALF_LENGTH
        cos_t, sin_t = math.cos(theta), math.sin(theta)
        temp = (force + polemass_length * theta_dot**2 * sin_t) / total_mass
        theta_acc = (self.GRAVITY * sin_t - cos_t * temp) / (
            self.HALF_LENGTH * (4.0 / 3.0 - self.MASS_POLE * cos_t**2 / total_mass)
        )
        x_acc = temp - polemass_length * theta_acc * cos_t / total_mass
        x = x + self.TAU * x_dot
        x_dot = x_dot + self.TAU * x_acc
        theta = theta + self.TAU * theta_dot
        theta_dot = theta_dot + self.TAU * theta_acc
        terminal = abs(x) > self.X_LIMIT or abs(theta) > self.THETA_LIMIT
        b = self.spec.state_bounds
        next_state = np.array([
            _clip(x, *b[0]),
            _clip(x_dot, *b[1]),
            _clip(theta, *b[2]),
            _clip(theta_dot, *b[3]),
        ])
        return StepOutcome(next_state, 1.0, terminal)


PUDDLES = (((0.1, 0.75), (0.45, 0.75)), ((0.45, 0.4), (0.45, 0.8)))
PUDDLE_RADIUS = 0.1


def _segment_distance(p, a, b) -> float:
    ax, ay = a
    bx, by = b
    dx, dy = bx - ax, by - ay
    u = ((p[0] - ax) * dx + (p[1] - ay) * dy) / (dx * dx + dy * dy)
    u = _clip(u, 0.0, 1.0)
    return math.hypot(p[0] - (ax + u * dx), p[1] - (ay + u * dy))


def puddle_penalty(position) -> float:
    """400 x depth inside the nearest puddle capsule; 0 outside every puddle."""
    dist = min(_segment_distance(position, a, b) for a, b in PUDDLES)
    return 400.0 * max(0.0, PUDDLE_RADIUS - dist)


class PuddleWorld(Env):
    """Actions: 0 up, 1 down, 2 left, 3 right, 4 stay. Goal region x + y >= 1.9."""

    STEP = 0.05
    NOISE_STD = 0.01
    MOVES = ((0.0, 0.05), (0.0, -0.05), (-0.05, 0.0), (0.05, 0.0), (0.0, 0.0))

    spec = EnvSpec(
        env_id="puddle-world",
        state_dim=2,
        action_count=5,
        gamma=0.999,
        state_bounds=((0.0, 1.0), (0.0, 1.0)),
    )

    def reset(self, rng):
        return np.array([0.2, 0.4])

    def is_terminal(self, state) -> bool:
        return state[0] + state[1] >= 1.9

    def _draw_noise(self, rng):
        return rng.normal(0.0, self.NOISE_STD, size=2)

    def _transition(self, state, action, noise):
        dx, dy = self.MOVES[action]
        x, y = float(state[0]) + dx, float(state[1]) + dy
        if noise is not None:
            x += float(noise[0])
            y += float(noise[1])
        next_state = np.array([_clip(x, 0.0, 1.0), _clip(y, 0.0, 1.0)])
        if self.is_terminal(next_state):
            return StepOutcome(next_state, 0.0, True)
        return StepOutcome(next_state, -1.0 - puddle_penalty(next_state), False)


_ENVS = {
    "mountain-car": MountainCar,
    "acrobot": Acrobot,
    "cartpole": CartPole,
    "puddle-world": PuddleWorld,
}


def make_env(env_id: str) -> Env:
    try:
        return _ENVS[env_id]()
    except KeyError:
        raise ValueError(f"unknown env {env_id!r}; expected one of {', '.join(ENV_IDS)}") from None
