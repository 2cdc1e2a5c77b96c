"""Two-timescale OAKTD updates and the single-timescale TD baselines.

The slow process runs a residual-gradient step on the squared one-step TD
error over the stacked vector (w, theta_bar) and is projected onto a ball.
The fast process is plain semi-gradient TD(0) on theta with the current
attentive features. Baselines (OKTD, OSKTD, tile coding) are semi-gradient
TD(0) on their own fixed feature maps.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .dictionary import Dictionary, extend_parameters
from .features import TileCodingSpec, softmax, tile_indices
from .vfa import Attentive, Plain, Selective, TileValueApproximator, ValueApproximator


@dataclass(frozen=True)
class StepSchedule:
    initial: float
    decay: float = 1.0

    def __post_init__(self):
        if self.initial <= 0 or not 0 < self.decay <= 1:
            raise ValueError(f"invalid schedule {self}")

    def value(self, t: int) -> float:
        return schedule_value(self, t)


def schedule_value(sch: StepSchedule, t: int) -> float:
    if t < 0:
        raise ValueError("schedule index must be non-negative")
    return sch.initial * sch.decay**t


@dataclass
class ProjectionSet:
    """Euclidean ball of the given radius around the origin."""

    radius: float
    trigger_count: int = 0

    def project(self, x: np.ndarray) -> np.ndarray:
        return project(x, self)


def project(x: np.ndarray, W: ProjectionSet) -> np.ndarray:
    norm = math.sqrt(float(x @ x))
    if norm <= W.radius:
        return x
    W.trigger_count += 1
    return x * (W.radius / norm)


@dataclass
class LearnerState:
    theta: np.ndarray
    theta_bar: np.ndarray
    w: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, state_dim: int, size: int = 0) -> "LearnerState":
        return cls(np.zeros(size), np.zeros(size), np.zeros(state_dim))

    def is_finite(self) -> bool:
        return bool(
            np.isfinite(self.theta).all() and np.isfinite(self.theta_bar).all() and np.isfinite(self.w).all()
        )

    def copy(self) -> "LearnerState":
        return LearnerState(self.theta.copy(), self.theta_bar.copy(), self.w.copy(), self.t)


class Transition(NamedTuple):
    """One normalized transition; ``gamma`` is the task discount."""

    s: np.ndarray
    reward: float
    s_next: np.ndarray
    terminal: bool
    gamma: float


def td_error(r: float, gamma: float, v_next: float, v_cur: float, terminal: bool) -> float:
    return r + (0.0 if terminal else gamma * v_next) - v_cur


class _Terms(NamedTuple):
    k: np.ndarray  # kernel values, (n,)
    a: np.ndarray  # attention weights, (n,)
    p: np.ndarray  # psi rows, (n, d)

    @property
    def phi(self) -> np.ndarray:
        return self.k * self.a

    def grad_w(self, theta: np.ndarray) -> np.ndarray:
        """sum_i theta_i k_i * d a_i / d w."""
        c = theta * self.k * self.a
        return c @ self.p - c.sum() * (self.a @ self.p)


def _terms(w, s, prototypes, sigma) -> _Terms:
    diff = prototypes - s
    k = np.exp(-(diff * diff).sum(axis=1) / (2.0 * sigma * sigma))
    p = np.abs(diff)
    return _Terms(k, softmax(p @ w), p)


def _check_sizes(L: LearnerState, prototypes):
    n = len(prototypes)
    if len(L.theta) != n or len(L.theta_bar) != n:
        raise ValueError(f"parameter size {len(L.theta)} does not match dictionary size {n}")


def _slow_step(L, cur: _Terms, nxt: _Terms | None, tr: Transition, alpha, W) -> tuple[LearnerState, float]:
    phi_s = cur.phi
    v_s = float(L.theta_bar @ phi_s)
    if nxt is None:
        delta = tr.reward - v_s
        d_theta = phi_s
        d_w = cur.grad_w(L.theta_bar)
    else:
        phi_n = nxt.phi
        delta = tr.reward + tr.gamma * float(L.theta_bar @ phi_n) - v_s
        d_theta = phi_s - tr.gamma * phi_n
        d_w = cur.grad_w(L.theta_bar) - tr.gamma * nxt.grad_w(L.theta_bar)
    dim = len(L.w)
    stacked = np.concatenate([L.w + alpha * delta * d_w, L.theta_bar + alpha * delta * d_theta])
    stacked = project(stacked, W)
    return dataclasses.replace(L, w=stacked[:dim], theta_bar=stacked[dim:]), delta


def _fast_step(L, cur: _Terms, nxt: _Terms | None, tr: Transition, beta) -> tuple[LearnerState, float]:
    phi_s = cur.phi
    v_next = 0.0 if nxt is None else float(L.theta @ nxt.phi)
    delta = td_error(tr.reward, tr.gamma, v_next, float(L.theta @ phi_s), tr.terminal)
    return dataclasses.replace(L, theta=L.theta + beta * delta * phi_s), delta


def slow_update(
    L: LearnerState, prototypes: np.ndarray, sigma: float, tr: Transition, alpha: float, W: ProjectionSet
) -> LearnerState:
    """Projected residual-gradient step on (w, theta_bar).

    Both components move along delta * (grad V(S) - gamma grad V(S')), with V
    built from theta_bar and the current w; the successor term is dropped on
    terminal transitions.
    """
    _check_sizes(L, prototypes)
    cur = _terms(L.w, tr.s, prototypes, sigma)
    nxt = None if tr.terminal else _terms(L.w, tr.s_next, prototypes, sigma)
    return _slow_step(L, cur, nxt, tr, alpha, W)[0]


def fast_update(L: LearnerState, prototypes: np.ndarray, sigma: float, tr: Transition, beta: float) -> LearnerState:
    """Semi-gradient TD(0) on theta with attentive features (no projection)."""
    _check_sizes(L, prototypes)
    cur = _terms(L.w, tr.s, prototypes, sigma)
    nxt = None if tr.terminal else _terms(L.w, tr.s_next, prototypes, sigma)
    return _fast_step(L, cur, nxt, tr, beta)[0]


def baseline_update(V, tr: Transition, alpha: float) -> np.ndarray:
    """theta + alpha * delta * grad V(S) for any linear approximator ``V``."""
    v_next = 0.0 if tr.terminal else V.value(tr.s_next)
    delta = td_error(tr.reward, tr.gamma, v_next, V.value(tr.s), tr.terminal)
    return V.theta + alpha * delta * V.grad_theta(tr.s)


def mstde(V, transitions) -> float:
    """Mean squared one-step TD error of ``V`` over a batch of transitions."""
    transitions = list(transitions)
    if not transitions:
        raise ValueError("mstde of an empty batch")
    total = 0.0
    for tr in transitions:
        v_next = 0.0 if tr.terminal else V.value(tr.s_next)
        total += td_error(tr.reward, tr.gamma, v_next, V.value(tr.s), tr.terminal) ** 2
    return total / len(transitions)


class NumericalDivergence(RuntimeError):
    """Raised when a parameter or TD error stops being finite."""

    def __init__(self, step: int, detail: str):
        super().__init__(f"non-finite value at step {step}: {detail}")
        self.step = step
        self.detail = detail


# Learners used by the training loop. They consume normalized transitions.


@dataclass
class OAKTDLearner:
    dictionary: Dictionary
    sigma: float
    alpha: StepSchedule
    beta: StepSchedule
    projection: ProjectionSet
    state: LearnerState = field(default=None)

    uses_dictionary = True

    def __post_init__(self):
        if self.state is None:
            self.state = LearnerState.zeros(self.dictionary.state_dim, len(self.dictionary))

    @property
    def theta(self) -> np.ndarray:
        return self.state.theta

    def value_approximator(self) -> ValueApproximator:
        """Live view with the fast weights; cheap, shares arrays with the learner."""
        L = self.state
        return ValueApproximator(L.theta, self.sigma, Attentive(L.w), self.dictionary.prototypes)

    def slow_approximator(self) -> ValueApproximator:
        L = self.state
        return ValueApproximator(L.theta_bar, self.sigma, Attentive(L.w), self.dictionary.prototypes)

    def snapshot(self) -> ValueApproximator:
        L = self.state
        return ValueApproximator(L.theta.copy(), self.sigma, Attentive(L.w.copy()), self.dictionary.frozen())

    def observe(self, tr: Transition, t: int) -> None:
        self.dictionary.maybe_add(tr.s, t)
        self.dictionary.maybe_add(tr.s_next, t)
        L = extend_parameters(self.state, len(self.dictionary))
        protos = self.dictionary.prototypes
        # both timescales are evaluated at the pre-update (w_t, theta_bar_t, theta_t)
        cur = _terms(L.w, tr.s, protos, self.sigma)
        nxt = None if tr.terminal else _terms(L.w, tr.s_next, protos, self.sigma)
        slow, d_slow = _slow_step(L, cur, nxt, tr, self.alpha.value(t), self.projection)
        fast, d_fast = _fast_step(L, cur, nxt, tr, self.beta.value(t))
        if not (math.isfinite(d_slow) and math.isfinite(d_fast)):
            raise NumericalDivergence(t, f"delta_slow={d_slow}, delta_fast={d_fast}")
        self.state = LearnerState(fast.theta, slow.theta_bar, slow.w, t + 1)

    def is_finite(self) -> bool:
        return self.state.is_finite()


@dataclass
class KernelTDLearner:
    """OKTD (plain kernel features) or OSKTD (selective gate) semi-gradient TD(0)."""

    dictionary: Dictionary
    sigma: float
    lr: StepSchedule
    mu2: float | None = None
    theta: np.ndarray = field(default=None)

    uses_dictionary = True

    def __post_init__(self):
        if self.theta is None:
            self.theta = np.zeros(len(self.dictionary))
        self._sparsifier = Plain() if self.mu2 is None else Selective(self.mu2)

    def value_approximator(self) -> ValueApproximator:
        return ValueApproximator(self.theta, self.sigma, self._sparsifier, self.dictionary.prototypes)

    def snapshot(self) -> ValueApproximator:
        return ValueApproximator(self.theta.copy(), self.sigma, self._sparsifier, self.dictionary.frozen())

    def observe(self, tr: Transition, t: int) -> None:
        self.dictionary.maybe_add(tr.s, t)
        self.dictionary.maybe_add(tr.s_next, t)
        n = len(self.dictionary)
        if n > len(self.theta):
            self.theta = np.concatenate([self.theta, np.zeros(n - len(self.theta))])
        V = self.value_approximator()
        new = baseline_update(V, tr, self.lr.value(t))
        if not np.isfinite(new).all():
            raise NumericalDivergence(t, "kernel TD weights")
        self.theta = new

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.theta).all())


@dataclass
class TileTDLearner:
    spec: TileCodingSpec
    lr: StepSchedule
    theta: np.ndarray = field(default=None)

    uses_dictionary = False
    dictionary = None

    def __post_init__(self):
        if self.theta is None:
            self.theta = np.zeros(self.spec.size)

    def value_approximator(self) -> TileValueApproximator:
        return TileValueApproximator(self.theta, self.spec)

    def snapshot(self) -> TileValueApproximator:
        return TileValueApproximator(self.theta.copy(), self.spec)

    def observe(self, tr: Transition, t: int) -> None:
        idx = tile_indices(tr.s, self.spec)
        v = self.theta[idx].sum()
        v_next = 0.0 if tr.terminal else self.theta[tile_indices(tr.s_next, self.spec)].sum()
        delta = td_error(tr.reward, tr.gamma, float(v_next), float(v), tr.terminal)
        if not math.isfinite(delta):
            raise NumericalDivergence(t, f"delta={delta}")
        self.theta[idx] += self.lr.value(t) * delta

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.theta).all())
