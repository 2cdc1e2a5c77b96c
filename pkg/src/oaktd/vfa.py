"""Value-function approximators over a kernel dictionary, plus the tile-coding baseline.

Every kernel approximator is linear in ``theta`` with features
``phi_i(s) = k(s, s_i) * g_i(s)`` where the gate ``g`` comes from a sparsifier:
softmax attention, a hard distance gate, no gate, dropout or a ReLU-style cut.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .features import TileCodingSpec, softmax, tile_indices


class Sparsifier:
    name = "base"

    def gate(self, k: np.ndarray, diff: np.ndarray) -> np.ndarray:
        """Multipliers for kernel values ``k`` (shape (..., n)); ``diff`` is s - s_i."""
        raise NotImplementedError


@dataclass
class Attentive(Sparsifier):
    w: np.ndarray
    name = "attentive"

    def gate(self, k, diff):
        return softmax(np.abs(diff) @ self.w)


@dataclass
class Selective(Sparsifier):
    mu2: float
    name = "selective"

    def gate(self, k, diff):
        return (2.0 - 2.0 * k < self.mu2).astype(float)


class Plain(Sparsifier):
    name = "plain"

    def gate(self, k, diff):
        return np.ones_like(k)


@dataclass
class DropoutGate(Sparsifier):
    eta: float
    rng: np.random.Generator
    training: bool = True
    name = "dropout"

    def __post_init__(self):
        if not 0.0 < self.eta < 1.0:
            raise ValueError("dropout keep probability must lie in (0, 1)")

    def gate(self, k, diff):
        if not self.training:
            return np.ones_like(k)
        return (self.rng.random(k.shape) < self.eta).astype(float)


@dataclass
class ReluGate(Sparsifier):
    b: float
    name = "relu"

    def gate(self, k, diff):
        return (k > self.b).astype(float)


@dataclass
class ValueApproximator:
    """V(s) = sum_i theta_i k(s, s_i) g_i(s) over the dictionary prototypes."""

    theta: np.ndarray
    sigma: float
    sparsifier: Sparsifier
    prototypes: np.ndarray = field(repr=False)

    def __post_init__(self):
        if len(self.theta) != len(self.prototypes):
            raise ValueError(f"|theta|={len(self.theta)} does not match |D|={len(self.prototypes)}")

    def _kernels(self, S):
        if len(self.prototypes) == 0:
            raise ValueError("value approximator over an empty dictionary")
        diff = np.asarray(S, dtype=float)[..., None, :] - self.prototypes
        k = np.exp(-(diff * diff).sum(axis=-1) / (2.0 * self.sigma * self.sigma))
        return k, diff

    def features(self, s) -> np.ndarray:
        k, diff = self._kernels(s)
        return k * self.sparsifier.gate(k, diff)

    def value(self, s) -> float:
        return float(self.features(s) @ self.theta)

    def values(self, S) -> np.ndarray:
        """Values for a batch of normalized states, shape (B,)."""
        if len(self.prototypes) == 0:
            return np.zeros(len(S))
        return self.features(S) @ self.theta

    def grad_theta(self, s) -> np.ndarray:
        return self.features(s)


@dataclass
class TileValueApproximator:
    """Linear value over binary tile-coding features of a normalized state."""

    theta: np.ndarray
    spec: TileCodingSpec

    def active(self, s) -> np.ndarray:
        return tile_indices(s, self.spec)

    def features(self, s) -> np.ndarray:
        phi = np.zeros(self.spec.size)
        phi[self.active(s)] = 1.0
        return phi

    def value(self, s) -> float:
        return float(self.theta[self.active(s)].sum())

    def values(self, S) -> np.ndarray:
        return np.array([self.value(s) for s in S])

    def grad_theta(self, s) -> np.ndarray:
        return self.features(s)


def gradient_overlap(V, s, s_hat) -> float:
    """grad V(s) . grad V(s_hat), the part of pairwise interference the representation controls."""
    return float(V.grad_theta(s) @ V.grad_theta(s_hat))
