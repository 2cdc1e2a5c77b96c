"""State normalization, Gaussian kernels, L1-difference attention and tile coding.

Batch helpers take the dictionary prototypes as an ``(n, d)`` array so one call
covers every kernel centre.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class Normalizer:
    """Fixed-bounds min-max scaling into [0, 1]^d, validated once."""

    def __init__(self, bounds):
        bounds = np.asarray(bounds, dtype=float)
        self.lo, hi = bounds[:, 0], bounds[:, 1]
        if np.any(hi <= self.lo):
            raise ValueError("degenerate normalization bounds (max <= min)")
        self.span = hi - self.lo

    def __call__(self, state) -> np.ndarray:
        u = (np.asarray(state, dtype=float) - self.lo) / self.span
        return np.minimum(np.maximum(u, 0.0), 1.0)


def normalize(state, bounds) -> np.ndarray:
    """Map a state into the unit hypercube using fixed per-dimension bounds."""
    return Normalizer(bounds)(state)


def _check_dims(s, s_i):
    if np.shape(s)[-1] != np.shape(s_i)[-1]:
        raise ValueError(f"dimension mismatch: {np.shape(s)} vs {np.shape(s_i)}")


def gaussian_kernel(s, s_i, sigma: float) -> float:
    _check_dims(s, s_i)
    diff = np.asarray(s, dtype=float) - np.asarray(s_i, dtype=float)
    return float(np.exp(-np.dot(diff, diff) / (2.0 * sigma * sigma)))


def kernel_vector(s, prototypes: np.ndarray, sigma: float) -> np.ndarray:
    """k(s, s_i) for every row s_i of ``prototypes``."""
    diff = prototypes - s
    return np.exp(-(diff * diff).sum(axis=-1) / (2.0 * sigma * sigma))


def psi(s, s_i) -> np.ndarray:
    """Component-wise absolute difference |s - s_i| (broadcasts over prototypes)."""
    _check_dims(s, s_i)
    return np.abs(np.asarray(s, dtype=float) - np.asarray(s_i, dtype=float))


def softmax(scores: np.ndarray) -> np.ndarray:
    z = np.exp(scores - scores.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


def attention(w, s, prototypes: np.ndarray) -> np.ndarray:
    """Softmax over the scores w . psi(s, s_i), one weight per prototype."""
    prototypes = np.atleast_2d(prototypes)
    if len(prototypes) == 0:
        raise ValueError("attention over an empty dictionary")
    return softmax(psi(s, prototypes) @ np.asarray(w, dtype=float))


def attention_jacobian(w, s, prototypes: np.ndarray) -> np.ndarray:
    """Gradient of each attention weight with respect to ``w``.

    Row i is a_i * (psi_i - sum_j a_j psi_j); the rows sum to zero.
    """
    prototypes = np.atleast_2d(prototypes)
    if len(prototypes) == 0:
        raise ValueError("attention over an empty dictionary")
    p = psi(s, prototypes)
    a = softmax(p @ np.asarray(w, dtype=float))
    return a[:, None] * (p - a @ p)


@dataclass(frozen=True)
class TileCodingSpec:
    """Uniform grids over the unit cube; tiling t is shifted by t/num_tilings of a tile."""

    num_tilings: int
    tiles_per_tiling: int
    state_dim: int

    def __post_init__(self):
        if self.num_tilings < 1 or self.tiles_per_tiling < 1:
            raise ValueError("tile counts must be positive")
        g = self.grid_size
        if g**self.state_dim != self.tiles_per_tiling:
            raise ValueError(
                f"tiles_per_tiling={self.tiles_per_tiling} is not a perfect "
                f"{self.state_dim}-th power; cannot lay out a uniform grid"
            )

    @property
    def grid_size(self) -> int:
        g = round(self.tiles_per_tiling ** (1.0 / self.state_dim))
        # guard against float rounding of the root
        for cand in (g - 1, g, g + 1):
            if cand > 0 and cand**self.state_dim == self.tiles_per_tiling:
                return cand
        return g

    @property
    def size(self) -> int:
        return self.num_tilings * self.tiles_per_tiling

    def offsets(self) -> np.ndarray:
        """Per-tiling displacement, as a fraction of one tile width."""
        return np.arange(self.num_tilings) / self.num_tilings


def tile_indices(u, spec: TileCodingSpec) -> np.ndarray:
    """Active feature indices for a normalized state, one per tiling."""
    g = spec.grid_size
    u = np.asarray(u, dtype=float)
    cells = np.floor(u[None, :] * g + spec.offsets()[:, None]).astype(np.int64)
    np.clip(cells, 0, g - 1, out=cells)
    radix = g ** np.arange(spec.state_dim)
    flat = cells @ radix
    return np.arange(spec.num_tilings) * spec.tiles_per_tiling + flat


def tile_features(state, spec: TileCodingSpec, bounds) -> np.ndarray:
    return tile_indices(normalize(state, bounds), spec)
