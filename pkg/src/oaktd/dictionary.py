"""Online dictionary construction with the novelty (distance) criterion."""
from __future__ import annotations

import csv
import dataclasses
import math
from pathlib import Path

import numpy as np

from .features import kernel_vector


class Dictionary:
    """Append-only set of prototype states.

    A state is admitted when its kernel distance 2 - 2 k(s_i, s) to every
    prototype exceeds ``mu1``; the first state is always admitted.
    """

    def __init__(self, state_dim: int, mu1: float, sigma: float, capacity: int = 64):
        if mu1 <= 0 or sigma <= 0:
            raise ValueError("mu1 and sigma must be positive")
        self.state_dim = state_dim
        self.mu1 = mu1
        self.sigma = sigma
        self._data = np.empty((capacity, state_dim))
        self._size = 0
        self.add_steps: list[int] = []

    def __len__(self) -> int:
        return self._size

    @property
    def prototypes(self) -> np.ndarray:
        return self._data[: self._size]

    @property
    def last_add_step(self) -> int | None:
        return self.add_steps[-1] if self.add_steps else None

    def novelty_distance(self, s) -> float:
        if self._size == 0:
            return math.inf
        return float((2.0 - 2.0 * kernel_vector(s, self.prototypes, self.sigma)).min())

    def maybe_add(self, s, step: int) -> bool:
        if self.novelty_distance(s) <= self.mu1:
            return False
        if self._size == len(self._data):
            grown = np.empty((2 * len(self._data), self.state_dim))
            grown[: self._size] = self._data[: self._size]
            self._data = grown
        self._data[self._size] = s
        self._size += 1
        self.add_steps.append(step)
        return True

    def frozen(self) -> np.ndarray:
        """An independent copy of the prototypes, safe to hand to evaluators."""
        return self.prototypes.copy()

    def min_separation(self) -> float:
        """Smallest pairwise kernel distance, evaluated exactly as at insertion time."""
        protos = self.prototypes
        best = math.inf
        for j in range(1, len(protos)):
            d = (2.0 - 2.0 * kernel_vector(protos[j], protos[:j], self.sigma)).min()
            best = min(best, float(d))
        return best

    def satisfies_separation(self) -> bool:
        return len(self) < 2 or self.min_separation() > self.mu1

    def to_csv(self, path) -> None:
        path = Path(path)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"x{k}" for k in range(self.state_dim)] + ["add_step"])
            for row, step in zip(self.prototypes, self.add_steps):
                writer.writerow([repr(float(v)) for v in row] + [step])

    @classmethod
    def from_csv(cls, path, mu1: float, sigma: float) -> "Dictionary":
        with Path(path).open(newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = list(reader)
        d = cls(len(header) - 1, mu1, sigma, capacity=max(1, len(rows)))
        for row in rows:
            d._data[d._size] = [float(v) for v in row[:-1]]
            d._size += 1
            d.add_steps.append(int(row[-1]))
        return d


def extend_parameters(state, new_size: int):
    """Zero-pad ``theta`` and ``theta_bar`` of a learner state to ``new_size``."""
    current = len(state.theta)
    if new_size < current:
        raise ValueError(f"cannot shrink parameters from {current} to {new_size}")
    if new_size == current:
        return state
    pad = new_size - current
    return dataclasses.replace(
        state,
        theta=np.concatenate([state.theta, np.zeros(pad)]),
        theta_bar=np.concatenate([state.theta_bar, np.zeros(pad)]),
    )
