"""Flat parameter vectors and reproducible random substreams.

Parameter vectors are plain 1-D ``float64`` numpy arrays. The helpers here
never mutate their inputs, which keeps every round-loop step a pure function.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence, Tuple

import numpy as np

_MASK64 = (1 << 64) - 1


class DimensionMismatchError(ValueError):
    """Two vectors that must share a dimension do not."""

    def __init__(self, left: int, right: int, what: str = "vector") -> None:
        super().__init__(f"{what} dimension mismatch: {left} != {right}")
        self.left = left
        self.right = right


class NonFiniteError(FloatingPointError):
    pass


def as_vector(values: Iterable[float] | np.ndarray) -> np.ndarray:
    """Copy ``values`` into a fresh finite 1-D float64 array."""
    v = np.array(values, dtype=np.float64).reshape(-1)
    if v.size == 0:
        raise ValueError("parameter vectors must have positive dimension")
    check_finite(v)
    return v


def zeros(dim: int) -> np.ndarray:
    if dim < 1:
        raise ValueError(f"dim must be positive, got {dim}")
    return np.zeros(dim, dtype=np.float64)


def check_finite(v: np.ndarray, what: str = "vector") -> np.ndarray:
    if not np.all(np.isfinite(v)):
        raise NonFiniteError(f"{what} contains NaN or Inf")
    return v


def check_dims(a: np.ndarray, b: np.ndarray, what: str = "vector") -> None:
    if a.shape != b.shape:
        raise DimensionMismatchError(a.size, b.size, what)


def axpy(y: np.ndarray, alpha: float, x: np.ndarray) -> np.ndarray:
    """Return ``y + alpha * x`` as a new array."""
    check_dims(y, x)
    return y + alpha * x


def scale(v: np.ndarray, c: float) -> np.ndarray:
    return c * v


def l2_norm_sq(v: np.ndarray) -> float:
    return float(np.dot(v, v))


def weighted_average(items: Sequence[Tuple[np.ndarray, float]]) -> np.ndarray:
    """Weighted mean ``sum(w_i v_i) / sum(w_i)`` of ``(vector, weight)`` pairs.

    Raises:
        ValueError: if ``items`` is empty or any weight is not strictly positive.
        DimensionMismatchError: if the vectors differ in length.
    """
    if not items:
        raise ValueError("weighted_average needs at least one item")
    first = items[0][0]
    total = np.zeros_like(first, dtype=np.float64)
    wsum = 0.0
    for v, w in items:
        if not w > 0:
            raise ValueError(f"weights must be positive, got {w}")
        check_dims(first, v)
        total += w * v
        wsum += w
    return total / wsum


@dataclass(frozen=True)
class RngStream:
    """A stateless handle on one random substream.

    The stream is identified by ``(root_seed, path)``. The pair is hashed by
    numpy's ``SeedSequence`` (``entropy=root_seed``, ``spawn_key=path``), so a
    given path always yields the same values no matter in which order the
    streams are consumed, and sibling paths are independent.
    """

    root_seed: int
    path: Tuple[int, ...] = ()

    def child(self, *index: int) -> "RngStream":
        return RngStream(self.root_seed, self.path + tuple(int(i) for i in index))

    def seed_sequence(self) -> np.random.SeedSequence:
        return np.random.SeedSequence(
            entropy=self.root_seed & _MASK64, spawn_key=self.path
        )

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(self.seed_sequence()))

    def uint64s(self, n: int) -> np.ndarray:
        """First ``n`` raw 64-bit values of the stream."""
        return self.generator().integers(0, _MASK64, size=n, dtype=np.uint64, endpoint=True)
