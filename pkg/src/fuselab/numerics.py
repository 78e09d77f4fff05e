"""
Numerics — seeded randomness and dense linear algebra shared by every module.

Matrices are float64 numpy arrays (row-major, C order). NaN is only ever a
missingness sentinel in feature tables; kernels reject it via `as_matrix`.

PRNG: numpy's PCG64 bit generator seeded with a 64-bit integer.
Child streams: a child seed is derived from (parent_seed, stream_id) with

    child = mix64(mix64(parent_seed) XOR (stream_id * GOLDEN mod 2**64))

where mix64 is the SplitMix64 finalizer and GOLDEN = 0x9E3779B97F4A7C15.
Both mix64 and multiplication by an odd constant are bijections on 64-bit
integers, so distinct stream ids of one parent never share a child seed.
Trees, repeats and grid cells each draw from their own derived stream, so the
order in which they are computed never changes their results.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import TypeVar

import numpy as np
from numpy.typing import ArrayLike, NDArray

from fuselab.errors import ArgumentError, DomainError, ShapeError

type Matrix = NDArray[np.float64]
type Vector = NDArray[np.float64]

T = TypeVar("T")

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def mix64(x: int) -> int:
    """SplitMix64 finalizer: a bijective avalanche mix of a 64-bit integer."""
    z = (x + GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(parent_seed: int, stream_id: int) -> int:
    """Derive the 64-bit child seed for `stream_id` of `parent_seed`."""
    if stream_id < 0:
        raise ArgumentError(f"stream_id must be non-negative, got {stream_id}")
    return mix64(mix64(parent_seed & MASK64) ^ ((stream_id * GOLDEN) & MASK64))


@dataclass(slots=True)
class Rng:
    """
    Single-owner seeded generator.

    Never share one instance between concurrent consumers; give each its own
    `child(stream_id)` instead.
    """

    seed: int
    _generator: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if not 0 <= self.seed <= MASK64:
            raise ArgumentError(f"seed must fit in 64 unsigned bits, got {self.seed}")
        self._generator = np.random.Generator(np.random.PCG64(self.seed))

    @property
    def generator(self) -> np.random.Generator:
        return self._generator

    def child(self, stream_id: int) -> Rng:
        return Rng(derive_seed(self.seed, stream_id))


def as_matrix(values: ArrayLike, name: str = "matrix") -> Matrix:
    """Coerce to a finite 2-D float64 array or raise ShapeError/DomainError."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} contains NaN or infinite values")
    return arr


def mat_mul(a: ArrayLike, b: ArrayLike) -> Matrix:
    """Standard matrix product; `a.cols` must equal `b.rows`."""
    left = as_matrix(a, "left operand")
    right = as_matrix(b, "right operand")
    if left.shape[1] != right.shape[0]:
        raise ShapeError(f"cannot multiply {left.shape} by {right.shape}")
    return left @ right


def rng_normal(rng: Rng, n: int, mean: float = 0.0, sd: float = 1.0) -> Vector:
    """n Gaussian draws; sd == 0 yields n copies of mean."""
    if sd < 0:
        raise DomainError(f"sd must be non-negative, got {sd}")
    if n < 0:
        raise ArgumentError(f"n must be non-negative, got {n}")
    if sd == 0:
        return np.full(n, float(mean))
    return rng.generator.normal(loc=mean, scale=sd, size=n)


def permutation(rng: Rng, n: int) -> NDArray[np.int64]:
    """Uniform random permutation of range(n) (numpy's Fisher–Yates shuffle)."""
    order = np.arange(n, dtype=np.int64)
    rng.generator.shuffle(order)
    return order


def seeded_shuffle(rng: Rng, items: Sequence[T]) -> list[T]:
    """Return a uniformly shuffled copy of `items`."""
    return [items[i] for i in permutation(rng, len(items))]
