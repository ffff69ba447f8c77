"""Dense float64 arithmetic, stable softmax and seeded random streams.

Tensors are plain ``numpy.ndarray`` objects of dtype float64 with rank <= 2,
stored row-major.  Everything else in the package goes through the helpers
here so shape and finiteness checks happen in one place.
"""

from __future__ import annotations

import zlib

import numpy as np

DTYPE = np.float64


class DimensionError(ValueError):
    """Raised when tensor shapes do not line up."""


class InputError(ValueError):
    """Raised for invalid numeric input (NaN/Inf, empty rows, bad labels)."""


def as_tensor(x, ndim: int | None = None, name: str = "tensor") -> np.ndarray:
    arr = np.ascontiguousarray(x, dtype=DTYPE)
    if ndim is not None and arr.ndim != ndim:
        raise DimensionError(f"{name} must have rank {ndim}, got shape {arr.shape}")
    if arr.ndim > 2:
        raise DimensionError(f"{name} rank must be <= 2, got shape {arr.shape}")
    return arr


def check_finite(x: np.ndarray, name: str = "tensor") -> None:
    if not np.all(np.isfinite(x)):
        raise InputError(f"{name} contains non-finite values")


def matmul(a, b) -> np.ndarray:
    """Matrix product of an (M, P) and a (P, Q) tensor."""
    a = as_tensor(a, 2, "a")
    b = as_tensor(b, 2, "b")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"cannot multiply shapes {a.shape} and {b.shape}")
    return a @ b


def log_sum_exp(row) -> float:
    row = as_tensor(row, 1, "row")
    if row.size == 0:
        raise InputError("log_sum_exp of an empty row")
    check_finite(row, "row")
    m = row.max()
    return float(m + np.log(np.exp(row - m).sum()))


def log_sum_exp_rows(z: np.ndarray) -> np.ndarray:
    """Row-wise log-sum-exp of an (N, K) array; -inf entries are allowed."""
    m = z.max(axis=1, keepdims=True)
    return (m + np.log(np.exp(z - m).sum(axis=1, keepdims=True)))[:, 0]


def log_softmax(logits) -> np.ndarray:
    z = as_tensor(logits, 2, "logits")
    check_finite(z, "logits")
    return z - log_sum_exp_rows(z)[:, None]


def softmax(logits) -> np.ndarray:
    """Row-wise softmax of (N, K) logits with the row max subtracted first."""
    z = as_tensor(logits, 2, "logits")
    if z.shape[1] < 2:
        raise InputError(f"softmax needs K >= 2 classes, got shape {z.shape}")
    check_finite(z, "logits")
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def argmax_rows(x: np.ndarray) -> np.ndarray:
    # np.argmax returns the first maximal index, i.e. the lowest class on ties
    return np.argmax(x, axis=1)


class Rng:
    """Seeded PCG64 generator with named, independent sub-streams.

    ``Rng(seed).child("init")`` always yields the same stream for the same
    seed and name, regardless of what other children were created, so adding
    a consumer never perturbs the draws of existing ones.
    """

    def __init__(self, seed: int, _key: tuple[int, ...] = ()):
        if not 0 <= int(seed) < 2**64:
            raise InputError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = int(seed)
        self._key = _key
        self._gen = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(self.seed, spawn_key=_key))
        )

    def child(self, name: str) -> "Rng":
        return Rng(self.seed, self._key + (zlib.crc32(name.encode("utf-8")),))

    def normal(self, size, scale: float = 1.0) -> np.ndarray:
        return self._gen.normal(0.0, scale, size=size)

    def uniform(self, low: float, high: float, size) -> np.ndarray:
        return self._gen.uniform(low, high, size=size)

    def integers(self, low: int, high: int, size=None):
        return self._gen.integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    @property
    def generator(self) -> np.random.Generator:
        return self._gen
