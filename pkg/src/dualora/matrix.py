"""Dense float64 matrices and the primitives the rest of the package composes.

A "matrix" here is a 2-D ``numpy.ndarray`` of dtype float64. The helpers in this
module add explicit shape checks so that a mismatch fails loudly with both
shapes in the message instead of silently broadcasting.

Random draws come from :class:`RngStream`, a counter-based SplitMix64 stream
with Box-Muller normals. Both steps are simple enough to port to any language,
so a seed fully determines every matrix the package ever initializes.
"""

from __future__ import annotations

import math

import numpy as np

Matrix = np.ndarray

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


def as_matrix(value) -> Matrix:
    """Coerce ``value`` to a contiguous 2-D float64 array."""
    m = np.ascontiguousarray(value, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got ndim={m.ndim}")
    if m.shape[0] < 1 or m.shape[1] < 1:
        raise ValueError(f"matrix dimensions must be positive, got {m.shape}")
    return m


def _check_same_shape(op: str, a: Matrix, b: Matrix) -> None:
    if a.shape != b.shape:
        raise ValueError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def matmul(lhs: Matrix, rhs: Matrix) -> Matrix:
    if lhs.ndim != 2 or rhs.ndim != 2 or lhs.shape[1] != rhs.shape[0]:
        raise ValueError(f"matmul: cannot multiply {lhs.shape} by {rhs.shape}")
    return lhs @ rhs


def hadamard(a: Matrix, b: Matrix) -> Matrix:
    _check_same_shape("hadamard", a, b)
    return a * b


def relu(m: Matrix) -> Matrix:
    # np.maximum(m, 0) keeps -0.0 for m == -0.0; the mask form gives +0.0 everywhere
    return np.where(m > 0, m, 0.0)


def abs_act(m: Matrix) -> Matrix:
    return np.abs(m)


def sigmoid_act(m: Matrix) -> Matrix:
    # split by sign so exp never overflows
    out = np.empty_like(m, dtype=np.float64)
    pos = m >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-m[pos]))
    e = np.exp(m[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _splitmix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


class RngStream:
    """Counter-based SplitMix64 generator.

    Draw ``i`` (1-based, counting every 64-bit word ever produced) is
    ``mix(seed + i * 0x9E3779B97F4A7C15 mod 2**64)`` with the standard
    SplitMix64 finalizer. Uniforms use the top 53 bits mapped to (0, 1];
    normals use Box-Muller on consecutive uniform pairs ``(u1, u2)``, emitting
    ``r*cos(2*pi*u2)`` then ``r*sin(2*pi*u2)`` with ``r = sqrt(-2 ln u1)``.
    """

    algorithm = "splitmix64-boxmuller"

    def __init__(self, seed: int):
        if not 0 <= int(seed) <= _MASK64:
            raise ValueError(f"seed must fit in 64 unsigned bits, got {seed}")
        self.seed = int(seed)
        self.counter = 0

    def next_u64(self, n: int) -> np.ndarray:
        idx = np.arange(self.counter + 1, self.counter + n + 1, dtype=np.uint64)
        self.counter += n
        with np.errstate(over="ignore"):
            return _splitmix(np.uint64(self.seed) + idx * _GOLDEN)

    def uniform(self, n: int) -> np.ndarray:
        """``n`` floats in (0, 1]."""
        bits = self.next_u64(n) >> np.uint64(11)
        return (bits.astype(np.float64) + 1.0) * 2.0**-53

    def normal(self, n: int) -> np.ndarray:
        pairs = (n + 1) // 2
        u = self.uniform(2 * pairs)
        r = np.sqrt(-2.0 * np.log(u[0::2]))
        theta = 2.0 * math.pi * u[1::2]
        out = np.empty(2 * pairs)
        out[0::2] = r * np.cos(theta)
        out[1::2] = r * np.sin(theta)
        return out[:n]

    def signs(self, n: int) -> np.ndarray:
        """``n`` independent fair draws from {-1.0, +1.0} (top bit of each word)."""
        top = self.next_u64(n) >> np.uint64(63)
        return np.where(top == 1, 1.0, -1.0)

    def spawn(self, key: int) -> "RngStream":
        """Independent child stream; does not advance this stream."""
        z = np.array([(self.seed + (int(key) + 1) * int(_GOLDEN)) & _MASK64], dtype=np.uint64)
        with np.errstate(over="ignore"):
            child = int(_splitmix(z)[0])
        return RngStream(child)


def gaussian(rows: int, cols: int, std: float, rng: RngStream) -> Matrix:
    """i.i.d. N(0, std**2) matrix, filled row-major from ``rng``."""
    if not std > 0:
        raise ValueError(f"std must be positive, got {std}")
    if rows < 1 or cols < 1:
        raise ValueError(f"matrix dimensions must be positive, got ({rows}, {cols})")
    return std * rng.normal(rows * cols).reshape(rows, cols)


def random_signs(rows: int, cols: int, rng: RngStream) -> Matrix:
    return rng.signs(rows * cols).reshape(rows, cols)
