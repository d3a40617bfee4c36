"""Portable counter-based random streams.

The generator is SplitMix64 used in counter mode, so a stream can be
reproduced bit-for-bit in any language with 64-bit unsigned arithmetic:

    state_k = seed + (k + 1) * 0x9E3779B97F4A7C15        (mod 2**64)
    z = state_k
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9             (mod 2**64)
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB             (mod 2**64)
    out_k = z ^ (z >> 31)

Uniform doubles are ``(out_k >> 11) * 2**-53`` in [0, 1). Standard normals
use Box-Muller on consecutive pairs ``(u1, u2)`` with ``u1`` shifted to
(0, 1]:  ``r = sqrt(-2 log u1)``, emitting ``r cos(2 pi u2)`` then
``r sin(2 pi u2)``. A child stream for integer ``key`` is seeded with
``mix(seed ^ mix(key))`` where ``mix`` is the output function above applied
to its argument.
"""

from __future__ import annotations

import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_TWO_53 = 2.0**-53


def _mix(z: np.ndarray) -> np.ndarray:
    z = z.astype(np.uint64, copy=True)
    with np.errstate(over="ignore"):
        z ^= z >> np.uint64(30)
        z *= _M1
        z ^= z >> np.uint64(27)
        z *= _M2
        z ^= z >> np.uint64(31)
    return z


def mix64(value: int) -> int:
    return int(_mix(np.array([value % 2**64], dtype=np.uint64))[0])


class SplitMix64:
    """Seedable SplitMix64 stream with a monotone counter."""

    def __init__(self, seed: int):
        if seed < 0:
            raise ValueError("seed must be a non-negative integer")
        self.seed = int(seed) % 2**64
        self.counter = 0

    def next_uint64(self, size: int) -> np.ndarray:
        k = np.arange(self.counter + 1, self.counter + 1 + size, dtype=np.uint64)
        self.counter += size
        with np.errstate(over="ignore"):
            state = np.uint64(self.seed) + k * GOLDEN
        return _mix(state)

    def uniform(self, size: int) -> np.ndarray:
        return (self.next_uint64(size) >> np.uint64(11)).astype(np.float64) * _TWO_53

    def standard_normal(self, shape) -> np.ndarray:
        shape = (shape,) if np.isscalar(shape) else tuple(shape)
        n = int(np.prod(shape))
        pairs = (n + 1) // 2
        u = self.uniform(2 * pairs).reshape(pairs, 2)
        u1 = 1.0 - u[:, 0]  # (0, 1]
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u[:, 1]
        out = np.column_stack([r * np.cos(theta), r * np.sin(theta)]).ravel()
        return out[:n].reshape(shape)

    def spawn(self, key: int) -> "SplitMix64":
        return SplitMix64(mix64(self.seed ^ mix64(key)))


def orthogonal_matrix(stream: SplitMix64, d: int) -> np.ndarray:
    """Orthogonal factor of a Gaussian matrix, with sign-fixed QR (diag(R) > 0)."""
    z = stream.standard_normal((d, d))
    q, r = np.linalg.qr(z)
    return q * np.sign(np.diag(r))
