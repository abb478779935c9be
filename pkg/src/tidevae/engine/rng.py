"""Seeded random source: PCG32 (XSH-RR) with Box-Muller Gaussians.

The generator keeps a 64-bit LCG state advanced as

    state <- state * 6364136223846793005 + inc   (mod 2**64)

and emits 32 bits per step from the *pre-advance* state:

    xorshifted = uint32(((state >> 18) ^ state) >> 27)
    rot        = state >> 59
    output     = rotr32(xorshifted, rot)

Seeding follows the reference ``pcg32_srandom_r``: ``inc = (seq << 1) | 1``,
step once, add the seed, step again.

Bulk draws are vectorised with LCG jump-ahead: the k-th state after ``s`` is
``A_k * s + C_k`` with ``A_k = a**k`` and ``C_k = inc * (1 + a + ... + a**(k-1))``,
all mod 2**64, which numpy's wrapping uint64 arithmetic gives for free.
"""

from __future__ import annotations

import numpy as np

MULTIPLIER = 6364136223846793005
DEFAULT_STREAM = 0xDA3E39CB94B95BDB
_MASK64 = (1 << 64) - 1
_BLOCK = 1 << 14

_U64 = np.uint64


def _jump_tables(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Return (A_k, S_k) for k = 0..n where S_k = sum_{i<k} a**i, mod 2**64."""
    powers = np.empty(n + 1, dtype=np.uint64)
    powers[0] = 1
    powers[1:] = MULTIPLIER
    with np.errstate(over="ignore"):
        powers = np.cumprod(powers, dtype=np.uint64)
        sums = np.zeros(n + 1, dtype=np.uint64)
        sums[1:] = np.cumsum(powers[:-1], dtype=np.uint64)
    return powers, sums


_POW, _SUM = _jump_tables(_BLOCK)


def _output(states: np.ndarray) -> np.ndarray:
    xorshifted = (((states >> _U64(18)) ^ states) >> _U64(27)) & _U64(0xFFFFFFFF)
    rot = states >> _U64(59)
    left = (_U64(32) - rot) & _U64(31)
    out = (xorshifted >> rot) | (xorshifted << left)
    return (out & _U64(0xFFFFFFFF)).astype(np.uint32)


class Rng:
    """Deterministic PCG32 stream.

    Identical ``(seed, stream)`` pairs yield identical draw sequences on any
    platform, since every step is exact integer arithmetic.
    """

    def __init__(self, seed: int, stream: int = DEFAULT_STREAM):
        self.seed = int(seed) & _MASK64
        self.inc = ((int(stream) << 1) | 1) & _MASK64
        self.state = 0
        self._step()
        self.state = (self.state + self.seed) & _MASK64
        self._step()

    def _step(self) -> None:
        self.state = (self.state * MULTIPLIER + self.inc) & _MASK64

    def next_u32(self) -> int:
        old = self.state
        self._step()
        xorshifted = (((old >> 18) ^ old) >> 27) & 0xFFFFFFFF
        rot = old >> 59
        return ((xorshifted >> rot) | (xorshifted << ((-rot) & 31))) & 0xFFFFFFFF

    def u32(self, n: int) -> np.ndarray:
        """Draw ``n`` raw 32-bit outputs, identical to ``n`` calls of next_u32."""
        out = np.empty(n, dtype=np.uint32)
        inc = _U64(self.inc)
        pos = 0
        while pos < n:
            m = min(_BLOCK, n - pos)
            s = _U64(self.state)
            with np.errstate(over="ignore"):
                states = _POW[:m] * s + _SUM[:m] * inc
                out[pos:pos + m] = _output(states)
                self.state = int(_POW[m] * s + _SUM[m] * inc)
            pos += m
        return out

    def uniform(self, n: int, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        """Float64 draws in the open interval (low, high) at 32-bit resolution."""
        u = (self.u32(n).astype(np.float64) + 0.5) * (1.0 / 4294967296.0)
        return low + (high - low) * u

    def normal(self, n: int) -> np.ndarray:
        """Box-Muller: pair (u1, u2) gives r*cos(2 pi u2), r*sin(2 pi u2), in that order."""
        pairs = (n + 1) // 2
        u = self.uniform(2 * pairs)
        r = np.sqrt(-2.0 * np.log(u[0::2]))
        theta = 2.0 * np.pi * u[1::2]
        z = np.empty(2 * pairs)
        z[0::2] = r * np.cos(theta)
        z[1::2] = r * np.sin(theta)
        return z[:n]

    def permutation(self, n: int) -> np.ndarray:
        return np.argsort(self.u32(n), kind="stable")

    def fork(self) -> "Rng":
        """Independent child stream seeded from two draws of this one."""
        hi, lo = (int(v) for v in self.u32(2))
        return Rng((hi << 32) | lo, stream=self.inc >> 1)

    def __repr__(self) -> str:
        return f"Rng(state=0x{self.state:016x}, inc=0x{self.inc:016x})"


def sample_standard_normal(rng: Rng, shape, dtype=np.float64) -> np.ndarray:
    """I.i.d. N(0, 1) draws filled in row-major order."""
    shape = tuple(int(s) for s in np.atleast_1d(shape))
    n = int(np.prod(shape)) if shape else 1
    return rng.normal(n).reshape(shape).astype(dtype, copy=False)
