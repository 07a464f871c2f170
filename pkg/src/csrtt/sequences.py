"""Zadoff-Chu and gold/QPSK sequence primitives.

Sequences are plain 1-D complex numpy arrays. All functions are pure.
"""

from dataclasses import dataclass
from functools import lru_cache
from math import isqrt
from typing import Sequence

import numpy as np

from .errors import EmptyInput, InvalidParams, LengthMismatch

# Gold generator constants (cellular pseudo-random sequence, length-31 registers)
GOLD_WARMUP = 1600
GOLD_REG_LEN = 31


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    if n % 2 == 0:
        return n == 2
    for d in range(3, isqrt(n) + 1, 2):
        if n % d == 0:
            return False
    return True


@dataclass(frozen=True)
class ZcParams:
    n_zc: int
    q: int

    def __post_init__(self):
        if self.n_zc % 2 == 0 or not is_prime(self.n_zc):
            raise InvalidParams(f"n_zc must be an odd prime, got {self.n_zc}")
        if not 1 <= self.q <= self.n_zc - 1:
            raise InvalidParams(f"root q={self.q} outside [1, {self.n_zc - 1}]")


@dataclass(frozen=True)
class MultiRootConfig:
    n_zc: int
    roots: tuple

    def __post_init__(self):
        roots = tuple(int(r) for r in self.roots)
        object.__setattr__(self, "roots", roots)
        if len(roots) < 2:
            raise InvalidParams("multi-root configuration needs at least two roots")
        for r in roots:
            ZcParams(self.n_zc, r)
        for i, a in enumerate(roots):
            for b in roots[i + 1:]:
                if (a - b) % self.n_zc == 0:
                    raise InvalidParams(f"roots {a} and {b} coincide mod {self.n_zc}")

    def params(self, index: int) -> ZcParams:
        return ZcParams(self.n_zc, self.roots[index])


def zc_generate(p: ZcParams) -> np.ndarray:
    """Root-q Zadoff-Chu sequence x_q[n] = exp(-j*pi*q*n*(n+1)/N)."""
    n = np.arange(p.n_zc, dtype=np.int64)
    # reduce the integer phase numerator mod 2N before going to float
    num = (p.q * n * (n + 1)) % (2 * p.n_zc)
    return np.exp(-1j * np.pi * num / p.n_zc)


@lru_cache(maxsize=64)
def _zc_dft_cached(n_zc: int, q: int) -> np.ndarray:
    out = np.fft.fft(zc_generate(ZcParams(n_zc, q)), norm="ortho")
    out.flags.writeable = False
    return out


def zc_dft(p: ZcParams) -> np.ndarray:
    """Orthonormal length-N DFT of the base sequence (unit modulus for prime N)."""
    return _zc_dft_cached(p.n_zc, p.q)


def cyclic_shift(s: np.ndarray, nu: int) -> np.ndarray:
    """out[n] = s[(n - nu) mod len(s)]."""
    s = np.asarray(s)
    if len(s) == 0:
        return s.copy()
    return np.roll(s, int(nu) % len(s))


def cyclic_xcorr(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Normalized cyclic correlation out[v] = (1/N) sum_n a[n] conj(b[(n+v) mod N]).

    Evaluated through the DFT in O(N log N).
    """
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape != b.shape or a.ndim != 1:
        raise LengthMismatch(f"cannot correlate shapes {a.shape} and {b.shape}")
    n = len(a)
    if n == 0:
        raise EmptyInput("empty sequences")
    # ifft(conj(A) B)[v] = sum_n conj(a[n]) b[n+v]
    return np.conj(np.fft.ifft(np.conj(np.fft.fft(a)) * np.fft.fft(b))) / n


def cyclic_xcorr_direct(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """O(N^2) reference for :func:`cyclic_xcorr`."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape != b.shape or a.ndim != 1:
        raise LengthMismatch(f"cannot correlate shapes {a.shape} and {b.shape}")
    n = len(a)
    idx = (np.arange(n)[None, :] + np.arange(n)[:, None]) % n
    return (a[None, :] * np.conj(b[idx])).sum(axis=1) / n


@lru_cache(maxsize=256)
def _gold_bits(c_init: int, length: int) -> tuple:
    total = GOLD_WARMUP + length
    x1 = [0] * (total + GOLD_REG_LEN)
    x2 = [0] * (total + GOLD_REG_LEN)
    x1[0] = 1
    for i in range(GOLD_REG_LEN):
        x2[i] = (c_init >> i) & 1
    for n in range(total):
        x1[n + 31] = x1[n + 3] ^ x1[n]
        x2[n + 31] = x2[n + 3] ^ x2[n + 2] ^ x2[n + 1] ^ x2[n]
    return tuple(x1[n + GOLD_WARMUP] ^ x2[n + GOLD_WARMUP] for n in range(length))


def gold_sequence(c_init: int, length: int) -> np.ndarray:
    """Pseudo-random bits from two length-31 LFSRs combined after a 1600-step warm-up.

    Register 1 starts at 1,0,0,...; register 2 holds the 31-bit seed ``c_init``.
    """
    if length < 1:
        raise InvalidParams("length must be >= 1")
    c_init = int(c_init) & ((1 << GOLD_REG_LEN) - 1)
    return np.array(_gold_bits(c_init, int(length)), dtype=np.uint8)


def qpsk_map(bits: Sequence[int]) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.int64)
    if bits.ndim != 1 or len(bits) % 2:
        raise InvalidParams("QPSK mapping needs an even number of bits")
    b = 1 - 2 * bits.reshape(-1, 2)
    return (b[:, 0] + 1j * b[:, 1]) / np.sqrt(2)
