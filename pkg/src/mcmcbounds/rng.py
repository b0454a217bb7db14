"""Portable seeded random streams.

The generator identity is part of the reproducibility contract:

  * per-stream generator: xoshiro256++ (period 2^256 - 1),
  * seed expansion and stream splitting: SplitMix64.

A 64-bit seed is expanded into the four xoshiro words by four successive
SplitMix64 outputs.  Independent streams (parallel chains, the estimation
run vs. the evaluation runs) are derived by folding data words into a seed
with the SplitMix64 finalizer, never by ``seed + i``, so streams are
decorrelated.

Three implementations produce bit-identical output: the scalar Python one
here, the vectorized numpy one (`` *_vec`` functions, one row of state per
chain), and the numba twins in ``_jit``.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

# Domain tags for deriving disjoint sub-streams from one base seed.
TAG_ESTIMATION = 0x455354494D415445  # estimation run
TAG_EVALUATION = 0x4556414C52554E53  # evaluation (tail) runs


def mix64(z: int) -> int:
    """SplitMix64 finalizer: advance by GAMMA, then scramble."""
    z = (z + GAMMA) & _MASK
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return z ^ (z >> 31)


def fold_in(seed: int, data: int) -> int:
    """Derive a new 64-bit seed from ``seed`` and a data word.

    Used for per-chain seeds (``fold_in(base_seed, chain_index)``) and for
    domain separation (``fold_in(base_seed, TAG_ESTIMATION)``).
    """
    return mix64((seed & _MASK) ^ mix64(data & _MASK))


def expand_seed(seed: int) -> tuple[int, int, int, int]:
    """Expand a 64-bit seed into the four xoshiro256++ state words."""
    s = seed & _MASK
    out = []
    for _ in range(4):
        s = (s + GAMMA) & _MASK
        z = ((s ^ (s >> 30)) * _MIX1) & _MASK
        z = ((z ^ (z >> 27)) * _MIX2) & _MASK
        out.append(z ^ (z >> 31))
    if not any(out):  # all-zero state is the one forbidden xoshiro state
        out[0] = 1
    return tuple(out)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK


class Xoshiro256pp:
    """Scalar xoshiro256++ stream."""

    __slots__ = ("s0", "s1", "s2", "s3")

    def __init__(self, seed: int):
        self.s0, self.s1, self.s2, self.s3 = expand_seed(seed)

    @classmethod
    def from_state(cls, state) -> "Xoshiro256pp":
        rng = cls.__new__(cls)
        rng.s0, rng.s1, rng.s2, rng.s3 = (int(w) & _MASK for w in state)
        return rng

    @property
    def state(self) -> np.ndarray:
        return np.array([self.s0, self.s1, self.s2, self.s3], dtype=np.uint64)

    def set_state(self, state) -> None:
        self.s0, self.s1, self.s2, self.s3 = (int(w) & _MASK for w in state)

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self.s0, self.s1, self.s2, self.s3
        result = (_rotl((s0 + s3) & _MASK, 23) + s0) & _MASK
        t = (s1 << 17) & _MASK
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self.s0, self.s1, self.s2, self.s3 = s0, s1, s2, s3
        return result

    def uniform(self) -> float:
        """Uniform double in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * 2.0**-53


# ---------------------------------------------------------------------------
# Vectorized twins: one stream per row of a (m, 4) uint64 state matrix.
# ---------------------------------------------------------------------------

_U = np.uint64


def expand_seed_vec(seeds: np.ndarray) -> np.ndarray:
    """Vectorized ``expand_seed``: (m,) uint64 seeds -> (m, 4) states."""
    s = seeds.astype(np.uint64).copy()
    words = np.empty((s.shape[0], 4), dtype=np.uint64)
    for j in range(4):
        s = s + _U(GAMMA)
        z = (s ^ (s >> _U(30))) * _U(_MIX1)
        z = (z ^ (z >> _U(27))) * _U(_MIX2)
        words[:, j] = z ^ (z >> _U(31))
    dead = ~words.any(axis=1)
    words[dead, 0] = 1
    return words


def fold_in_vec(seed: int, data: np.ndarray) -> np.ndarray:
    """Vectorized ``fold_in`` over an array of data words."""
    d = data.astype(np.uint64) + _U(GAMMA)
    z = (d ^ (d >> _U(30))) * _U(_MIX1)
    z = (z ^ (z >> _U(27))) * _U(_MIX2)
    z = z ^ (z >> _U(31))
    s = (_U(seed & _MASK) ^ z) + _U(GAMMA)
    z = (s ^ (s >> _U(30))) * _U(_MIX1)
    z = (z ^ (z >> _U(27))) * _U(_MIX2)
    return z ^ (z >> _U(31))


def next_u64_vec(state: np.ndarray) -> np.ndarray:
    """Advance every row of ``state`` in place; return the outputs."""
    s0 = state[:, 0]
    s1 = state[:, 1]
    s2 = state[:, 2]
    s3 = state[:, 3]
    tmp = s0 + s3
    result = ((tmp << _U(23)) | (tmp >> _U(41))) + s0
    t = s1 << _U(17)
    s2 ^= s0
    s3 ^= s1
    s1 ^= s2
    s0 ^= s3
    s2 ^= t
    state[:, 3] = (s3 << _U(45)) | (s3 >> _U(19))
    return result


def uniform_vec(state: np.ndarray) -> np.ndarray:
    return (next_u64_vec(state) >> _U(11)) * 2.0**-53
