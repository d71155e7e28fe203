"""Seeded, portable random number generation.

All stochastic behaviour in the package flows through ``Rng`` so that runs are
bit-reproducible across platforms and library versions. The generator is
xoshiro256** (Blackman & Vigna, public domain) seeded through splitmix64.
Uniform doubles use the usual 53-bit construction. Named substreams are
derived by hashing, so independent stages (parameter init, batch shuffling,
projection heads, ...) never perturb each other's draws.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _splitmix64(state: int):
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK64


def derive_seed(master_seed: int, tag: str) -> int:
    """Deterministically derive a substream seed from a master seed and a label."""
    digest = hashlib.sha256(f"{master_seed & _MASK64}:{tag}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


class Rng:
    """xoshiro256** stream with convenience samplers over numpy arrays."""

    def __init__(self, seed: int):
        self.seed = seed & _MASK64
        sm = self.seed
        s = []
        for _ in range(4):
            sm, word = _splitmix64(sm)
            s.append(word)
        self._s = s

    def spawn(self, tag: str) -> "Rng":
        """Independent substream identified by ``tag``."""
        return Rng(derive_seed(self.seed, tag))

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self._s
        result = (_rotl((s1 * 5) & _MASK64, 7) * 9) & _MASK64
        t = (s1 << 17) & _MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self._s = [s0, s1, s2, s3]
        return result

    def random(self) -> float:
        """Uniform double in [0, 1)."""
        return (self.next_u64() >> 11) * (2.0 ** -53)

    def uniform(self, low: float, high: float, shape) -> np.ndarray:
        """Array of uniforms in [low, high)."""
        n = int(np.prod(shape)) if shape else 1
        out = np.empty(n, dtype=np.float64)
        for i in range(n):
            out[i] = self.random()
        return (low + (high - low) * out).reshape(shape)

    def integers(self, n: int) -> int:
        """Unbiased integer in [0, n) via rejection sampling."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = _MASK64 - (_MASK64 + 1) % n
        while True:
            x = self.next_u64()
            if x <= limit:
                return x % n

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.integers(i + 1)
            items[i], items[j] = items[j], items[i]

    def permutation(self, n: int) -> np.ndarray:
        idx = list(range(n))
        self.shuffle(idx)
        return np.asarray(idx, dtype=np.int64)

    def glorot_uniform(self, fan_in: int, fan_out: int) -> np.ndarray:
        """Weight matrix of shape (fan_in, fan_out) with the Glorot bound."""
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        return self.uniform(-bound, bound, (fan_in, fan_out))

    def standard_normal(self, shape) -> np.ndarray:
        """Box-Muller normals (used for random orthogonal projections)."""
        n = int(np.prod(shape)) if shape else 1
        m = (n + 1) // 2
        u1 = np.empty(m)
        u2 = np.empty(m)
        for i in range(m):
            # avoid log(0)
            u1[i] = 1.0 - self.random()
            u2[i] = self.random()
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.concatenate([r * np.cos(2 * np.pi * u2), r * np.sin(2 * np.pi * u2)])
        return z[:n].reshape(shape)
