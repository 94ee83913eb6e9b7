"""Counter-based random source with reproducible, independent substreams.

Every draw in the package comes from a :class:`RandomSource`.  A source is
identified by ``(seed, stream)``; the underlying generator is Philox4x64-10
keyed by that pair, so the raw 64-bit word sequence is fixed by the pair and
any Philox implementation reproduces it.  Committed test vectors live in
``data/rng_vectors.json``.

Derived quantities are defined on the raw words, not on numpy's helpers:

* ``random()``   -> ``(word >> 11) * 2**-53`` in ``[0, 1)``
* ``bits(n)``    -> the low ``n`` bits of successive words (little-endian)
* ``below(m)``   -> ``word % m`` with rejection of ``word >= (2**64 // m) * m``
* ``child(i)``   -> ``RandomSource(seed, mix(stream, i))``
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
_BLOCK = 256


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def mix(stream: int, child: int) -> int:
    """Stream id of substream ``child`` under ``stream``."""
    return splitmix64((stream ^ splitmix64(child & MASK64)) & MASK64)


class RandomSource:
    __slots__ = ("seed", "stream", "_gen", "_buf", "_pos")

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed) & MASK64
        self.stream = int(stream) & MASK64
        key = np.array([self.seed, self.stream], dtype=np.uint64)
        self._gen = np.random.Philox(key=key)
        self._buf: list[int] = []
        self._pos = 0

    def __repr__(self) -> str:
        return f"RandomSource(seed={self.seed}, stream={self.stream:#x})"

    def child(self, index: int) -> RandomSource:
        return RandomSource(self.seed, mix(self.stream, index))

    # -- raw words ---------------------------------------------------------

    def word(self) -> int:
        if self._pos >= len(self._buf):
            self._buf = self._gen.random_raw(_BLOCK).tolist()
            self._pos = 0
        w = self._buf[self._pos]
        self._pos += 1
        return w

    def words(self, size: int) -> np.ndarray:
        """``size`` consecutive raw words as a uint64 array."""
        rest = self._buf[self._pos:]
        if len(rest) >= size:
            self._pos += size
            return np.array(rest[:size], dtype=np.uint64)
        self._buf, self._pos = [], 0
        fresh = self._gen.random_raw(size - len(rest))
        if not rest:
            return fresh
        return np.concatenate([np.array(rest, dtype=np.uint64), fresh])

    # -- scalar draws ------------------------------------------------------

    def random(self) -> float:
        return (self.word() >> 11) * 1.1102230246251565e-16

    def bits(self, n: int) -> int:
        out = 0
        shift = 0
        while n > 0:
            take = 64 if n >= 64 else n
            out |= (self.word() & ((1 << take) - 1)) << shift
            shift += take
            n -= take
        return out

    def bit(self) -> int:
        return self.word() & 1

    def below(self, m: int) -> int:
        if m <= 0:
            raise ValueError("below() needs m >= 1")
        limit = ((1 << 64) // m) * m
        while True:
            w = self.word()
            if w < limit:
                return w % m

    def bernoulli(self, p: float) -> int:
        return 1 if self.random() < p else 0

    # -- array draws -------------------------------------------------------

    def random_array(self, size: int) -> np.ndarray:
        return (self.words(size) >> np.uint64(11)).astype(np.float64) * 1.1102230246251565e-16

    def below_array(self, m: int, size: int) -> np.ndarray:
        """Uniform integers in ``[0, m)``; tiny modulo bias accepted for vector use."""
        if m <= 0:
            raise ValueError("below_array() needs m >= 1")
        return (self.words(size) % np.uint64(m)).astype(np.int64)
