"""Seedable counter-based random number generation for reproducible runs.

Every stochastic component in this package (environments, learners, the
experiment harness) draws from :class:`TraceRng`, a SplitMix64 generator.
SplitMix64 is counter-based: draw ``k`` of a stream seeded with ``s`` is
``mix64(s + (k + 1) * GOLDEN)``, so any implementation (the pure-Python
learner, the numba-compiled runner, or a port in another language) that
follows the same draw protocol produces bit-identical traces.

Draw protocol
-------------
All downstream sampling is built from ``uniform()`` (one 64-bit draw mapped
to [0, 1) via the top 53 bits) in a fixed order:

* ``randint(n)`` -- one uniform; returns ``int(u * n)``.
* categorical sampling from probabilities ``p_0..p_{k-1}`` -- one uniform;
  return the first index whose running cumulative sum exceeds ``u``.
* Bernoulli(p) -- one uniform; success iff ``u < p``.
* epsilon-greedy over values -- one uniform ``u``; if ``u < eps`` one more
  ``randint(n)``; otherwise the argmax (exact float equality defines ties),
  with one extra ``randint`` over the tied set only when two or more entries
  tie.

Run ``i`` of an experiment is seeded with ``base_seed + i``.
"""

from __future__ import annotations

_MASK = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_INV53 = 2.0 ** -53


def mix64(z: int) -> int:
    """SplitMix64 finalizer: avalanche a 64-bit integer."""
    z &= _MASK
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return z ^ (z >> 31)


class TraceRng:
    """SplitMix64 stream with the package-wide draw protocol."""

    __slots__ = ("state",)

    def __init__(self, seed: int):
        self.state = seed & _MASK

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN) & _MASK
        return mix64(self.state)

    def uniform(self) -> float:
        """One draw in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * _INV53

    def randint(self, n: int) -> int:
        """One draw in {0..n-1}; n must be small relative to 2**53."""
        return int(self.uniform() * n)

    def bernoulli(self, p: float) -> bool:
        return self.uniform() < p

    def categorical(self, probs) -> int:
        """Sample an index from a probability vector (one uniform)."""
        u = self.uniform()
        acc = 0.0
        last = 0
        for i, p in enumerate(probs):
            acc += p
            last = i
            if u < acc:
                return i
        return last

    def epsilon_greedy(self, values, eps: float) -> int:
        """Epsilon-greedy pick over a value row, ties broken uniformly."""
        if self.uniform() < eps:
            return self.randint(len(values))
        best = values[0]
        for v in values:
            if v > best:
                best = v
        ties = [i for i, v in enumerate(values) if v == best]
        if len(ties) == 1:
            return ties[0]
        return ties[self.randint(len(ties))]
