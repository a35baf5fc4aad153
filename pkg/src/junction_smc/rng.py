"""Random draws for the kernels.

Kernels only ever ask for three kinds of draws: a Bernoulli trial, a uniform
integer below ``n``, and a uniform subset of a list (optionally non-empty).
:class:`Stream` serves them from a counter-based Philox generator, so a
particle's randomness is a pure function of ``(seed, replicate, step,
particle)`` and does not depend on evaluation order.  :func:`enumerate_draws`
serves them from a script instead and walks every possible sequence, which is
how the exhaustive oracles obtain exact outcome distributions.
"""

from __future__ import annotations

import itertools
from typing import Callable, Iterator, Sequence

import numpy as np

_MASK64 = (1 << 64) - 1


def philox(seed: int, *counter: int) -> np.random.Generator:
    """Generator positioned at a private counter block.

    The low counter word is left for the generator to advance; the upper three
    words carry the caller's coordinates.
    """
    words = [0, 0, 0, 0]
    for k, c in enumerate(counter[:3]):
        words[k + 1] = int(c) & _MASK64
    key = [int(seed) & _MASK64, int(seed) >> 64 & _MASK64]
    return np.random.Generator(np.random.Philox(key=key, counter=words))


class Stream:
    """Uniform draws consumed from a pre-generated block with overflow."""

    __slots__ = ("_u", "_pos", "_overflow", "_spill")

    def __init__(self, uniforms: Sequence[float] = (), overflow: Callable[[], np.random.Generator] | None = None):
        self._u = list(uniforms)
        self._pos = 0
        self._overflow = overflow
        self._spill = None

    @classmethod
    def from_generator(cls, gen: np.random.Generator) -> "Stream":
        return cls((), lambda: gen)

    @classmethod
    def keyed(cls, seed: int, *coords: int) -> "Stream":
        return cls.from_generator(philox(seed, *coords))

    def uniform(self) -> float:
        if self._pos < len(self._u):
            u = self._u[self._pos]
            self._pos += 1
            return u
        if self._spill is None:
            if self._overflow is None:
                raise RuntimeError("random stream exhausted")
            self._spill = self._overflow()
        return float(self._spill.random())

    def bernoulli(self, p: float) -> bool:
        return self.uniform() < p

    def integer(self, n: int) -> int:
        return min(int(self.uniform() * n), n - 1)

    def subset(self, items: Sequence, nonempty: bool = False) -> list:
        """Uniform subset via one fair coin per item; rejects the empty set if asked."""
        if nonempty and not items:
            raise ValueError("cannot draw a non-empty subset of nothing")
        while True:
            out = [x for x in items if self.uniform() < 0.5]
            if out or not nonempty:
                return out


class _Script:
    __slots__ = ("prefix", "choices", "branches", "prob")

    def __init__(self, prefix):
        self.prefix = prefix
        self.choices: list[int] = []
        self.branches: list[int] = []
        self.prob = 1.0

    def _pick(self, options):
        k = len(self.choices)
        i = self.prefix[k] if k < len(self.prefix) else 0
        self.choices.append(i)
        self.branches.append(len(options))
        value, pr = options[i]
        self.prob *= pr
        return value

    def bernoulli(self, p: float) -> bool:
        return self._pick([(True, p), (False, 1.0 - p)])

    def integer(self, n: int) -> int:
        return self._pick([(k, 1.0 / n) for k in range(n)])

    def subset(self, items, nonempty: bool = False):
        subsets = [
            list(c) for r in range(len(items) + 1) for c in itertools.combinations(items, r) if c or not nonempty
        ]
        return self._pick([(s, 1.0 / len(subsets)) for s in subsets])


def enumerate_draws(fn: Callable) -> Iterator[tuple[object, float]]:
    """Yield ``(fn(script), probability)`` for every sequence of draws.

    ``fn`` must be deterministic given its draws.  Branches with probability
    zero (Bernoulli parameters of 0 or 1) are skipped.
    """
    prefix: list[int] = []
    while True:
        script = _Script(prefix)
        out = fn(script)
        if script.prob > 0:
            yield out, script.prob
        choices, branches = script.choices, script.branches
        i = len(choices) - 1
        while i >= 0 and choices[i] + 1 >= branches[i]:
            i -= 1
        if i < 0:
            return
        prefix = choices[:i] + [choices[i] + 1]


def outcome_distribution(fn: Callable) -> dict:
    """Exact distribution of ``fn``'s (hashable) output."""
    dist: dict = {}
    for out, pr in enumerate_draws(fn):
        dist[out] = dist.get(out, 0.0) + pr
    return dist
