"""Negative-sample sources.

:class:`Reservoir` keeps a fixed-size uniform sample of the token *occurrence*
stream, so a single uniform draw from its slots approximates the unigram
distribution in O(1).  :class:`AliasTable` samples the exact smoothed
distribution ``f(d)**alpha`` and doubles as the reference the reservoir is
checked against.
"""
from __future__ import annotations

import numpy as np

from . import _kernels as K
from .vocab import Vocabulary

DEFAULT_CAPACITY = 100_000


class EmptyReservoir(RuntimeError):
    pass


def seed_state(seed: int) -> np.ndarray:
    """One-element uint64 generator state derived from an integer seed."""
    return np.random.SeedSequence(seed).generate_state(1, np.uint64)


class Reservoir:
    def __init__(self, capacity: int = DEFAULT_CAPACITY, seed: int = 0,
                 rng: np.ndarray | None = None):
        if capacity < 1:
            raise ValueError("reservoir capacity must be >= 1")
        self.capacity = int(capacity)
        self.slots = np.zeros(self.capacity, dtype=np.int64)
        self.seen = np.zeros(1, dtype=np.int64)
        self.rng = seed_state(seed) if rng is None else rng

    @property
    def n_seen(self) -> int:
        return int(self.seen[0])

    def __len__(self) -> int:
        return min(self.n_seen, self.capacity)

    def contents(self) -> np.ndarray:
        return self.slots[: len(self)].copy()

    def offer(self, token_id: int) -> None:
        K.reservoir_offer(self.slots, self.seen, self.rng, np.int64(token_id))

    def offer_many(self, token_ids) -> None:
        K.reservoir_offer_many(self.slots, self.seen, self.rng,
                               np.ascontiguousarray(token_ids, dtype=np.int64))

    def draw(self, count: int, rng: np.ndarray | None = None) -> np.ndarray:
        """``count`` independent uniform draws (with replacement) from the slots."""
        if self.n_seen == 0:
            raise EmptyReservoir("no tokens offered yet")
        out = np.empty(count, dtype=np.int64)
        K.reservoir_draw_many(self.slots, self.seen, self.rng if rng is None else rng, out)
        return out


class AliasTable:
    """Walker/Vose alias table over vocabulary ids."""

    def __init__(self, weights):
        w = np.ascontiguousarray(weights, dtype=np.float64)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("weights must be a non-empty vector")
        if not np.all(np.isfinite(w)) or np.any(w < 0) or w.sum() <= 0:
            raise ValueError("weights must be finite, nonnegative, not all zero")
        self.prob = np.empty(w.size, dtype=np.float64)
        self.alias = np.empty(w.size, dtype=np.int64)
        K.alias_build(w, self.prob, self.alias)

    def __len__(self) -> int:
        return self.prob.size

    def implied_distribution(self) -> np.ndarray:
        """Exact distribution encoded by the table (for verification)."""
        n = self.prob.size
        p = self.prob.copy()
        np.add.at(p, self.alias, 1.0 - self.prob)
        return p / n

    def draw(self, count: int, rng: np.ndarray) -> np.ndarray:
        out = np.empty(count, dtype=np.int64)
        K.alias_draw_many(self.prob, self.alias, rng, out)
        return out


def alias_rebuild(vocab: Vocabulary, alpha: float = 0.75) -> AliasTable:
    return AliasTable(vocab.smoothed_weights(alpha))


def alias_draw(table: AliasTable, rng: np.ndarray) -> int:
    return int(K.alias_draw_one(table.prob, table.alias, rng))
