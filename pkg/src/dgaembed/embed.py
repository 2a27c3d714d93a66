"""Incremental skip-gram with negative sampling over domain documents.

The model grows with the vocabulary: every newly interned token gets a target
row drawn uniformly from ``(-0.5/dim, 0.5/dim)`` and zero context/AdaGrad rows.
A batch is consumed in a single pass (per epoch); nothing from earlier batches
is revisited, only the parameters and the sampler state carry over.

Parameters live in float32 (the on-disk format) while all dot products and
optimizer arithmetic run in float64 inside the compiled kernels.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import Iterable, Sequence

import numpy as np

from . import _kernels as K
from .negsample import DEFAULT_CAPACITY, AliasTable, EmptyReservoir, Reservoir, alias_rebuild
from .preprocess import Document
from .vocab import Vocabulary

SAMPLERS = ("reservoir", "alias")

_NO_ALIAS_P = np.zeros(1, dtype=np.float64)
_NO_ALIAS_I = np.zeros(1, dtype=np.int64)


class OutOfVocabulary(KeyError):
    pass


@dataclass
class EmbedConfig:
    dim: int = 64
    window: int = 5
    negatives: int = 5
    alpha: float = 0.75
    eta0: float = 0.1
    epsilon: float = 1e-8
    epochs_per_batch: int = 1
    sampler: str = "reservoir"
    reservoir_capacity: int = DEFAULT_CAPACITY
    seed: int = 0

    def __post_init__(self):
        if self.dim < 1 or self.window < 1 or self.negatives < 1:
            raise ValueError("dim, window and negatives must be >= 1")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must be in (0, 1]")
        if not self.eta0 >= 0.0 or not self.epsilon > 0.0:
            raise ValueError("eta0 must be >= 0 and epsilon > 0")
        if self.epochs_per_batch < 1:
            raise ValueError("epochs_per_batch must be >= 1")
        if self.sampler not in SAMPLERS:
            raise ValueError(f"sampler must be one of {SAMPLERS}")
        if self.reservoir_capacity < 1:
            raise ValueError("reservoir_capacity must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "EmbedConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})


@dataclass(frozen=True)
class DomainVector:
    token: str
    vector: np.ndarray


class EmbeddingModel:
    def __init__(self, config: EmbedConfig | None = None):
        self.config = config or EmbedConfig()
        self.vocab = Vocabulary()
        cap = 256
        dim = self.config.dim
        self._T = np.zeros((cap, dim), dtype=np.float32)
        self._C = np.zeros((cap, dim), dtype=np.float32)
        self._Gt = np.zeros((cap, dim), dtype=np.float32)
        self._Gc = np.zeros((cap, dim), dtype=np.float32)
        states = np.random.SeedSequence(self.config.seed).generate_state(2, np.uint64)
        self.rng = states[0:1].copy()
        self.reservoir = Reservoir(self.config.reservoir_capacity, rng=states[1:2].copy())
        self.batches_seen = 0
        self.pair_updates = 0
        self._alias: AliasTable | None = None

    # -- storage -------------------------------------------------------------

    def __len__(self) -> int:
        return len(self.vocab)

    @property
    def n_rows(self) -> int:
        return len(self.vocab)

    @property
    def T(self) -> np.ndarray:
        return self._T[: self.n_rows]

    @property
    def C(self) -> np.ndarray:
        return self._C[: self.n_rows]

    @property
    def Gt(self) -> np.ndarray:
        return self._Gt[: self.n_rows]

    @property
    def Gc(self) -> np.ndarray:
        return self._Gc[: self.n_rows]

    def _reserve(self, n: int) -> None:
        cap = self._T.shape[0]
        if n <= cap:
            return
        new_cap = max(n, 2 * cap)
        for name in ("_T", "_C", "_Gt", "_Gc"):
            old = getattr(self, name)
            grown = np.zeros((new_cap, old.shape[1]), dtype=np.float32)
            grown[:cap] = old
            setattr(self, name, grown)

    def init_rows(self, lo: int, hi: int) -> None:
        """Initialize rows ``lo..hi-1`` for freshly interned ids."""
        self._reserve(hi)
        K.init_rows(self._T, lo, hi, self.rng)
        self._C[lo:hi] = 0.0
        self._Gt[lo:hi] = 0.0
        self._Gc[lo:hi] = 0.0

    # -- sampler -------------------------------------------------------------

    def _alias_arrays(self):
        if self.config.sampler != "alias":
            return False, _NO_ALIAS_P, _NO_ALIAS_I
        if self._alias is None or len(self._alias) != self.n_rows:
            self._alias = alias_rebuild(self.vocab, self.config.alpha)
        return True, self._alias.prob, self._alias.alias

    # -- training ------------------------------------------------------------

    def pair_update(self, center: int, context: int) -> np.ndarray:
        """One SGNS/AdaGrad step on (center, context); returns the negatives used."""
        n = self.n_rows
        if not (0 <= center < n and 0 <= context < n):
            raise IndexError("ids must have rows")
        use_alias, ap, ai = self._alias_arrays()
        if not use_alias and self.reservoir.n_seen == 0:
            raise EmptyReservoir("no tokens offered yet")
        cfg = self.config
        negs = K.pair_update(self._T, self._C, self._Gt, self._Gc, center, context,
                             cfg.negatives, cfg.eta0, cfg.epsilon, use_alias,
                             self.reservoir.slots, self.reservoir.seen, ap, ai, self.rng)
        self.pair_updates += 1
        return negs

    def _prepare(self, docs: Sequence[Document]) -> tuple[np.ndarray, np.ndarray]:
        lo = self.n_rows
        bounds = [0]
        ids: list[int] = []
        intern = self.vocab.intern_and_count
        for doc in docs:
            ids.extend(intern(tok) for tok in doc.tokens)
            bounds.append(len(ids))
        hi = self.n_rows
        if hi > lo:
            self.init_rows(lo, hi)
        return np.asarray(ids, dtype=np.int64), np.asarray(bounds, dtype=np.int64)

    def _run(self, tokens: np.ndarray, bounds: np.ndarray, epochs: int) -> int:
        if tokens.size == 0:
            return 0
        cfg = self.config
        if cfg.sampler == "alias":
            self._alias = None  # rebuilt from the counts just added
        use_alias, ap, ai = self._alias_arrays()
        res = self.reservoir
        total = 0
        for epoch in range(epochs):
            total += K.train_docs(tokens, bounds, self._T, self._C, self._Gt, self._Gc,
                                  cfg.window, cfg.negatives, cfg.eta0, cfg.epsilon,
                                  use_alias, res.slots, res.seen, res.rng, ap, ai,
                                  self.rng, epoch == 0)
        self.pair_updates += total
        return total

    def train_document(self, doc: Document) -> int:
        tokens, bounds = self._prepare([doc])
        return self._run(tokens, bounds, 1)

    def train_batch(self, docs: Iterable[Document], epochs: int | None = None) -> int:
        """Consume one batch of documents; returns the number of pair updates.

        Counts and reservoir offers happen once per occurrence (first epoch);
        further epochs only repeat the gradient pass over the same batch.
        """
        docs = list(docs)
        tokens, bounds = self._prepare(docs)
        n = self._run(tokens, bounds, epochs or self.config.epochs_per_batch)
        self.batches_seen += 1
        return n

    # -- queries -------------------------------------------------------------

    def lookup(self, token: str) -> DomainVector:
        idx = self.vocab.get_id(token)
        if idx is None:
            raise OutOfVocabulary(token)
        return DomainVector(token, self._T[idx].astype(np.float64))

    def __contains__(self, token: str) -> bool:
        return token in self.vocab

    def vectors(self, tokens: Iterable[str]) -> tuple[list[str], np.ndarray]:
        """Target vectors for the in-vocabulary subset of ``tokens``."""
        found, rows = [], []
        for tok in tokens:
            idx = self.vocab.get_id(tok)
            if idx is not None:
                found.append(tok)
                rows.append(idx)
        return found, self._T[np.asarray(rows, dtype=np.int64)].astype(np.float64)

    def snapshot(self) -> "EmbeddingSnapshot":
        return EmbeddingSnapshot(dict(self.vocab.token_to_id), self.T.copy())

    def check_invariants(self) -> None:
        n = self.n_rows
        assert self.T.shape[0] == self.C.shape[0] == self.Gt.shape[0] == self.Gc.shape[0] == n
        assert len(self.vocab.freq) == n and all(f >= 1 for f in self.vocab.freq)
        assert self.vocab.total_count == sum(self.vocab.freq)
        for m in (self.T, self.C, self.Gt, self.Gc):
            assert np.all(np.isfinite(m))
        assert np.all(self.Gt >= 0) and np.all(self.Gc >= 0)

    def export_tsv(self, fh) -> int:
        for tok, row in zip(self.vocab.tokens, self.T):
            fh.write(tok + "\t" + "\t".join(repr(float(x)) for x in row) + "\n")
        return self.n_rows


class EmbeddingSnapshot:
    """Immutable copy of the target table for lookups while training continues."""

    def __init__(self, token_to_id: dict[str, int], T: np.ndarray):
        self._ids = token_to_id
        self._T = T
        self._T.setflags(write=False)

    def __contains__(self, token: str) -> bool:
        return token in self._ids

    def lookup(self, token: str) -> DomainVector:
        idx = self._ids.get(token)
        if idx is None:
            raise OutOfVocabulary(token)
        return DomainVector(token, self._T[idx].astype(np.float64))


# -- reference math (float64, numpy) -----------------------------------------

def log_sigmoid(x: float) -> float:
    if x >= 0:
        return -math.log1p(math.exp(-x))
    return x - math.log1p(math.exp(x))


def pair_loss(t, c_pos, negs) -> float:
    """``-log s(t.c_pos) - sum_v log s(-t.c_v)``."""
    t = np.asarray(t, dtype=np.float64)
    loss = -log_sigmoid(float(t @ np.asarray(c_pos, dtype=np.float64)))
    for c in negs:
        loss -= log_sigmoid(-float(t @ np.asarray(c, dtype=np.float64)))
    return loss


def pair_gradients(t, c_pos, negs):
    """Analytic gradients of :func:`pair_loss` w.r.t. t, c_pos and each negative."""
    t = np.asarray(t, dtype=np.float64)
    c_pos = np.asarray(c_pos, dtype=np.float64)
    g = K.sigmoid(float(t @ c_pos)) - 1.0
    g_t = g * c_pos
    g_c = g * t
    g_negs = []
    for c in negs:
        c = np.asarray(c, dtype=np.float64)
        gv = K.sigmoid(float(t @ c))
        g_t = g_t + gv * c
        g_negs.append(gv * t)
    return g_t, g_c, g_negs


def mean_pair_loss(model: EmbeddingModel, pairs, negatives) -> float:
    """Average loss over fixed (center, context) pairs with fixed negative ids."""
    T, C = model.T.astype(np.float64), model.C.astype(np.float64)
    total = 0.0
    for (c_id, x_id), negs in zip(pairs, negatives):
        total += pair_loss(T[c_id], C[x_id], [C[v] for v in negs])
    return total / max(len(pairs), 1)
