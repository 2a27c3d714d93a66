"""Growing token vocabulary with exact streaming frequencies."""
from __future__ import annotations

from typing import Iterable

import numpy as np


class Vocabulary:
    """Dense ids in first-seen order; ids are never reused or removed."""

    def __init__(self):
        self.token_to_id: dict[str, int] = {}
        self.tokens: list[str] = []
        self.freq: list[int] = []
        self.total_count = 0

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    def intern_and_count(self, token: str) -> int:
        idx = self.token_to_id.get(token)
        if idx is None:
            idx = len(self.tokens)
            self.token_to_id[token] = idx
            self.tokens.append(token)
            self.freq.append(0)
        self.freq[idx] += 1
        self.total_count += 1
        return idx

    def get_id(self, token: str) -> int | None:
        return self.token_to_id.get(token)

    def smoothed_weights(self, alpha: float = 0.75) -> np.ndarray:
        """Unnormalized negative-sampling weights ``freq ** alpha``."""
        if not self.tokens:
            raise ValueError("empty vocabulary")
        if not 0.0 < alpha <= 1.0:
            raise ValueError("alpha must be in (0, 1]")
        return np.asarray(self.freq, dtype=np.float64) ** alpha

    def sampling_distribution(self, alpha: float = 0.75) -> np.ndarray:
        w = self.smoothed_weights(alpha)
        return w / w.sum()

    @classmethod
    def from_counts(cls, tokens: Iterable[str], freq: Iterable[int]) -> "Vocabulary":
        v = cls()
        for tok, f in zip(tokens, freq):
            v.token_to_id[tok] = len(v.tokens)
            v.tokens.append(tok)
            v.freq.append(int(f))
        if len(v.token_to_id) != len(v.tokens):
            raise ValueError("duplicate tokens in vocabulary")
        v.total_count = sum(v.freq)
        return v

    def __eq__(self, other) -> bool:
        if not isinstance(other, Vocabulary):
            return NotImplemented
        return self.tokens == other.tokens and self.freq == other.freq
