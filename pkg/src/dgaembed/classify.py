"""Online logistic regression on domain embeddings."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .embed import OutOfVocabulary
from .preprocess import Verdict as Label


class DimensionMismatch(ValueError):
    pass


def _sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


@dataclass(eq=False)
class LogRegModel:
    dim: int
    lr: float = 0.05
    l2: float = 1e-4
    pos_weight: float = 1.0
    bias: float = 0.0
    steps: int = 0
    weights: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.weights is None:
            self.weights = np.zeros(self.dim, dtype=np.float64)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.shape != (self.dim,):
            raise DimensionMismatch("weights do not match dim")

    def __eq__(self, other) -> bool:
        if not isinstance(other, LogRegModel):
            return NotImplemented
        return self.header() == other.header() and np.array_equal(self.weights, other.weights)

    def header(self) -> dict:
        return {"dim": self.dim, "lr": self.lr, "l2": self.l2, "pos_weight": self.pos_weight,
                "bias": self.bias, "steps": self.steps}

    @classmethod
    def from_header(cls, head: dict, weights: np.ndarray) -> "LogRegModel":
        return cls(weights=weights.copy(), **head)

    def _vec(self, v) -> np.ndarray:
        v = np.asarray(getattr(v, "vector", v), dtype=np.float64)
        if v.shape != (self.dim,):
            raise DimensionMismatch(f"expected {self.dim}-dim vector, got {v.shape}")
        return v

    def margin(self, v) -> float:
        return float(self.weights @ self._vec(v)) + self.bias

    def predict(self, v) -> float:
        return _sigmoid(self.margin(v))

    def predict_many(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64).reshape(-1, self.dim)
        z = X @ self.weights + self.bias
        out = np.empty_like(z)
        pos = z >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        e = np.exp(z[~pos])
        out[~pos] = e / (1.0 + e)
        return out

    def sgd_step(self, v, y: int) -> None:
        x = self._vec(v)
        g = self.predict(x) - y
        if y == 1:
            g *= self.pos_weight
        self.weights -= self.lr * (g * x + self.l2 * self.weights)
        self.bias -= self.lr * g
        self.steps += 1

    def fit_batch(self, X, y, epochs: int = 1, seed: int = 0) -> None:
        """``epochs`` shuffled SGD passes over the rows of ``X``."""
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        if len(X) == 0:
            return
        if X.ndim != 2 or X.shape[1] != self.dim:
            raise DimensionMismatch(f"expected (n, {self.dim}) inputs, got {X.shape}")
        if not np.all((y == 0) | (y == 1)):
            raise ValueError("labels must be 0 or 1")
        rng = np.random.default_rng(seed)
        for _ in range(epochs):
            for i in rng.permutation(len(X)):
                self.sgd_step(X[i], int(y[i]))

    def objective(self, X, y) -> float:
        """Mean weighted cross-entropy plus ``l2/2 * |w|^2``."""
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        z = X @ self.weights + self.bias
        # log(1+e^z) - y z, written stably
        ce = np.logaddexp(0.0, z) - y * z
        wts = np.where(y == 1, self.pos_weight, 1.0)
        return float(np.mean(wts * ce) + 0.5 * self.l2 * self.weights @ self.weights)


@dataclass(frozen=True)
class Verdict:
    token: str
    score: float | None
    label: Label
    threshold: float


def predict(m: LogRegModel, v) -> float:
    return m.predict(v)


def sgd_step(m: LogRegModel, v, y: int) -> None:
    m.sgd_step(v, y)


def fit_batch(m: LogRegModel, X, y, epochs: int = 1, seed: int = 0) -> None:
    m.fit_batch(X, y, epochs, seed)


def verdict(m: LogRegModel, embeddings, token: str, threshold: float = 0.5) -> Verdict:
    """Score one token; unseen tokens become an Unknown verdict."""
    try:
        v = embeddings.lookup(token)
    except OutOfVocabulary:
        return Verdict(token, None, Label.UNKNOWN, threshold)
    score = m.predict(v)
    label = Label.MALICIOUS if score >= threshold else Label.BENIGN
    return Verdict(token, score, label, threshold)


def format_verdict(v: Verdict) -> str:
    score = "nan" if v.score is None else repr(v.score)
    return f"{v.token}\t{score}\t{v.label.value}"


def parse_verdict(line: str, threshold: float = 0.5) -> Verdict:
    tok, score, label = line.rstrip("\n").split("\t")
    s = None if score == "nan" else float(score)
    return Verdict(tok, s, Label(label), threshold)
