"""Detection metrics and the incremental-versus-retrain experiment."""
from __future__ import annotations

import hashlib
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .classify import LogRegModel, Verdict, verdict
from .datagen import BENIGN
from .embed import EmbedConfig, EmbeddingModel
from .modelio import dumps
from .preprocess import Document, Verdict as Label


class MissingTruth(KeyError):
    pass


UNKNOWN_POLICIES = ("negative", "positive", "exclude")


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0
    unknown: int = 0  # Unknown verdicts, already folded in per policy

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class Metrics:
    precision: float
    tpr: float
    fpr: float
    f1: float
    degenerate: tuple[str, ...] = ()


def is_positive_label(label: str) -> bool:
    return label != BENIGN


def is_test_token(token: str, fraction: float = 0.2) -> bool:
    """Stable hash split; the same token always lands on the same side."""
    h = int.from_bytes(hashlib.blake2b(token.encode(), digest_size=8).digest(), "little")
    return h % 1_000_000 < fraction * 1_000_000


def confusion(verdicts: Iterable[Verdict], truth: Mapping[str, str],
              unknown_policy: str = "negative") -> ConfusionMatrix:
    """Per-unique-token confusion counts (DGA is the positive class)."""
    if unknown_policy not in UNKNOWN_POLICIES:
        raise ValueError(f"unknown_policy must be one of {UNKNOWN_POLICIES}")
    tp = fp = tn = fn = unk = 0
    done = set()
    for v in verdicts:
        if v.token in done:
            continue
        done.add(v.token)
        if v.token not in truth:
            raise MissingTruth(v.token)
        actual = is_positive_label(truth[v.token])
        if v.label is Label.UNKNOWN:
            unk += 1
            if unknown_policy == "exclude":
                continue
            predicted = unknown_policy == "positive"
        else:
            predicted = v.label is Label.MALICIOUS
        if predicted and actual:
            tp += 1
        elif predicted:
            fp += 1
        elif actual:
            fn += 1
        else:
            tn += 1
    return ConfusionMatrix(tp, fp, tn, fn, unk)


def metrics(cm: ConfusionMatrix) -> Metrics:
    flags = []

    def ratio(num, den, name):
        if den == 0:
            flags.append(name)
            return 0.0
        return num / den

    pre = ratio(cm.tp, cm.tp + cm.fp, "precision")
    tpr = ratio(cm.tp, cm.tp + cm.fn, "tpr")
    fpr = ratio(cm.fp, cm.fp + cm.tn, "fpr")
    if pre + tpr == 0:
        flags.append("f1")
        f1 = 0.0
    else:
        # equals 2PR/(P+R) but in one division, so hand-checkable values come out exact
        f1 = 2 * cm.tp / (2 * cm.tp + cm.fp + cm.fn)
    return Metrics(pre, tpr, fpr, f1, tuple(flags))


# -- experiment --------------------------------------------------------------

@dataclass
class ExperimentConfig:
    embed: EmbedConfig = field(default_factory=lambda: EmbedConfig(epochs_per_batch=5))
    n_pieces: int = 10
    initial_fraction: float = 0.5
    test_fraction: float = 0.2
    clf_epochs: int = 50
    clf_lr: float = 0.05
    clf_l2: float = 1e-4
    pos_weight: float = 1.0
    threshold: float = 0.5
    unknown_policy: str = "negative"
    parallel_arms: bool = False

    def __post_init__(self):
        if self.n_pieces < 1:
            raise ValueError("n_pieces must be >= 1")
        if not 0.0 < self.initial_fraction < 1.0:
            raise ValueError("initial_fraction must be in (0, 1)")
        if not 0.0 < self.test_fraction < 1.0:
            raise ValueError("test_fraction must be in (0, 1)")


@dataclass
class Phase:
    arm: str
    phase: str
    n_docs: int
    n_tokens: int
    seconds: float
    pair_updates: int


@dataclass
class ArmResult:
    name: str
    phases: list[Phase]
    embed_seconds: float
    classifier_seconds: float
    vocab_size: int
    model_bytes: int
    metrics: dict[str, Metrics]
    confusion: dict[str, ConfusionMatrix]


@dataclass
class ExperimentReport:
    arms: dict[str, ArmResult]
    config: dict

    def to_json(self) -> str:
        return json.dumps({"config": self.config,
                           "arms": {k: asdict(v) for k, v in self.arms.items()}},
                          indent=2, sort_keys=True)

    def to_table(self) -> str:
        rows = ["arm          phase        docs     tokens   seconds"]
        for arm in self.arms.values():
            for p in arm.phases:
                rows.append(f"{arm.name:<12} {p.phase:<10} {p.n_docs:>7} {p.n_tokens:>10} {p.seconds:>9.2f}")
        rows.append("")
        rows.append("arm          subset      PRE     TPR     FPR      F1   embed_s   clf_s")
        for arm in self.arms.values():
            for subset, m in arm.metrics.items():
                rows.append(f"{arm.name:<12} {subset:<9} {m.precision:6.3f}  {m.tpr:6.3f}  "
                            f"{m.fpr:6.4f}  {m.f1:6.3f}  {arm.embed_seconds:8.2f} "
                            f"{arm.classifier_seconds:7.2f}")
        return "\n".join(rows)


def split_pieces(docs: Sequence[Document], n_pieces: int,
                 initial_fraction: float = 0.5) -> tuple[list[Document], list[list[Document]]]:
    """Split on window boundaries into an initial block and ``n_pieces`` increments."""
    windows = sorted({d.window_start for d in docs})
    if len(windows) < n_pieces + 1:
        raise ValueError("not enough windows for the requested split")
    cut = max(1, int(round(len(windows) * initial_fraction)))
    init_w = set(windows[:cut])
    groups = np.array_split(np.asarray(windows[cut:]), n_pieces)
    owner = {}
    for i, g in enumerate(groups):
        for w in g.tolist():
            owner[w] = i
    initial = [d for d in docs if d.window_start in init_w]
    pieces: list[list[Document]] = [[] for _ in range(n_pieces)]
    for d in docs:
        if d.window_start not in init_w:
            pieces[owner[d.window_start]].append(d)
    return initial, pieces


def _ntok(docs: Sequence[Document]) -> int:
    return sum(len(d.tokens) for d in docs)


def _timed_batch(model: EmbeddingModel, docs: Sequence[Document]) -> tuple[float, int]:
    t0 = time.perf_counter()
    n = model.train_batch(docs)
    return time.perf_counter() - t0, n


def _fit_and_score(model: EmbeddingModel, labels: Mapping[str, int], truth: Mapping[str, str],
                   cfg: ExperimentConfig) -> tuple[float, dict, dict]:
    train = [(t, y) for t, y in sorted(labels.items()) if not is_test_token(t, cfg.test_fraction)]
    toks, X = model.vectors(t for t, _ in train)
    ymap = dict(train)
    y = np.array([ymap[t] for t in toks], dtype=np.int64)
    clf = LogRegModel(model.config.dim, lr=cfg.clf_lr, l2=cfg.clf_l2, pos_weight=cfg.pos_weight)
    t0 = time.perf_counter()
    clf.fit_batch(X, y, epochs=cfg.clf_epochs, seed=model.config.seed)
    clf_seconds = time.perf_counter() - t0

    test = [t for t in sorted(truth) if is_test_token(t, cfg.test_fraction)]
    verdicts = [verdict(clf, model, t, cfg.threshold) for t in test]
    subsets = {"all": None}
    for fam in sorted({lab for lab in truth.values() if lab != BENIGN}):
        subsets[fam] = fam
    ms, cms = {}, {}
    for name, fam in subsets.items():
        vs = [v for v in verdicts if fam is None or truth[v.token] in (BENIGN, fam)]
        cm = confusion(vs, truth, cfg.unknown_policy)
        cms[name] = cm
        ms[name] = metrics(cm)
    return clf_seconds, ms, cms


def _run_arm(arm: str, initial, pieces, labels, truth, cfg: ExperimentConfig) -> ArmResult:
    phases = []
    if arm == "incremental":
        model = EmbeddingModel(cfg.embed)
        secs, n = _timed_batch(model, initial)
        phases.append(Phase(arm, "initial", len(initial), _ntok(initial), secs, n))
        for i, piece in enumerate(pieces, 1):
            secs, n = _timed_batch(model, piece)
            phases.append(Phase(arm, f"piece{i}", len(piece), _ntok(piece), secs, n))
    else:
        model = EmbeddingModel(cfg.embed)
        secs, n = _timed_batch(model, initial)
        phases.append(Phase(arm, "initial", len(initial), _ntok(initial), secs, n))
        seen = list(initial)
        for i, piece in enumerate(pieces, 1):
            seen.extend(piece)
            model = EmbeddingModel(cfg.embed)
            secs, n = _timed_batch(model, seen)
            phases.append(Phase(arm, f"retrain{i}", len(seen), _ntok(seen), secs, n))
    clf_seconds, ms, cms = _fit_and_score(model, labels, truth, cfg)
    return ArmResult(arm, phases, sum(p.seconds for p in phases), clf_seconds,
                     len(model), len(dumps(model)), ms, cms)


def run_incremental_experiment(docs: Sequence[Document], labels: Mapping[str, int],
                               truth: Mapping[str, str],
                               cfg: ExperimentConfig | None = None) -> ExperimentReport:
    """Incremental (train once, then extend per piece) vs basic (retrain per piece).

    ``labels`` are the classifier's training labels (token -> 0/1); only the
    tokens outside the held-out hash split are used.  Evaluation runs on the
    held-out tokens of ``truth``.
    """
    cfg = cfg or ExperimentConfig()
    initial, pieces = split_pieces(docs, cfg.n_pieces, cfg.initial_fraction)
    arms = ("incremental", "basic")
    if cfg.parallel_arms:
        with ProcessPoolExecutor(max_workers=2) as ex:
            futs = [ex.submit(_run_arm, a, initial, pieces, labels, truth, cfg) for a in arms]
            results = [f.result() for f in futs]
    else:
        results = [_run_arm(a, initial, pieces, labels, truth, cfg) for a in arms]
    conf = asdict(cfg)
    return ExperimentReport({r.name: r for r in results}, conf)


def list_labels(blacklist: Iterable[str], whitelist: Iterable[str]) -> dict[str, int]:
    """Training labels from lists; whitelist wins on conflict."""
    labels = {t: 1 for t in blacklist}
    labels.update({t: 0 for t in whitelist})
    return labels
