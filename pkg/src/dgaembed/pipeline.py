"""End-to-end orchestration: preprocess -> embed -> classify -> post-process."""
from __future__ import annotations

import contextlib
import dataclasses
import fcntl
import logging
import os
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from . import modelio
from .classify import LogRegModel, Verdict, format_verdict, verdict
from .datagen import BENIGN, read_truth
from .embed import EmbedConfig, EmbeddingModel
from .evaluate import is_test_token
from .preprocess import (DEFAULT_QTYPES, Document, InvalidQname, Preprocessor, Verdict as Label,
                         normalize_domain, open_text, read_token_list)

logger = logging.getLogger(__name__)


@dataclass
class RunConfig:
    logs: list[str] = field(default_factory=list)
    blacklist: str | None = None
    whitelist: str | None = None
    truth: str | None = None
    model: str = "model.bin"
    output_dir: str = "out"
    window_size: int = 600
    merge_depth: int = 2
    qtypes: list[str] = field(default_factory=lambda: sorted(DEFAULT_QTYPES))
    nxdomain_only: bool = False
    embed: EmbedConfig = field(default_factory=EmbedConfig)
    clf_lr: float = 0.05
    clf_l2: float = 1e-4
    clf_epochs: int = 50
    pos_weight: float = 1.0
    threshold: float = 0.5
    feedback_high: float = 0.95
    feedback_low: float = 0.05
    label_holdout: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.feedback_low < self.feedback_high <= 1.0:
            raise ValueError("need 0 <= feedback_low < feedback_high <= 1")
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError("threshold must be in [0, 1]")
        self.embed.seed = self.seed

    def preprocessor(self) -> Preprocessor:
        return Preprocessor(frozenset(q.upper() for q in self.qtypes), self.merge_depth,
                            self.window_size, self.nxdomain_only)

    def check_inputs(self, need_logs: bool = True) -> None:
        paths = list(self.logs) if need_logs else []
        paths += [p for p in (self.blacklist, self.whitelist, self.truth) if p]
        missing = [p for p in paths if not Path(p).exists()]
        if missing:
            raise FileNotFoundError(f"missing input files: {', '.join(missing)}")
        if need_logs and not self.logs:
            raise ValueError("no log files given")


# -- config files ------------------------------------------------------------

def _coerce(value: str, typ):
    origin = typing.get_origin(typ)
    args = typing.get_args(typ)
    if origin is typing.Union or (origin is not None and type(None) in args):
        inner = [a for a in args if a is not type(None)][0]
        return None if value.lower() in ("", "none") else _coerce(value, inner)
    if origin is list:
        return [v.strip() for v in value.split(",") if v.strip()]
    if typ is bool:
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    return typ(value)


def apply_settings(cfg: RunConfig, settings: dict[str, str]) -> RunConfig:
    """Return a new config with ``key=value`` settings applied (``embed.*`` nests)."""
    top = {f.name: f for f in dataclasses.fields(RunConfig)}
    emb = {f.name: f for f in dataclasses.fields(EmbedConfig)}
    hints = typing.get_type_hints(RunConfig)
    ehints = typing.get_type_hints(EmbedConfig)
    values = {k: getattr(cfg, k) for k in top}
    evalues = dataclasses.asdict(cfg.embed)
    for key, raw in settings.items():
        key = key.strip().replace("-", "_")
        if key.startswith("embed."):
            name = key[len("embed."):]
            if name not in emb:
                raise ValueError(f"unknown setting {key!r}")
            evalues[name] = _coerce(raw.strip(), ehints[name])
        elif key in top and key != "embed":
            values[key] = _coerce(raw.strip(), hints[key])
        else:
            raise ValueError(f"unknown setting {key!r}")
    values["embed"] = EmbedConfig(**evalues)
    return RunConfig(**values)


def parse_config_text(text: str) -> dict[str, str]:
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {n}: expected key = value")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def load_config(path: str | os.PathLike | None = None,
                overrides: dict[str, str] | None = None) -> RunConfig:
    settings = {}
    if path is not None:
        settings.update(parse_config_text(Path(path).read_text()))
    settings.update(overrides or {})
    return apply_settings(RunConfig(), settings)


# -- helpers -----------------------------------------------------------------

@contextlib.contextmanager
def model_lock(path: str | os.PathLike):
    """Advisory exclusive lock next to the model file."""
    lock_path = Path(str(path) + ".lock")
    lock_path.parent.mkdir(parents=True, exist_ok=True)
    with open(lock_path, "w") as fh:
        fcntl.flock(fh, fcntl.LOCK_EX)
        try:
            yield
        finally:
            fcntl.flock(fh, fcntl.LOCK_UN)


def load_labels(cfg: RunConfig) -> dict[str, int]:
    """Token -> 0/1 from lists (whitelist wins) then the truth file (overrides lists)."""
    labels: dict[str, int] = {}
    if cfg.blacklist:
        labels.update({t: 1 for t in read_token_list(cfg.blacklist)})
    if cfg.whitelist:
        labels.update({t: 0 for t in read_token_list(cfg.whitelist)})
    if cfg.truth:
        labels.update({t: int(lab != BENIGN) for t, lab in read_truth(cfg.truth).items()})
    if cfg.label_holdout > 0:
        labels = {t: y for t, y in labels.items() if not is_test_token(t, cfg.label_holdout)}
    return labels


def _documents(cfg: RunConfig, paths: Iterable[str]) -> tuple[list[Document], dict]:
    pp = cfg.preprocessor()
    docs = list(pp.documents_from_files(paths))
    return docs, pp.stats.as_dict()


def _labeled(model: EmbeddingModel, labels: dict[str, int], tokens: Iterable[str]):
    wanted = sorted({t for t in tokens if t in labels})
    toks, X = model.vectors(wanted)
    return toks, X, np.array([labels[t] for t in toks], dtype=np.int64)


@dataclass
class TrainResult:
    n_documents: int
    n_labeled: int
    vocab_size: int
    stats: dict


def train_all(cfg: RunConfig) -> TrainResult:
    cfg.check_inputs()
    docs, stats = _documents(cfg, cfg.logs)
    model = EmbeddingModel(cfg.embed)
    model.train_batch(docs)
    labels = load_labels(cfg)
    toks, X, y = _labeled(model, labels, model.vocab.tokens)
    clf = None
    if len(toks) == 0:
        logger.warning("no labeled tokens in the training data; classifier not trained")
    else:
        clf = LogRegModel(cfg.embed.dim, lr=cfg.clf_lr, l2=cfg.clf_l2, pos_weight=cfg.pos_weight)
        clf.fit_batch(X, y, epochs=cfg.clf_epochs, seed=cfg.seed)
    with model_lock(cfg.model):
        modelio.save(cfg.model, model, clf)
    return TrainResult(len(docs), len(toks), len(model), stats)


def update(cfg: RunConfig, new_logs: Iterable[str]) -> TrainResult:
    """Extend an existing model with new logs only."""
    new_logs = list(new_logs)
    missing = [p for p in new_logs if not Path(p).exists()]
    if missing:
        raise FileNotFoundError(f"missing input files: {', '.join(missing)}")
    with model_lock(cfg.model):
        model, clf = modelio.load(cfg.model)
        docs, stats = _documents(cfg, new_logs)
        model.train_batch(docs)
        labels = load_labels(cfg)
        toks, X, y = _labeled(model, labels, (t for d in docs for t in d.tokens))
        if len(toks):
            if clf is None:
                clf = LogRegModel(model.config.dim, lr=cfg.clf_lr, l2=cfg.clf_l2,
                                  pos_weight=cfg.pos_weight)
            clf.fit_batch(X, y, epochs=cfg.clf_epochs, seed=cfg.seed + model.batches_seen)
        modelio.save(cfg.model, model, clf)
    return TrainResult(len(docs), len(toks), len(model), stats)


def load_detector(cfg: RunConfig) -> tuple[EmbeddingModel, LogRegModel]:
    if not Path(cfg.model).exists():
        raise FileNotFoundError(f"model file {cfg.model} not found")
    model, clf = modelio.load(cfg.model)
    if clf is None:
        raise ValueError("model file has no trained classifier")
    return model, clf


def score(cfg: RunConfig, domains: Iterable[str]) -> Iterator[Verdict]:
    """Verdicts for raw domain names, normalized exactly as at training time."""
    model, clf = load_detector(cfg)
    snap = model.snapshot()
    for name in domains:
        name = name.strip()
        if not name or name.startswith("#"):
            continue
        try:
            tok = normalize_domain(name, cfg.merge_depth)
        except InvalidQname:
            yield Verdict(name, None, Label.UNKNOWN, cfg.threshold)
            continue
        yield verdict(clf, snap, tok, cfg.threshold)


def score_logs(cfg: RunConfig, paths: Iterable[str]) -> Iterator[Verdict]:
    """One verdict per unique token found in the given logs."""
    model, clf = load_detector(cfg)
    snap = model.snapshot()
    pp = cfg.preprocessor()
    seen = set()

    def lines():
        for p in paths:
            with open_text(p) as fh:
                yield from fh
    for q in pp.clean(lines()):
        if q.token not in seen:
            seen.add(q.token)
            yield verdict(clf, snap, q.token, cfg.threshold)


def feedback_lists(cfg: RunConfig, verdicts: Iterable[Verdict], high: float | None = None,
                   low: float | None = None, write: bool = True) -> tuple[list[str], list[str]]:
    """Stage list additions; nothing is merged into the source lists."""
    high = cfg.feedback_high if high is None else high
    low = cfg.feedback_low if low is None else low
    if not 0.0 <= low < high <= 1.0:
        raise ValueError("need 0 <= low < high <= 1")
    black_known = read_token_list(cfg.blacklist) if cfg.blacklist else set()
    white_known = read_token_list(cfg.whitelist) if cfg.whitelist else set()
    black, white = [], []
    for v in verdicts:
        if v.score is None:
            continue
        if v.score >= high and v.token not in black_known:
            black.append(v.token)
        elif v.score <= low and v.token not in white_known:
            white.append(v.token)
    black, white = sorted(set(black)), sorted(set(white))
    if write:
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "blacklist.additions.txt").write_text("".join(t + "\n" for t in black))
        (out / "whitelist.additions.txt").write_text("".join(t + "\n" for t in white))
    return black, white


def write_verdicts(verdicts: Iterable[Verdict], path: str | os.PathLike) -> list[Verdict]:
    out = list(verdicts)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text("".join(format_verdict(v) + "\n" for v in out))
    return out
