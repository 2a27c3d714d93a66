"""Deterministic synthetic DNS traffic with ground truth.

Benign hosts query a Zipf-distributed pool of domains.  Bot hosts do the same
and, once per window, run a burst through their family's DGA schedule: every
bot of a family queries the same freshly generated domains in the same
window, which is the co-occurrence signal the embeddings pick up.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse

from .preprocess import Document, normalize_domain

BENIGN = "Benign"
CHAR_DGA = "CharDga"
WORD_DGA = "WordDga"
FAMILIES = (CHAR_DGA, WORD_DGA)

_LCG_A = 1103515245
_LCG_C = 12345
_LCG_M = 2 ** 31
_KNUTH = 2654435761

_GENERIC_TLDS = ("com", "com", "com", "net", "org", "edu", "info", "biz")
_PREFIXES = ("www", "cdn", "api", "img", "static", "mail", "m", "login")
_CC_SUFFIXES = ("cn", "uk", "de", "jp")
_SYLLABLES = [c + v for c in "bcdfghjklmnprstvwz" for v in "aeiou"] + ["an", "el", "or", "ix", "um"]


class WordlistTooSmall(ValueError):
    pass


def default_wordlist() -> list[str]:
    text = resources.files("dgaembed").joinpath("data/words.txt").read_text()
    return text.split()


def _lcg(s: int) -> int:
    return (_LCG_A * s + _LCG_C) % _LCG_M


def _lcg_start(seed: int, index: int) -> int:
    return seed ^ ((index * _KNUTH) % 2 ** 32)


def gen_char_dga(seed: int, index: int) -> str:
    s = _lcg_start(seed, index)
    chars = []
    for _ in range(12):
        s = _lcg(s)
        chars.append(chr(ord("a") + s % 26))
    return "".join(chars) + ".com"


def gen_word_dga(wordlist: Sequence[str], seed: int, index: int) -> str:
    if len(wordlist) < 256:
        raise WordlistTooSmall(f"need >= 256 words, got {len(wordlist)}")
    s = _lcg(_lcg_start(seed, index))
    n_words = 2 if s % 2 == 0 else 3
    words = []
    for _ in range(n_words):
        s = _lcg(s)
        words.append(wordlist[s % len(wordlist)])
    return "".join(words) + ".net"


@dataclass
class TrafficProfile:
    n_benign_hosts: int = 200
    n_bot_hosts: int = 20
    bot_families: tuple[str, ...] | None = None  # per bot; default: half of each
    benign_pool_size: int = 5000
    zipf_exponent: float = 1.1
    queries_per_window: float = 20.0
    n_windows: int = 144
    window_size: int = 600
    dga_per_window: int = 5
    start_time: int = 1_579_996_800
    blacklist_fraction: float = 0.3
    whitelist_fraction: float = 0.3
    noise_fraction: float = 0.005
    seed: int = 7

    def __post_init__(self):
        counts = (self.n_benign_hosts, self.n_bot_hosts, self.benign_pool_size,
                  self.n_windows, self.dga_per_window)
        if any(c < 0 for c in counts):
            raise ValueError("counts must be >= 0")
        if self.benign_pool_size < 1 or self.window_size < 1:
            raise ValueError("benign_pool_size and window_size must be >= 1")
        if self.zipf_exponent <= 0 or self.queries_per_window < 0:
            raise ValueError("zipf_exponent must be > 0, queries_per_window >= 0")
        if self.start_time % self.window_size:
            raise ValueError("start_time must be window aligned")
        fams = self.families()
        if any(f not in FAMILIES for f in fams):
            raise ValueError(f"unknown DGA family in {fams}")

    def families(self) -> tuple[str, ...]:
        if self.bot_families is not None:
            if len(self.bot_families) != self.n_bot_hosts:
                raise ValueError("bot_families must list one family per bot")
            return tuple(self.bot_families)
        half = (self.n_bot_hosts + 1) // 2
        return tuple(CHAR_DGA if i < half else WORD_DGA for i in range(self.n_bot_hosts))


@dataclass
class Corpus:
    lines: list[str]
    truth: dict[str, str]
    blacklist: list[str] = field(default_factory=list)
    whitelist: list[str] = field(default_factory=list)

    def write(self, outdir: str | Path) -> dict[str, Path]:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        paths = {
            "logs": outdir / "logs.tsv",
            "truth": outdir / "truth.tsv",
            "blacklist": outdir / "blacklist.txt",
            "whitelist": outdir / "whitelist.txt",
        }
        paths["logs"].write_text("".join(ln + "\n" for ln in self.lines))
        paths["truth"].write_text("".join(f"{t}\t{lab}\n" for t, lab in sorted(self.truth.items())))
        paths["blacklist"].write_text("".join(t + "\n" for t in self.blacklist))
        paths["whitelist"].write_text("".join(t + "\n" for t in self.whitelist))
        return paths


def _benign_pool(n: int, rng: np.random.Generator) -> list[str]:
    pool, seen = [], set()
    while len(pool) < n:
        k = int(rng.integers(2, 5))
        name = "".join(_SYLLABLES[i] for i in rng.integers(0, len(_SYLLABLES), k))
        tok = f"{name}.{_GENERIC_TLDS[int(rng.integers(len(_GENERIC_TLDS)))]}"
        if tok not in seen:
            seen.add(tok)
            pool.append(tok)
    return pool


def _decorate(token: str, rng: np.random.Generator) -> str:
    """Raw query name that normalizes back to ``token``."""
    name = token
    if rng.random() < 0.5:
        name = f"{_PREFIXES[int(rng.integers(len(_PREFIXES)))]}.{name}"
    if rng.random() < 0.1:
        name = f"{name}.{_CC_SUFFIXES[int(rng.integers(len(_CC_SUFFIXES)))]}"
    if rng.random() < 0.05:
        name = name.upper()
    return name


def _family_seed(seed: int, family: str) -> int:
    return int(np.random.SeedSequence([seed, FAMILIES.index(family) + 1]).generate_state(1)[0])


def synth_corpus(profile: TrafficProfile | None = None) -> Corpus:
    p = profile or TrafficProfile()
    root = np.random.default_rng([p.seed, 0])
    pool = _benign_pool(p.benign_pool_size, root)
    pool_set = set(pool)
    weights = np.arange(1, p.benign_pool_size + 1, dtype=np.float64) ** -p.zipf_exponent
    cdf = np.cumsum(weights / weights.sum())
    cdf[-1] = 1.0

    families = p.families()
    active = [f for f in FAMILIES if f in families]
    wordlist = default_wordlist()
    fam_seed = {f: _family_seed(p.seed, f) for f in active}
    fam_index = {f: 0 for f in active}
    dga_seen: set[str] = set()

    def next_dga(fam: str) -> str:
        while True:
            i = fam_index[fam]
            fam_index[fam] = i + 1
            tok = (gen_char_dga(fam_seed[fam], i) if fam == CHAR_DGA
                   else gen_word_dga(wordlist, fam_seed[fam], i))
            if tok not in pool_set and tok not in dga_seen:
                dga_seen.add(tok)
                return tok

    benign_ips = [f"10.0.{i // 250}.{i % 250 + 1}" for i in range(p.n_benign_hosts)]
    bot_ips = [f"10.1.{i // 250}.{i % 250 + 1}" for i in range(p.n_bot_hosts)]
    hosts = benign_ips + bot_ips

    truth: dict[str, str] = {}
    records: list[tuple[int, int, int, str, str, str]] = []
    for w in range(p.n_windows):
        rng = np.random.default_rng([p.seed, 1, w])
        ws = p.start_time + w * p.window_size
        schedule = {f: [next_dga(f) for _ in range(p.dga_per_window)] for f in active}
        for h, ip in enumerate(hosts):
            seq = 0
            n = int(rng.poisson(p.queries_per_window))
            ranks = np.searchsorted(cdf, rng.random(n), side="right")
            times = rng.integers(ws, ws + p.window_size, n)
            for r, t in zip(ranks, times):
                tok = pool[r]
                truth[tok] = BENIGN
                qtype = "AAAA" if rng.random() < 0.2 else "A"
                records.append((int(t), h, seq, _decorate(tok, rng), qtype, "NOERROR"))
                seq += 1
            if rng.random() < p.noise_fraction * max(n, 1):
                t = int(rng.integers(ws, ws + p.window_size))
                bad = ("MX", "TXT", "PTR", "SRV")[int(rng.integers(4))]
                records.append((t, h, seq, pool[int(rng.integers(len(pool)))], bad, "NOERROR"))
                seq += 1
            if h >= len(benign_ips):
                fam = families[h - len(benign_ips)]
                t0 = int(rng.integers(ws, ws + p.window_size))
                for tok in schedule[fam]:
                    truth[tok] = fam
                    rcode = "NXDOMAIN" if rng.random() < 0.9 else "NOERROR"
                    records.append((t0, h, seq, tok, "A", rcode))
                    seq += 1

    records.sort(key=lambda r: (r[0], r[1], r[2]))
    lines = [f"{t}\t{hosts[h]}\t{q}\t{qt}\t{rc}" for t, h, _, q, qt, rc in records]

    lists_rng = np.random.default_rng([p.seed, 2])
    dga = sorted(t for t, lab in truth.items() if lab != BENIGN)
    benign = sorted(t for t, lab in truth.items() if lab == BENIGN)
    blacklist = sorted(lists_rng.choice(dga, int(round(p.blacklist_fraction * len(dga))),
                                        replace=False).tolist()) if dga else []
    whitelist = sorted(lists_rng.choice(benign, int(round(p.whitelist_fraction * len(benign))),
                                        replace=False).tolist()) if benign else []
    return Corpus(lines, truth, blacklist, whitelist)


def read_truth(path: str | Path) -> dict[str, str]:
    truth = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line and not line.startswith("#"):
                tok, lab = line.split("\t")
                truth[tok] = lab
    return truth


def cooccurrence_lift(docs: Iterable[Document], group_a: Sequence[str],
                      group_b: Sequence[str]) -> float:
    """Mean document-level lift ``P(a,b) / (P(a) P(b))`` over pairs a != b.

    Pairs whose members never occur contribute zero.
    """
    docs = list(docs)
    index = {t: i for i, t in enumerate(dict.fromkeys(list(group_a) + list(group_b)))}
    rows, cols = [], []
    for d, doc in enumerate(docs):
        for tok in set(doc.tokens):
            j = index.get(tok)
            if j is not None:
                rows.append(d)
                cols.append(j)
    X = sparse.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(docs), len(index)))
    X.data[:] = 1.0
    a = np.array([index[t] for t in group_a])
    b = np.array([index[t] for t in group_b])
    co = (X[:, a].T @ X[:, b]).toarray()
    df = np.asarray(X.sum(axis=0)).ravel()
    denom = np.outer(df[a], df[b])
    lift = np.divide(co * len(docs), denom, out=np.zeros_like(co), where=denom > 0)
    same = a[:, None] == b[None, :]
    return float(lift[~same].mean())


def normalized_truth(truth: dict[str, str], depth: int = 2) -> dict[str, str]:
    return {normalize_domain(t, depth): lab for t, lab in truth.items()}
