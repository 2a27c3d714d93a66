"""DNS log ingestion: parsing, validation, domain normalization, windowing.

Log records are tab separated ``timestamp, client_ip, qname, qtype, rcode``.
Accepted queries are reduced to a normalized *token* (lowercased, ccTLD tail
removed, merged to the last ``depth`` labels) and grouped into one document
per client address per time window.
"""
from __future__ import annotations

import enum
import gzip
import ipaddress
import logging
import re
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Iterator, TextIO

from .cctld import CCTLDS

logger = logging.getLogger(__name__)

DEFAULT_QTYPES = frozenset({"A", "AAAA", "CNAME"})
DEFAULT_WINDOW = 600
DEFAULT_DEPTH = 2
MAX_DOMAIN_LEN = 253
MAX_LABEL_LEN = 63

_LABEL_RE = re.compile(r"[a-z0-9_-]{1,63}")


class MalformedLine(ValueError):
    pass


class InvalidQuery(ValueError):
    reason = "invalid"


class InvalidIp(InvalidQuery):
    reason = "invalid_ip"


class InvalidQtype(InvalidQuery):
    reason = "invalid_qtype"


class InvalidQname(InvalidQuery):
    reason = "invalid_qname"


@dataclass(frozen=True)
class RawQuery:
    timestamp: int
    client_ip: str
    qname: str
    qtype: str
    rcode: str


@dataclass(frozen=True)
class CleanQuery:
    timestamp: int
    client_ip: str
    token: str


@dataclass(frozen=True)
class Document:
    window_start: int
    client_ip: str
    tokens: tuple[str, ...]


class Verdict(enum.Enum):
    BENIGN = "Benign"
    MALICIOUS = "Malicious"
    UNKNOWN = "Unknown"


class ListSource(enum.Enum):
    WHITELIST = "Whitelist"
    BLACKLIST = "Blacklist"
    NONE = "None"


@dataclass(frozen=True)
class ListLabel:
    verdict: Verdict
    source: ListSource


@dataclass
class PreprocessStats:
    lines: int = 0
    comments: int = 0
    malformed: int = 0
    invalid_ip: int = 0
    invalid_qtype: int = 0
    invalid_qname: int = 0
    rcode_filtered: int = 0
    accepted: int = 0
    documents: int = 0

    def as_dict(self) -> dict[str, int]:
        return dict(self.__dict__)


# -- parsing -----------------------------------------------------------------

def parse_log_line(line: str) -> RawQuery:
    fields = line.rstrip("\r\n").split("\t")
    if len(fields) != 5:
        raise MalformedLine(f"expected 5 fields, got {len(fields)}")
    ts, client_ip, qname, qtype, rcode = fields
    try:
        timestamp = int(ts)
    except ValueError:
        raise MalformedLine(f"bad timestamp {ts!r}") from None
    return RawQuery(timestamp, client_ip, qname, qtype, rcode)


# -- normalization -----------------------------------------------------------

def strip_cctld(domain: str) -> str:
    """Drop trailing ccTLD labels while the name still has two or more labels.

    ``example.com.cn`` becomes ``example.com``; a bare ``cn`` is kept.
    """
    labels = domain.split(".")
    while len(labels) >= 2 and labels[-1] in CCTLDS:
        labels.pop()
    return ".".join(labels)


def merge_suffix(domain: str, depth: int = DEFAULT_DEPTH) -> str:
    if depth < 1:
        raise ValueError("merge depth must be positive")
    labels = domain.split(".")
    if len(labels) <= depth:
        return domain
    return ".".join(labels[-depth:])


def check_qname(qname: str) -> str:
    """Lowercase and syntax-check a query name; returns it without the root dot."""
    name = qname.lower()
    if name.endswith("."):
        name = name[:-1]
    if not name or len(name) > MAX_DOMAIN_LEN:
        raise InvalidQname(f"bad length: {qname!r}")
    for label in name.split("."):
        if not _LABEL_RE.fullmatch(label):
            raise InvalidQname(f"bad label in {qname!r}")
    return name


def normalize_domain(qname: str, depth: int = DEFAULT_DEPTH) -> str:
    """Full token normalization: syntax check, lowercase, strip ccTLDs, merge."""
    return merge_suffix(strip_cctld(check_qname(qname)), depth)


@lru_cache(maxsize=65536)
def _canonical_ip(text: str) -> str | None:
    try:
        addr = ipaddress.ip_address(text)
    except ValueError:
        return None
    # pin the mapped form; its str() changed across interpreter versions
    if addr.version == 6 and addr.ipv4_mapped is not None:
        return f"::ffff:{addr.ipv4_mapped}"
    return str(addr)


def validate(q: RawQuery, qtypes: frozenset[str] = DEFAULT_QTYPES,
             depth: int = DEFAULT_DEPTH) -> CleanQuery:
    ip = _canonical_ip(q.client_ip)
    if ip is None:
        raise InvalidIp(q.client_ip)
    if q.qtype.upper() not in qtypes:
        raise InvalidQtype(q.qtype)
    return CleanQuery(q.timestamp, ip, normalize_domain(q.qname, depth))


# -- windowing ---------------------------------------------------------------

def windowize(queries: Iterable[CleanQuery],
              window_size: int = DEFAULT_WINDOW) -> Iterator[Document]:
    """Group queries into per-(window, client) documents.

    Streaming: a window is flushed as soon as a query from a later window
    arrives, so input must be nondecreasing in window index (order inside a
    window is free and preserved in the tokens).
    """
    if window_size <= 0:
        raise ValueError("window_size must be positive")
    current = None
    groups: dict[str, list[str]] = {}
    for q in queries:
        w = q.timestamp // window_size
        if current is None:
            current = w
        elif w != current:
            if w < current:
                raise ValueError(
                    f"query at {q.timestamp} arrived after window {current * window_size} was closed")
            yield from _flush(current * window_size, groups)
            groups = {}
            current = w
        groups.setdefault(q.client_ip, []).append(q.token)
    if current is not None:
        yield from _flush(current * window_size, groups)


def _flush(window_start: int, groups: dict[str, list[str]]) -> Iterator[Document]:
    for ip in sorted(groups):
        yield Document(window_start, ip, tuple(groups[ip]))


# -- lists -------------------------------------------------------------------

def apply_lists(token: str, blacklist: set[str] | frozenset[str],
                whitelist: set[str] | frozenset[str]) -> ListLabel:
    # whitelist wins on conflict
    if token in whitelist:
        return ListLabel(Verdict.BENIGN, ListSource.WHITELIST)
    if token in blacklist:
        return ListLabel(Verdict.MALICIOUS, ListSource.BLACKLIST)
    return ListLabel(Verdict.UNKNOWN, ListSource.NONE)


# -- file plumbing -----------------------------------------------------------

def open_text(path: str | Path) -> TextIO:
    path = Path(path)
    with open(path, "rb") as fh:
        gz = fh.read(2) == b"\x1f\x8b"
    if gz:
        return gzip.open(path, "rt", encoding="utf-8", newline="")
    return open(path, "r", encoding="utf-8", newline="")


@dataclass
class Preprocessor:
    """Drives parse -> validate over log lines and keeps the rejection counts."""

    qtypes: frozenset[str] = DEFAULT_QTYPES
    depth: int = DEFAULT_DEPTH
    window_size: int = DEFAULT_WINDOW
    nxdomain_only: bool = False
    stats: PreprocessStats = field(default_factory=PreprocessStats)

    def clean(self, lines: Iterable[str]) -> Iterator[CleanQuery]:
        st = self.stats
        for line in lines:
            st.lines += 1
            if not line.strip():
                continue
            if line.startswith("#"):
                st.comments += 1
                continue
            try:
                raw = parse_log_line(line)
            except MalformedLine:
                st.malformed += 1
                continue
            if self.nxdomain_only and raw.rcode.upper() != "NXDOMAIN":
                st.rcode_filtered += 1
                continue
            try:
                q = validate(raw, self.qtypes, self.depth)
            except InvalidQuery as exc:
                setattr(st, exc.reason, getattr(st, exc.reason) + 1)
                continue
            st.accepted += 1
            yield q

    def documents(self, lines: Iterable[str]) -> Iterator[Document]:
        for doc in windowize(self.clean(lines), self.window_size):
            self.stats.documents += 1
            yield doc

    def documents_from_files(self, paths: Iterable[str | Path]) -> Iterator[Document]:
        def lines():
            for p in paths:
                with open_text(p) as fh:
                    yield from fh
        return self.documents(lines())


def format_document(doc: Document) -> str:
    return f"{doc.window_start}\t{doc.client_ip}\t{' '.join(doc.tokens)}"


def write_documents(docs: Iterable[Document], fh: TextIO) -> int:
    n = 0
    for doc in docs:
        fh.write(format_document(doc) + "\n")
        n += 1
    return n


def read_documents(fh: Iterable[str]) -> Iterator[Document]:
    for line in fh:
        line = line.rstrip("\r\n")
        if not line or line.startswith("#"):
            continue
        start, ip, toks = line.split("\t")
        yield Document(int(start), ip, tuple(toks.split()))


def read_token_list(path: str | Path) -> set[str]:
    with open_text(path) as fh:
        return {ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")}


def normalize_list(lines: Iterable[str], depth: int = DEFAULT_DEPTH) -> list[str]:
    """Normalize raw list entries to tokens; invalid names are dropped."""
    out = []
    seen = set()
    for ln in lines:
        name = ln.strip()
        if not name or name.startswith("#"):
            continue
        try:
            tok = normalize_domain(name, depth)
        except InvalidQname:
            logger.warning("dropping invalid list entry %r", name)
            continue
        if tok not in seen:
            seen.add(tok)
            out.append(tok)
    return out
