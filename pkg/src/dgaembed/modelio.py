"""Versioned binary model container.

Layout (all integers little-endian)::

    magic   8 bytes  b"DGAEMB\\r\\n"
    version u32
    section*         tag (4 ascii bytes) | u64 payload length | payload
    crc32   u32      over everything before it

Sections: ``CONF`` (JSON config + counters), ``VOCB`` (tokens, counts),
``MATS`` (target, context and both AdaGrad tables as float32), ``SAMP``
(reservoir capacity, seen count, resident slots), ``RNGS`` (generator
states) and optionally ``CLSF`` (logistic-regression classifier).
"""
from __future__ import annotations

import io
import json
import os
import struct
import zlib
from pathlib import Path

import numpy as np

from .classify import LogRegModel
from .embed import EmbedConfig, EmbeddingModel
from .negsample import Reservoir
from .vocab import Vocabulary

MAGIC = b"DGAEMB\r\n"
VERSION = 1


class ModelFileError(ValueError):
    pass


class CorruptModelFile(ModelFileError):
    pass


class UnsupportedVersion(ModelFileError):
    pass


def _section(tag: bytes, payload: bytes) -> bytes:
    return tag + struct.pack("<Q", len(payload)) + payload


def _json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()


def _le(a: np.ndarray, dtype: str) -> bytes:
    return np.ascontiguousarray(a, dtype=np.dtype(dtype).newbyteorder("<")).tobytes()


def dumps(model: EmbeddingModel, classifier: LogRegModel | None = None) -> bytes:
    n, dim = model.n_rows, model.config.dim
    conf = {
        "config": model.config.to_dict(),
        "n_rows": n,
        "batches_seen": model.batches_seen,
        "pair_updates": model.pair_updates,
    }
    vocab_blob = "\n".join(model.vocab.tokens).encode()
    vocb = struct.pack("<QQ", n, len(vocab_blob)) + vocab_blob + _le(np.asarray(model.vocab.freq), "i8")
    mats = b"".join(_le(m, "f4") for m in (model.T, model.C, model.Gt, model.Gc))
    res = model.reservoir
    samp = struct.pack("<QQ", res.capacity, res.n_seen) + _le(res.contents(), "i8")
    rngs = _le(np.concatenate([model.rng, res.rng]), "u8")

    out = io.BytesIO()
    out.write(MAGIC)
    out.write(struct.pack("<I", VERSION))
    out.write(_section(b"CONF", _json(conf)))
    out.write(_section(b"VOCB", vocb))
    out.write(_section(b"MATS", mats))
    out.write(_section(b"SAMP", samp))
    out.write(_section(b"RNGS", rngs))
    if classifier is not None:
        head = _json(classifier.header())
        out.write(_section(b"CLSF", struct.pack("<Q", len(head)) + head
                           + _le(classifier.weights, "f8")))
    body = out.getvalue()
    assert dim == model.T.shape[1]
    return body + struct.pack("<I", zlib.crc32(body))


def loads(data: bytes) -> tuple[EmbeddingModel, LogRegModel | None]:
    if len(data) < len(MAGIC) + 8 or data[: len(MAGIC)] != MAGIC:
        raise CorruptModelFile("bad magic or truncated header")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) != crc:
        raise CorruptModelFile("checksum mismatch (truncated or damaged file)")
    (version,) = struct.unpack_from("<I", body, len(MAGIC))
    if version != VERSION:
        raise UnsupportedVersion(f"model file version {version}, expected {VERSION}")

    sections: dict[bytes, memoryview] = {}
    pos = len(MAGIC) + 4
    view = memoryview(body)
    while pos < len(body):
        if pos + 12 > len(body):
            raise CorruptModelFile("truncated section header")
        tag = bytes(view[pos: pos + 4])
        (size,) = struct.unpack_from("<Q", body, pos + 4)
        pos += 12
        if pos + size > len(body):
            raise CorruptModelFile(f"section {tag!r} overruns file")
        sections[tag] = view[pos: pos + size]
        pos += size
    for tag in (b"CONF", b"VOCB", b"MATS", b"SAMP", b"RNGS"):
        if tag not in sections:
            raise CorruptModelFile(f"missing section {tag!r}")

    try:
        conf = json.loads(bytes(sections[b"CONF"]))
        cfg = EmbedConfig.from_dict(conf["config"])
        n, dim = conf["n_rows"], cfg.dim

        vb = sections[b"VOCB"]
        n_vocab, blob_len = struct.unpack_from("<QQ", vb, 0)
        blob = bytes(vb[16: 16 + blob_len]).decode()
        tokens = blob.split("\n") if n_vocab else []
        freq = np.frombuffer(vb[16 + blob_len:], dtype="<i8")
        if n_vocab != n or len(tokens) != n or freq.size != n:
            raise CorruptModelFile("vocabulary size mismatch")

        mats = np.frombuffer(sections[b"MATS"], dtype="<f4")
        if mats.size != 4 * n * dim:
            raise CorruptModelFile("matrix section size mismatch")
        mats = mats.reshape(4, n, dim)

        sb = sections[b"SAMP"]
        capacity, seen = struct.unpack_from("<QQ", sb, 0)
        slots = np.frombuffer(sb[16:], dtype="<i8")
        if slots.size != min(seen, capacity):
            raise CorruptModelFile("reservoir size mismatch")
        rngs = np.frombuffer(sections[b"RNGS"], dtype="<u8")
        if rngs.size != 2:
            raise CorruptModelFile("bad generator state")
    except (KeyError, ValueError, struct.error, UnicodeDecodeError) as exc:
        if isinstance(exc, ModelFileError):
            raise
        raise CorruptModelFile(str(exc)) from exc

    model = EmbeddingModel(cfg)
    model.vocab = Vocabulary.from_counts(tokens, freq.tolist())
    model._reserve(n)
    for name, m in zip(("_T", "_C", "_Gt", "_Gc"), mats):
        getattr(model, name)[:n] = m
    model.reservoir = Reservoir(int(capacity), rng=rngs[1:2].astype(np.uint64))
    model.reservoir.slots[: slots.size] = slots
    model.reservoir.seen[0] = seen
    model.rng = rngs[0:1].astype(np.uint64)
    model.batches_seen = conf["batches_seen"]
    model.pair_updates = conf["pair_updates"]

    classifier = None
    if b"CLSF" in sections:
        cb = sections[b"CLSF"]
        (hlen,) = struct.unpack_from("<Q", cb, 0)
        head = json.loads(bytes(cb[8: 8 + hlen]))
        weights = np.frombuffer(cb[8 + hlen:], dtype="<f8").astype(np.float64)
        classifier = LogRegModel.from_header(head, weights)
    return model, classifier


def save(path: str | os.PathLike, model: EmbeddingModel,
         classifier: LogRegModel | None = None) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(dumps(model, classifier))
    os.replace(tmp, path)


def load(path: str | os.PathLike) -> tuple[EmbeddingModel, LogRegModel | None]:
    return loads(Path(path).read_bytes())
