"""Little-endian binary checkpoints made of named sections.

Layout::

    b"RECOLECK"  u32 version  u32 n_sections
    per section: u16 name_len, name (utf-8), u8 kind, u64 rows, u64 cols, payload

``kind`` is ``F`` (float64 matrix), ``I`` (int64 matrix) or ``T`` (utf-8 text,
rows = byte length, cols = 1). Matrices are row-major.
"""
from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field

import numpy as np

from .cluster import ClusterModel
from .encoder import EncoderParams

MAGIC = b"RECOLECK"
VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    config_text: str
    relations: list[str]
    stage: str
    seed: int
    R_glo: np.ndarray
    R: np.ndarray
    coverage: np.ndarray
    cluster_model: ClusterModel
    encoders: list[EncoderParams] = field(default_factory=list)


def _write_section(buf, name: str, kind: str, payload: np.ndarray | bytes):
    nb = name.encode("utf-8")
    buf.write(struct.pack("<H", len(nb)))
    buf.write(nb)
    if kind == "T":
        buf.write(struct.pack("<cQQ", b"T", len(payload), 1))
        buf.write(payload)
        return
    arr = np.atleast_2d(payload)
    dt = "<f8" if kind == "F" else "<i8"
    buf.write(struct.pack("<cQQ", kind.encode(), arr.shape[0], arr.shape[1]))
    buf.write(np.ascontiguousarray(arr, dtype=dt).tobytes())


def to_bytes(ck: Checkpoint) -> bytes:
    cm = ck.cluster_model
    sections = [
        ("config", "T", ck.config_text.encode("utf-8")),
        ("relations", "T", "\n".join(ck.relations).encode("utf-8")),
        ("stage", "T", ck.stage.encode("utf-8")),
        ("seed", "I", np.array([[ck.seed]])),
        ("R_glo", "F", ck.R_glo),
        ("R", "F", ck.R),
        ("coverage", "I", ck.coverage.reshape(1, -1)),
        ("cluster/n_c", "I", np.array([[cm.n_c]])),
        ("cluster/assignment", "I", cm.assignment.reshape(1, -1)),
        ("cluster/centroids", "F", cm.centroids),
        ("cluster/semantic_ref", "F", cm.semantic_ref),
        ("cluster/objective", "F", np.array([[cm.objective]])),
    ]
    for c, enc in enumerate(ck.encoders):
        for name, t in enc.named():
            sections.append((f"encoder/{c}/{name}", "F", t.data))
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<II", VERSION, len(sections)))
    for s in sections:
        _write_section(buf, *s)
    return buf.getvalue()


def save(ck: Checkpoint, path):
    with open(path, "wb") as fh:
        fh.write(to_bytes(ck))


def _read_exact(fh, n):
    b = fh.read(n)
    if len(b) != n:
        raise CheckpointError("truncated checkpoint")
    return b


def from_bytes(data: bytes) -> Checkpoint:
    fh = io.BytesIO(data)
    if _read_exact(fh, len(MAGIC)) != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic header)")
    version, n = struct.unpack("<II", _read_exact(fh, 8))
    if version != VERSION:
        raise CheckpointError(f"checkpoint format version {version} is not supported (expected {VERSION})")
    sec = {}
    for _ in range(n):
        (ln,) = struct.unpack("<H", _read_exact(fh, 2))
        name = _read_exact(fh, ln).decode("utf-8")
        kind, rows, cols = struct.unpack("<cQQ", _read_exact(fh, 17))
        kind = kind.decode()
        if kind == "T":
            sec[name] = _read_exact(fh, rows).decode("utf-8")
        elif kind in ("F", "I"):
            dt = "<f8" if kind == "F" else "<i8"
            raw = _read_exact(fh, rows * cols * 8)
            sec[name] = np.frombuffer(raw, dtype=dt).reshape(rows, cols).astype(
                np.float64 if kind == "F" else np.int64)
        else:
            raise CheckpointError(f"unknown section kind {kind!r} in {name!r}")
    try:
        n_c = int(sec["cluster/n_c"][0, 0])
        cm = ClusterModel(n_c, sec["cluster/assignment"].ravel().copy(), sec["cluster/centroids"],
                          sec["cluster/semantic_ref"], float(sec["cluster/objective"][0, 0]))
        encoders = []
        for c in range(n_c):
            prefix = f"encoder/{c}/"
            named = {k[len(prefix):]: v for k, v in sec.items() if k.startswith(prefix)}
            if named:
                encoders.append(EncoderParams.from_named(named))
        rel_text = sec["relations"]
        return Checkpoint(sec["config"], rel_text.split("\n") if rel_text else [], sec["stage"],
                          int(sec["seed"][0, 0]), sec["R_glo"], sec["R"], sec["coverage"].ravel().copy(),
                          cm, encoders)
    except KeyError as exc:
        raise CheckpointError(f"checkpoint is missing section {exc}") from None


def load(path) -> Checkpoint:
    with open(path, "rb") as fh:
        return from_bytes(fh.read())
