"""Binary feature cache.

Layout, all integers little-endian unsigned:

    magic        6 bytes  b"SCTQM\\x01"
    fp_len       u32, then fp_len bytes of ASCII fingerprint
    D            u32, then D identifiers, each u32 length + UTF-8 bytes
    N            u64
    rows         N*D float64 (<f8), row-major
    labels       N float64 (NaN where a molecule has no label)
    ids          N identifiers, each u32 length + UTF-8 bytes

The trailing labels and ids let a cross-validation run start from the
cache alone.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path
from typing import Mapping

import numpy as np

from .features import FeatureMatrix

MAGIC = b"SCTQM\x01"


class CacheError(ValueError):
    pass


class FingerprintMismatch(CacheError):
    pass


def profile_digest(profile) -> str:
    h = hashlib.sha256()
    h.update(profile.species.encode())
    h.update(str(profile.dim).encode())
    h.update(np.ascontiguousarray(profile.r, dtype="<f8").tobytes())
    h.update(np.ascontiguousarray(profile.values, dtype="<f8").tobytes())
    return h.hexdigest()


def fingerprint(params: Mapping, profiles: Mapping | None = None) -> str:
    """SHA-256 over the feature-defining parameters and the profile tables.

    Floats are rendered with ``repr`` so they round-trip exactly.
    """
    doc = {k: (repr(v) if isinstance(v, float) else v) for k, v in sorted(params.items())}
    if profiles:
        doc["profiles"] = {s: profile_digest(p) for s, p in sorted(profiles.items())}
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()


def _put_str(buf: list, s: str) -> None:
    b = s.encode("utf-8")
    buf.append(struct.pack("<I", len(b)))
    buf.append(b)


def save_cache(path, matrix: FeatureMatrix, fp: str, labels=None) -> None:
    n, d = matrix.shape
    labels = np.full(n, np.nan) if labels is None else np.asarray(labels, dtype=np.float64)
    if labels.shape != (n,):
        raise CacheError("labels must have one entry per row")
    ids = matrix.ids or tuple(str(i) for i in range(n))
    parts = [MAGIC]
    _put_str(parts, fp)
    parts.append(struct.pack("<I", d))
    for sid in matrix.schema:
        _put_str(parts, sid)
    parts.append(struct.pack("<Q", n))
    parts.append(np.ascontiguousarray(matrix.rows, dtype="<f8").tobytes())
    parts.append(np.ascontiguousarray(labels, dtype="<f8").tobytes())
    for i in ids:
        _put_str(parts, i)
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(b"".join(parts))
    tmp.replace(path)


class _Reader:
    def __init__(self, data: bytes, path):
        self.data, self.pos, self.path = data, 0, path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CacheError(f"{self.path}: truncated cache file")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def text(self) -> str:
        return self.take(self.u32()).decode("utf-8")


def read_fingerprint(path) -> str:
    r = _Reader(Path(path).read_bytes(), path)
    if r.take(len(MAGIC)) != MAGIC:
        raise CacheError(f"{path}: not a feature cache")
    return r.text()


def load_cache(path, expected_fp: str | None = None) -> tuple[FeatureMatrix, np.ndarray]:
    """Read a cache; returns ``(matrix, labels)``.

    Raises
    ------
    FingerprintMismatch
        If ``expected_fp`` is given and differs from the stored fingerprint.
    """
    r = _Reader(Path(path).read_bytes(), path)
    if r.take(len(MAGIC)) != MAGIC:
        raise CacheError(f"{path}: not a feature cache")
    fp = r.text()
    if expected_fp is not None and fp != expected_fp:
        raise FingerprintMismatch(
            f"{path}: cache was built with a different configuration "
            f"(stored {fp[:12]}, expected {expected_fp[:12]})"
        )
    d = r.u32()
    schema = tuple(r.text() for _ in range(d))
    n = r.u64()
    rows = np.frombuffer(r.take(8 * n * d), dtype="<f8").reshape(n, d).astype(np.float64)
    labels = np.frombuffer(r.take(8 * n), dtype="<f8").astype(np.float64)
    ids = tuple(r.text() for _ in range(n))
    if r.pos != len(r.data):
        raise CacheError(f"{path}: trailing bytes after cache payload")
    return FeatureMatrix(rows, schema, ids), labels
