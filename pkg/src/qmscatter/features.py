"""Feature vectors, feature matrices and schema identifiers."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

P_TYPES = ("p1", "p1sq", "p2")


def format_scale(k: int) -> str:
    """Scale label ``k/2`` printed as ``3`` or ``3.5``."""
    return f"{k / 2:g}"


def fourier_schema(J: int) -> tuple[str, ...]:
    radii = range(1, 2 ** (J - 1) + 1)
    return ("F:p0",) + tuple(f"F:{p}:g={g}" for p in P_TYPES for g in radii)


def wavelet_schema(J: int) -> tuple[str, ...]:
    scales = range(2 * J)
    return ("W:p0",) + tuple(f"W:{p}:j={format_scale(k)}" for p in P_TYPES for k in scales)


def scattering_pairs(J: int) -> list[tuple[int, int]]:
    return [(k1, k2) for k1 in range(2 * J) for k2 in range(k1 + 1, 2 * J)]


def scattering_schema(J: int, L: int) -> tuple[str, ...]:
    n_ell = int(np.log2(L))
    second = tuple(
        f"S:{p}:j1={format_scale(k1)}:j2={format_scale(k2)}:a={a}:l2={ell}"
        for k1, k2 in scattering_pairs(J)
        for a in range(L)
        for ell in range(n_ell)
        for p in P_TYPES
    )
    return wavelet_schema(J) + second


def dictionary_size(family: str, J: int, L: int = 8) -> int:
    """Closed-form dictionary sizes."""
    if family == "fourier":
        return 1 + 3 * 2 ** (J - 1)
    if family == "wavelet":
        return 1 + 6 * J
    if family == "scattering":
        return 1 + 6 * J + 3 * (2 * J * (2 * J - 1) * L * int(np.log2(L))) // 2
    raise ValueError(f"unknown family {family!r}")


def schema_for(family: str, J: int, L: int = 8) -> tuple[str, ...]:
    if family == "fourier":
        return fourier_schema(J)
    if family == "wavelet":
        return wavelet_schema(J)
    if family == "scattering":
        return scattering_schema(J, L)
    raise ValueError(f"unknown family {family!r}")


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    schema: tuple[str, ...]

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1 or len(v) != len(self.schema):
            raise ValueError(f"{len(v)} values for a schema of length {len(self.schema)}")
        if not np.all(np.isfinite(v)):
            raise ValueError("feature values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "schema", tuple(self.schema))

    def __len__(self):
        return len(self.values)

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.schema, self.values.tolist()))


@dataclass(frozen=True)
class FeatureMatrix:
    """Rows are molecules, columns follow ``schema``."""

    rows: np.ndarray
    schema: tuple[str, ...]
    ids: tuple[str, ...] = ()

    def __post_init__(self):
        x = np.asarray(self.rows, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != len(self.schema):
            raise ValueError(f"matrix shape {x.shape} does not fit a schema of length {len(self.schema)}")
        if not np.all(np.isfinite(x)):
            raise ValueError("feature matrix contains non-finite entries")
        object.__setattr__(self, "rows", x)
        object.__setattr__(self, "schema", tuple(self.schema))
        object.__setattr__(self, "ids", tuple(self.ids))

    @classmethod
    def from_vectors(cls, vectors: Sequence[FeatureVector], ids: Sequence[str] = ()) -> "FeatureMatrix":
        if not vectors:
            raise ValueError("no feature vectors")
        schema = vectors[0].schema
        for v in vectors[1:]:
            if v.schema != schema:
                raise ValueError("feature vectors disagree on schema")
        return cls(np.stack([v.values for v in vectors]), schema, tuple(ids))

    @property
    def shape(self) -> tuple[int, int]:
        return self.rows.shape

    @property
    def column_stats(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-column mean and Euclidean norm."""
        return self.rows.mean(axis=0), np.linalg.norm(self.rows, axis=0)

    def take(self, idx) -> "FeatureMatrix":
        idx = np.asarray(idx)
        ids = tuple(self.ids[i] for i in idx) if self.ids else ()
        return FeatureMatrix(self.rows[idx], self.schema, ids)
