"""Rotation-averaged Fourier-modulus invariants."""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .features import FeatureVector, fourier_schema
from .signal import fft2


@lru_cache(maxsize=8)
def radius_bins(n: int) -> np.ndarray:
    """Nearest-integer radius ``round(|k|)`` of every DFT sample, in frequency-sample units."""
    k = np.fft.fftfreq(n) * n
    kx, ky = np.meshgrid(k, k, indexing="ij")
    bins = np.rint(np.sqrt(kx * kx + ky * ky)).astype(np.int64)
    bins.setflags(write=False)
    return bins


def fourier_features(grid, bins: str = "mean") -> FeatureVector:
    """Circular ``L^1`` and ``L^2`` averages of ``|rho_hat|``.

    ``rho_hat`` approximates the continuous transform (DFT times cell area).
    Radii ``1 .. N/2`` are binned to the nearest integer; ``bins="mean"``
    averages each annulus, ``bins="sum"`` sums it. Output order:
    total charge, the ``L^1`` values, their squares, the ``L^2`` values.
    """
    if bins not in ("mean", "sum"):
        raise ValueError("bins must be 'mean' or 'sum'")
    values = grid.values
    n = values.shape[0]
    area = grid.cell_area
    modulus = np.abs(fft2(values)) * area

    idx = radius_bins(n).ravel()
    n_r = n // 2
    count = np.bincount(idx, minlength=n_r + 1)[1:n_r + 1]
    s1 = np.bincount(idx, weights=modulus.ravel(), minlength=n_r + 1)[1:n_r + 1]
    s2 = np.bincount(idx, weights=(modulus * modulus).ravel(), minlength=n_r + 1)[1:n_r + 1]
    if bins == "mean":
        s1 = s1 / count
        s2 = s2 / count

    phi0 = values.sum() * area
    out = np.concatenate([[phi0], s1, s1 * s1, s2])
    return FeatureVector(out, fourier_schema(grid.J))
