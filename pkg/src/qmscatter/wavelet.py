"""First-order wavelet invariants: modulus of the wavelet transform pooled over space and angle."""

from __future__ import annotations

import numpy as np

from .features import FeatureVector, wavelet_schema
from .signal import FilterBank, fft2, ifft2


def first_layer(grid_hat: np.ndarray, bank: FilterBank, k: int) -> np.ndarray:
    """``|rho * psi_{k, theta}|`` for all ``L`` angles, shape ``(L, N, N)``."""
    return np.abs(ifft2(grid_hat * bank.spatial[k]))


def wavelet_moments(grid, bank: FilterBank) -> tuple[np.ndarray, np.ndarray]:
    """Pooled ``L^1`` and ``L^2``-squared moments per scale.

    The measure is the cell area times ``pi/L`` per orientation sample, so
    the sums approximate integrals over the plane and over ``[0, pi)``.
    """
    values = grid.values
    if values.shape != bank.spatial.shape[-2:]:
        raise ValueError(f"grid {values.shape} does not match filter bank {bank.spatial.shape[-2:]}")
    measure = grid.cell_area * np.pi / bank.L
    grid_hat = fft2(values)
    m1 = np.empty(bank.n_scales)
    m2 = np.empty(bank.n_scales)
    for k in range(bank.n_scales):
        u1 = first_layer(grid_hat, bank, k)
        m1[k] = u1.sum() * measure
        m2[k] = (u1 * u1).sum() * measure
    return m1, m2


def wavelet_features(grid, bank: FilterBank) -> FeatureVector:
    """Total charge, then ``phi_{j,1}``, ``phi_{j,1}^2`` and ``phi_{j,2}^2`` for every scale."""
    m1, m2 = wavelet_moments(grid, bank)
    phi0 = grid.values.sum() * grid.cell_area
    out = np.concatenate([[phi0], m1, m1 * m1, m2])
    return FeatureVector(out, wavelet_schema(bank.J))
