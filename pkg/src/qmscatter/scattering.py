"""Second-order scattering invariants.

For each pair of scales ``j1 < j2`` the first-layer modulus
``U1(u, theta1) = |rho * psi_{j1,theta1}(u)|`` is convolved spatially with
``psi_{j2,theta2}`` and then, along ``theta1``, with the periodized angular
wavelets; the modulus of the result is pooled over space and over the
rotation-covariant direction ``theta1 + theta2`` at a fixed difference
``theta1 - theta2``.

Discretization notes:

* ``theta1`` carries ``L`` samples of ``[0, pi)``. For real densities ``U1``
  is pi-periodic in ``theta1``, so nothing is lost.
* ``theta2`` runs over the full circle with ``2L`` samples. Orientation
  ``theta2 + pi`` is the reversed filter, whose response to the real ``U1``
  is the complex conjugate of the ``theta2`` response, so the extra ``L``
  orientations come for free.
* The difference index ``d`` pairs ``theta1 = (m + d) mod L`` with
  ``theta2 = m`` for ``m = 0 .. 2L-1``. A rotation by one angular step
  shifts both indices by one and leaves every pooled sum unchanged.
* A mirror reflection maps ``d`` to ``-d``. The ``L`` emitted slots per
  ``(j1, j2, l2)`` are therefore reflection-symmetrized: slots ``0`` and
  ``L/2`` are self-mirror, slot ``a`` in ``(0, L/2)`` holds the mean of the
  ``+a`` and ``-a`` pools and slot ``L - a`` holds half their absolute
  difference.
"""

from __future__ import annotations

import numpy as np
import scipy.fft

from .features import FeatureVector, scattering_pairs, scattering_schema
from .signal import FilterBank, fft2, ifft2
from .wavelet import first_layer

# Upper bound on complex elements held per (j1, j2) chunk.
CHUNK_ELEMENTS = 2 ** 23


def _check(grid, bank: FilterBank):
    values = grid.values
    if values.shape != bank.spatial.shape[-2:]:
        raise ValueError(f"grid {values.shape} does not match filter bank {bank.spatial.shape[-2:]}")
    if bank.angular is None:
        raise ValueError("scattering needs a filter bank with angular wavelets")


def first_layer_all(grid, bank: FilterBank) -> np.ndarray:
    """``U1`` for every scale, shape ``(2J, L, N, N)``."""
    grid_hat = fft2(grid.values)
    return np.stack([first_layer(grid_hat, bank, k) for k in range(bank.n_scales)])


def angular_circulant(bank: FilterBank) -> np.ndarray:
    """Angular convolutions as matrices, shape ``(n_ell, L, L)``.

    ``C[l, i, t] = h_l[(i - t) mod L]`` with ``h_l`` the sampled angular
    wavelet, so ``C[l] @ x`` is the circular convolution of ``x`` with
    ``h_l`` along ``theta``.
    """
    h = scipy.fft.ifft(bank.angular, axis=-1)                      # (n_ell, L)
    idx = (np.arange(bank.L)[:, None] - np.arange(bank.L)[None, :]) % bank.L
    return h[:, idx]


def second_layer(u1_hat: np.ndarray, bank: FilterBank, k2: int, t2: np.ndarray,
                 angular_first: bool = False, circulant: np.ndarray | None = None) -> np.ndarray:
    """Complex second-layer coefficients before the modulus.

    Parameters
    ----------
    u1_hat : ndarray, shape (L, N, N)
        2D DFT of the first-layer modulus at scale ``j1``.
    k2 : int
        Second spatial scale index.
    t2 : ndarray of int
        Orientation indices ``theta2`` in ``0 .. L-1``.
    angular_first : bool
        Apply the angular wavelet before the spatial one (same result, the
        two act on different axes).
    circulant : ndarray, optional
        Output of :func:`angular_circulant`, to avoid rebuilding it per call.

    Returns
    -------
    ndarray, shape (n_ell, 2, L, len(t2), N, N)
        Axis 1 is the channel: 0 for ``theta2``, 1 for ``theta2 + pi``.
        Axis 2 is ``theta1``.
    """
    psi2 = bank.spatial[k2][t2]                           # (c, N, N)
    ang = bank.angular[:, :, None, None, None]            # (n_ell, L, 1, 1, 1)
    if angular_first:
        u1 = ifft2(u1_hat).real
        u1_ang_hat = scipy.fft.fft(u1, axis=0)            # (L, N, N)
        out = []
        for conj in (False, True):
            filt = ang if not conj else np.conj(ang[:, (-np.arange(bank.L)) % bank.L])
            a = scipy.fft.ifft(filt[..., 0] * u1_ang_hat[None], axis=1)   # (n_ell, L, N, N)
            z = ifft2(fft2(a)[:, :, None] * psi2[None, None])            # (n_ell, L, c, N, N)
            out.append(np.conj(z) if conj else z)
        return np.stack(out, axis=1)
    if circulant is None:
        circulant = angular_circulant(bank)
    z = ifft2(u1_hat[:, None] * psi2[None])               # (L, c, N, N)
    flat = z.reshape(bank.L, -1)
    w0 = circulant @ flat                                 # (n_ell, L, c*N*N)
    w1 = circulant @ np.conj(flat)
    return np.stack([w0, w1], axis=1).reshape((bank.n_angular, 2) + z.shape)


def second_layer_sums(grid, bank: FilterBank, u1: np.ndarray | None = None) -> np.ndarray:
    """Spatially pooled second-layer moments, before angular pooling.

    Returns an array of shape ``(n_pairs, 2, n_ell, L, 2L)`` with axes
    ``(pair, p-1, l2, theta1, theta2 over [0, 2 pi))``: the sums over ``u``
    of ``|W|`` and ``|W|^2``.
    """
    _check(grid, bank)
    L, n = bank.L, bank.n
    n_ell = bank.n_angular
    pairs = scattering_pairs(bank.J)
    if u1 is None:
        u1 = first_layer_all(grid, bank)
    out = np.zeros((len(pairs), 2, n_ell, L, 2 * L))
    chunk = max(1, min(L, CHUNK_ELEMENTS // (L * n * n * max(n_ell, 1))))
    # |C conj(z)| = |conj(C) z|: both channels' moduli from one product
    circ = angular_circulant(bank)
    both = np.stack([circ, np.conj(circ)], axis=1).reshape(-1, L)   # (n_ell*2*L, L)
    p = 0
    for k1 in range(bank.n_scales):
        u1_hat = fft2(u1[k1])
        for k2 in range(k1 + 1, bank.n_scales):
            for start in range(0, L, chunk):
                t2 = np.arange(start, min(L, start + chunk))
                z = ifft2(u1_hat[:, None] * bank.spatial[k2][t2][None])         # (L, c, N, N)
                w = np.abs(both @ z.reshape(L, -1)).reshape((n_ell, 2) + z.shape)
                s1 = w.sum(axis=(-2, -1))
                s2 = (w * w).sum(axis=(-2, -1))
                for ch in (0, 1):
                    cols = t2 + ch * L
                    out[p, 0, :, :, cols] = np.moveaxis(s1[:, ch], -1, 0)
                    out[p, 1, :, :, cols] = np.moveaxis(s2[:, ch], -1, 0)
            p += 1
    return out


def pool_difference(sums: np.ndarray) -> np.ndarray:
    """Sum over ``theta2`` at fixed ``d = theta1 - theta2 (mod L)``.

    ``sums[..., theta1, theta2]`` with ``theta2`` over ``2L`` samples maps to
    ``pooled[..., d]``.
    """
    L = sums.shape[-2]
    m = np.arange(2 * L)
    pooled = np.empty(sums.shape[:-2] + (L,))
    for d in range(L):
        pooled[..., d] = sums[..., (m + d) % L, m].sum(axis=-1)
    return pooled


def symmetrize_reflection(pooled: np.ndarray) -> np.ndarray:
    """Map the ``L`` difference pools to reflection-invariant slots (see module docstring)."""
    L = pooled.shape[-1]
    half = L // 2
    out = np.empty_like(pooled)
    out[..., 0] = pooled[..., 0]
    out[..., half] = pooled[..., half]
    for a in range(1, half):
        plus, minus = pooled[..., a], pooled[..., L - a]
        out[..., a] = 0.5 * (plus + minus)
        out[..., L - a] = 0.5 * np.abs(plus - minus)
    return out


def scattering_features(grid, bank: FilterBank) -> FeatureVector:
    """Wavelet invariants followed by the second-order invariants.

    The second-order block is ordered by ``(j1, j2, a, l2)`` and, within
    each index, emits ``phi_1``, ``phi_1^2`` and ``phi_2^2``.
    """
    _check(grid, bank)
    measure = grid.cell_area * np.pi / bank.L
    u1 = first_layer_all(grid, bank)
    m1 = u1.sum(axis=(1, 2, 3)) * measure
    m2 = (u1 * u1).sum(axis=(1, 2, 3)) * measure
    phi0 = grid.values.sum() * grid.cell_area
    first = np.concatenate([[phi0], m1, m1 * m1, m2])

    sums = second_layer_sums(grid, bank, u1)                     # (pairs, 2, ell, L, 2L)
    pooled = symmetrize_reflection(pool_difference(sums)) * measure   # (pairs, 2, ell, L)
    phi1 = pooled[:, 0]
    phi2 = pooled[:, 1]
    # (pairs, ell, a) -> (pairs, a, ell) then interleave p-types
    block = np.stack([phi1, phi1 * phi1, phi2], axis=-1)       # (pairs, ell, a, 3)
    block = np.transpose(block, (0, 2, 1, 3)).ravel()
    return FeatureVector(np.concatenate([first, block]), scattering_schema(bank.J, bank.L))
