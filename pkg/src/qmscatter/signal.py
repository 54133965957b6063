"""FFT helpers and Morlet filter banks.

Conventions
-----------
* ``fft2`` is the unnormalized forward DFT and ``ifft2`` carries ``1/N^2``,
  so ``sum |g|^2 == sum |fft2(g)|^2 / N^2``.
* Spatial filters live on the ``2^J x 2^J`` DFT grid in pixel units. The
  filter with scale index ``k`` has dilation ``2^(k/2)`` pixels
  (``k = 0 .. 2J-1``); its orientation is ``theta = t * pi / L``.
* Filters are sampled from the closed-form Fourier transform of the Morlet
  wavelet, which is real-valued. The Nyquist row and column are zeroed:
  the DFT cannot distinguish ``+pi`` from ``-pi`` and keeping those samples
  would break exact 90 degree rotation and reflection symmetry of the bank.
* Angular filters act on the ``L`` orientation samples of ``[0, pi)``;
  their length unit is one angular sample.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft

FFT_CONVENTION = "fwd-unnormalized/inv-1overN2"

DEFAULT_SLANT = 0.5
DEFAULT_XI = 3.0 * np.pi / 4.0


def _check_pow2(n: int) -> None:
    if n < 1 or n & (n - 1):
        raise ValueError(f"grid side must be a power of two, got {n}")


def fft2(grid: np.ndarray) -> np.ndarray:
    """Forward 2D DFT over the last two axes (no normalization)."""
    grid = np.asarray(grid)
    _check_pow2(grid.shape[-1])
    _check_pow2(grid.shape[-2])
    return scipy.fft.fft2(grid, axes=(-2, -1))


def ifft2(spectrum: np.ndarray) -> np.ndarray:
    """Inverse 2D DFT over the last two axes (carries ``1/N^2``)."""
    spectrum = np.asarray(spectrum)
    _check_pow2(spectrum.shape[-1])
    _check_pow2(spectrum.shape[-2])
    return scipy.fft.ifft2(spectrum, axes=(-2, -1))


def frequency_grid(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Angular frequencies (rad/sample) of an ``n x n`` DFT, indexed like its output."""
    w = 2.0 * np.pi * np.fft.fftfreq(n)
    return np.meshgrid(w, w, indexing="ij")


def morlet_constant(xi: float) -> float:
    """Offset ``C`` that gives the Morlet wavelet a zero integral."""
    return float(np.exp(-0.5 * xi * xi))


def morlet_hat_2d(w1, w2, slant: float, xi: float) -> np.ndarray:
    """Fourier transform of ``exp(-(u1^2 + u2^2/slant^2)/2) (exp(i xi u1) - C)``."""
    c = morlet_constant(xi)
    s2 = slant * slant
    return 2.0 * np.pi * slant * (
        np.exp(-0.5 * ((w1 - xi) ** 2 + s2 * w2 ** 2))
        - c * np.exp(-0.5 * (w1 ** 2 + s2 * w2 ** 2))
    )


@dataclass(frozen=True)
class FilterBank:
    """Precomputed spatial and angular wavelets for one grid size.

    ``spatial[k, t]`` is the (real) frequency response of the wavelet with
    dilation ``2^(k/2)`` and angle ``t*pi/L``; ``angular[l]`` is the DFT of the
    periodized 1D wavelet of dilation ``2^l`` on the ``L``-point circle.
    """

    J: int
    L: int
    slant: float
    xi: float
    spatial: np.ndarray
    angular: np.ndarray | None = None
    angular_xi: float = DEFAULT_XI
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def n(self) -> int:
        return 2 ** self.J

    @property
    def n_scales(self) -> int:
        return self.spatial.shape[0]

    @property
    def scales(self) -> np.ndarray:
        """Scale labels ``j = k/2``."""
        return np.arange(self.n_scales) / 2.0

    @property
    def angles(self) -> np.ndarray:
        return np.arange(self.L) * np.pi / self.L

    @property
    def n_angular(self) -> int:
        return 0 if self.angular is None else self.angular.shape[0]

    @property
    def C(self) -> float:
        return morlet_constant(self.xi)


def make_spatial_bank(J: int, L: int = 8, slant: float = DEFAULT_SLANT, xi: float = DEFAULT_XI) -> np.ndarray:
    """Morlet wavelets ``psi_{j,theta}(u) = 2^-k psi(2^(-k/2) r_{-theta} u)``.

    Returns a real array of shape ``(2J, L, 2^J, 2^J)`` holding frequency
    responses; scale ``k`` has dilation ``2^(k/2)`` pixels and angle index
    ``t`` is ``theta = t pi / L``.
    """
    if J < 2:
        raise ValueError("J must be at least 2")
    if L < 2 or L & (L - 1):
        raise ValueError("L must be a power of two >= 2")
    n = 2 ** J
    w1, w2 = frequency_grid(n)
    bank = np.empty((2 * J, L, n, n), dtype=np.float64)
    for t in range(L):
        theta = t * np.pi / L
        c, s = np.cos(theta), np.sin(theta)
        # r_{-theta} applied to the frequency vector
        v1 = c * w1 + s * w2
        v2 = -s * w1 + c * w2
        for k in range(2 * J):
            scale = 2.0 ** (k / 2.0)
            bank[k, t] = morlet_hat_2d(scale * v1, scale * v2, slant, xi)
    bank[:, :, n // 2, :] = 0.0
    bank[:, :, :, n // 2] = 0.0
    bank[:, :, 0, 0] = 0.0
    return bank


def periodize(func, n_samples: int, scale: float, tol: float = 1e-12, max_terms: int = 10_000) -> np.ndarray:
    """Sample ``sum_k func((t - k n) / scale)`` at ``t = 0..n-1``.

    Periodic images are added in order of distance until a full pair of
    terms falls below ``tol`` in modulus.
    """
    t = np.arange(n_samples, dtype=np.float64)
    out = np.asarray(func(t / scale), dtype=np.complex128).copy()
    for k in range(1, max_terms):
        left = np.asarray(func((t + k * n_samples) / scale))
        right = np.asarray(func((t - k * n_samples) / scale))
        out += left + right
        if max(np.abs(left).max(), np.abs(right).max()) < tol:
            break
    return out


def angular_wavelet(L: int, ell: int, xi: float = DEFAULT_XI, tol: float = 1e-12) -> np.ndarray:
    """Periodized 1D Morlet of dilation ``2^ell`` on the ``L``-point circle (sample domain).

    The offset constant is computed from the periodized samples themselves
    so the discrete mean is zero to rounding.
    """
    scale = 2.0 ** ell
    envelope = periodize(lambda x: np.exp(-0.5 * x * x), L, scale, tol).real
    wave = periodize(lambda x: np.exp(-0.5 * x * x + 1j * xi * x), L, scale, tol)
    c = (wave.sum() / envelope.sum()).real
    return (wave - c * envelope) / scale


def make_angular_bank(L: int, xi: float = DEFAULT_XI) -> np.ndarray:
    """DFTs of the periodized angular wavelets, shape ``(log2 L, L)``."""
    if L < 4 or L & (L - 1):
        raise ValueError("L must be a power of two >= 4")
    n_ell = int(np.log2(L))
    return np.stack([np.fft.fft(angular_wavelet(L, ell, xi)) for ell in range(n_ell)])


def make_bank(J: int, L: int = 8, slant: float = DEFAULT_SLANT, xi: float = DEFAULT_XI,
              angular: bool = True) -> FilterBank:
    spatial = make_spatial_bank(J, L, slant, xi)
    ang = make_angular_bank(L, xi) if angular else None
    return FilterBank(J, L, slant, xi, spatial, ang, xi)


def wavelet_transform(grid, bank: FilterBank | np.ndarray) -> np.ndarray:
    """Circular convolution with every spatial wavelet.

    Returns a complex stack of shape ``(2J, L, N, N)``. Memory grows as
    ``2J L N^2``; the feature extractors stream one scale at a time instead.
    """
    values = getattr(grid, "values", grid)
    filters = bank.spatial if isinstance(bank, FilterBank) else np.asarray(bank)
    if values.shape != filters.shape[-2:]:
        raise ValueError(f"grid shape {values.shape} does not match bank {filters.shape[-2:]}")
    return ifft2(fft2(values) * filters)


def circular_convolve_angle(stack: np.ndarray, filter_hat: np.ndarray, axis: int = 0) -> np.ndarray:
    """Length-L circular convolution along ``axis`` with a filter given by its DFT."""
    stack = np.asarray(stack)
    filter_hat = np.asarray(filter_hat)
    if stack.shape[axis] != filter_hat.shape[-1]:
        raise ValueError(
            f"angular axis has length {stack.shape[axis]}, filter has {filter_hat.shape[-1]}"
        )
    shape = [1] * stack.ndim
    shape[axis] = -1
    return scipy.fft.ifft(scipy.fft.fft(stack, axis=axis) * filter_hat.reshape(shape), axis=axis)


def littlewood_paley(bank: FilterBank, full_circle: bool = False) -> np.ndarray:
    """``sum_{k,t} |psi_hat_{k,t}(w)|^2`` on the DFT grid.

    With ``full_circle`` the sum also covers the reversed filters
    (orientations in ``[pi, 2 pi)``), i.e. ``psi_hat(-w)``.
    """
    lp = (bank.spatial ** 2).sum(axis=(0, 1))
    if full_circle:
        flipped = np.roll(lp[::-1, ::-1], 1, axis=(0, 1))
        lp = lp + flipped
    return lp
