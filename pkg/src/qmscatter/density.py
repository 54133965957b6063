"""Approximate electron densities: atomic radial profiles and 2D rasterization.

A molecule's density is modelled as a superposition of isolated, spherically
symmetric atomic densities centred on the nuclei. For planar molecules each
3D atomic density is condensed onto the molecular plane by moving the charge
of every spherical shell of radius r onto the annulus of the same radius:

    4 pi r^2 rho3d(r) dr = 2 pi r rho2d(r) dr   =>   rho2d(r) = 2 r rho3d(r)

so the 2D profile carries exactly the same total charge.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Mapping

import numpy as np
from scipy.integrate import trapezoid
from scipy.optimize import brentq

from .molecule import ATOMIC_NUMBERS, Molecule, MoleculeError, normalize_symbol

# Covalent radii in Angstrom (Cordero et al. 2008); they set the default
# Slater decay rate q = 2 / r_cov.
COVALENT_RADII = {
    "H": 0.31, "He": 0.28, "Li": 1.28, "Be": 0.96, "B": 0.84, "C": 0.76,
    "N": 0.71, "O": 0.66, "F": 0.57, "Ne": 0.58, "Na": 1.66, "Mg": 1.41,
    "Al": 1.21, "Si": 1.11, "P": 1.07, "S": 1.05, "Cl": 1.02, "Ar": 1.06,
    "K": 2.03, "Ca": 1.76, "Se": 1.20, "Br": 1.20, "I": 1.39,
}

# Fraction of the analytic charge kept when a Slater profile is tabulated.
PROFILE_CHARGE_FRACTION = 0.9995
PROFILE_SAMPLES = 4001


class DensityError(ValueError):
    pass


@dataclass(frozen=True)
class RadialProfile:
    """Tabulated radial density of one species.

    ``dim`` is 3 for a volume density (e/A^3) and 2 for a condensed planar
    density (e/A^2). ``r`` starts at 0 and is strictly increasing; the
    density is taken to vanish beyond ``r[-1]``.
    """

    species: str
    r: np.ndarray
    values: np.ndarray
    dim: int = 3

    def __post_init__(self):
        r = np.asarray(self.r, dtype=np.float64)
        v = np.asarray(self.values, dtype=np.float64)
        if r.ndim != 1 or r.shape != v.shape or len(r) < 2:
            raise DensityError("profile needs matching 1D r and density arrays")
        if r[0] != 0.0 or np.any(np.diff(r) <= 0):
            raise DensityError("profile radii must start at 0 and increase strictly")
        if np.any(v < 0):
            raise DensityError("profile densities must be non-negative")
        if self.dim not in (2, 3):
            raise DensityError("profile dim must be 2 or 3")
        r.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "species", normalize_symbol(self.species))
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "values", v)

    @property
    def z(self) -> int:
        return ATOMIC_NUMBERS[self.species]

    @property
    def r_max(self) -> float:
        return float(self.r[-1])

    def charge(self) -> float:
        """Total charge by trapezoidal quadrature of the radial table."""
        if self.dim == 3:
            return float(4.0 * np.pi * trapezoid(self.r ** 2 * self.values, self.r))
        return float(2.0 * np.pi * trapezoid(self.r * self.values, self.r))

    def __call__(self, r) -> np.ndarray:
        return np.interp(r, self.r, self.values, right=0.0)


def slater_decay(species: str) -> float:
    species = normalize_symbol(species)
    if species not in COVALENT_RADII:
        raise DensityError(f"no default profile for species {species}")
    return 2.0 / COVALENT_RADII[species]


def _slater_cumulative(x: float) -> float:
    # fraction of charge of z q^3/(8 pi) exp(-q r) inside radius x / q
    return 1.0 - np.exp(-x) * (1.0 + x + 0.5 * x * x)


@lru_cache(maxsize=None)
def _slater_cutoff(fraction: float) -> float:
    return brentq(lambda x: _slater_cumulative(x) - fraction, 1e-6, 100.0)


def default_profile(species: str, decay: float | None = None) -> RadialProfile:
    """Slater-type 3D density ``z q^3/(8 pi) exp(-q r)``.

    The analytic form integrates to ``z`` exactly; the table stops at the
    radius enclosing ``PROFILE_CHARGE_FRACTION`` of the charge.
    """
    species = normalize_symbol(species)
    if species not in ATOMIC_NUMBERS:
        raise DensityError(f"unknown species {species}")
    q = slater_decay(species) if decay is None else float(decay)
    if q <= 0:
        raise DensityError("decay rate must be positive")
    z = ATOMIC_NUMBERS[species]
    r_max = _slater_cutoff(PROFILE_CHARGE_FRACTION) / q
    r = np.linspace(0.0, r_max, PROFILE_SAMPLES)
    rho = z * q ** 3 / (8.0 * np.pi) * np.exp(-q * r)
    return RadialProfile(species, r, rho, dim=3)


def condense_3d_to_2d(profile: RadialProfile) -> RadialProfile:
    """Shell-to-annulus condensation ``rho2d(r) = 2 r rho3d(r)``."""
    if profile.dim == 2:
        return profile
    return RadialProfile(profile.species, profile.r, 2.0 * profile.r * profile.values, dim=2)


def load_profile(path) -> RadialProfile:
    """Read a ``r,rho3d`` CSV whose first line is ``# species=<symbol> z=<int>``."""
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    header = {}
    if lines and lines[0].startswith("#"):
        for tok in lines[0][1:].split():
            if "=" in tok:
                k, v = tok.split("=", 1)
                header[k.strip()] = v.strip()
    if "species" not in header:
        raise DensityError(f"{path}: missing '# species=<symbol>' header")
    species = normalize_symbol(header["species"])
    if species not in ATOMIC_NUMBERS:
        raise DensityError(f"{path}: unknown species {species}")
    if "z" in header and int(header["z"]) != ATOMIC_NUMBERS[species]:
        raise DensityError(f"{path}: z={header['z']} does not match species {species}")
    r, rho = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        line = line.strip()
        if not line or line.startswith("#") or line.lower().startswith("r,"):
            continue
        try:
            a, b = line.split(",")[:2]
            r.append(float(a))
            rho.append(float(b))
        except ValueError:
            raise DensityError(f"{path}: malformed row at line {lineno}") from None
    return RadialProfile(species, np.array(r), np.array(rho), dim=3)


def default_profiles(species) -> dict[str, RadialProfile]:
    return {s: condense_3d_to_2d(default_profile(s)) for s in set(species)}


@dataclass(frozen=True)
class DensityGrid:
    """``2^J x 2^J`` samples of a planar density on ``[-a, a]^2``.

    ``values[i, j]`` is the density at ``(centers[i], centers[j])``;
    ``scale`` is the factor applied to enforce exact charge normalization
    (1.0 when rasterization was not normalized).
    """

    values: np.ndarray
    a: float
    J: int
    scale: float = 1.0

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def spacing(self) -> float:
        return 2.0 * self.a / self.n

    @property
    def cell_area(self) -> float:
        return self.spacing ** 2

    def integral(self) -> float:
        return float(self.values.sum() * self.cell_area)


def grid_centers(a: float, J: int) -> np.ndarray:
    """Cell centres ``(i + 1/2 - N/2) * delta``; symmetric about 0 bit-for-bit."""
    n = 2 ** J
    return (np.arange(n) + 0.5 - n / 2) * (2.0 * a / n)


def rasterize(
    mol: Molecule,
    profiles: Mapping[str, RadialProfile] | None = None,
    a: float = 11.0,
    J: int = 10,
    normalize: bool = True,
) -> DensityGrid:
    """Sample the superposed atomic densities of a planar molecule.

    Each atom contributes its 2D radial profile, linearly interpolated at
    the distance from every cell centre. With ``normalize`` the grid is then
    rescaled so its Riemann sum equals the total nuclear charge.

    Raises
    ------
    DensityError
        If an atom's profile support would cross the box boundary.
    """
    if mol.dim != 2:
        raise DensityError("rasterize expects a planarized (2D) molecule")
    if profiles is None:
        profiles = default_profiles(mol.species)
    profiles = {normalize_symbol(k): condense_3d_to_2d(p) for k, p in profiles.items()}

    centers = grid_centers(a, J)
    n = len(centers)
    delta = 2.0 * a / n
    values = np.zeros((n, n), dtype=np.float64)
    for k, (sym, p) in enumerate(zip(mol.species, mol.positions)):
        if sym not in profiles:
            raise DensityError(f"no density profile for species {sym}")
        prof = profiles[sym]
        margin = prof.r_max
        if np.any(np.abs(p) > a - margin):
            raise DensityError(
                f"atom {k} ({sym}) at ({p[0]:.3f}, {p[1]:.3f}) lies outside the safe box "
                f"|x|,|y| <= {a - margin:.3f} A (margin {margin:.3f} A)"
            )
        lo_x, hi_x = np.searchsorted(centers, [p[0] - margin, p[0] + margin])
        lo_y, hi_y = np.searchsorted(centers, [p[1] - margin, p[1] + margin])
        dx = centers[lo_x:hi_x, None] - p[0]
        dy = centers[None, lo_y:hi_y] - p[1]
        values[lo_x:hi_x, lo_y:hi_y] += prof(np.hypot(dx, dy))

    scale = 1.0
    if normalize:
        total = values.sum() * delta * delta
        if total <= 0:
            raise DensityError("density vanishes on the grid; increase J")
        scale = float(mol.charges.sum() / total)
        values *= scale
    values.setflags(write=False)
    return DensityGrid(values, float(a), int(J), scale)


def check_in_box(mol: Molecule, a: float, profiles: Mapping[str, RadialProfile] | None = None) -> None:
    """Raise :class:`DensityError` unless every atom fits with its profile margin."""
    if profiles is None:
        profiles = default_profiles(mol.species)
    for k, (sym, p) in enumerate(zip(mol.species, mol.positions)):
        margin = profiles[sym].r_max
        if np.any(np.abs(p[:2]) > a - margin):
            raise DensityError(f"atom {k} ({sym}) outside safe box (margin {margin:.3f} A)")


__all__ = [
    "COVALENT_RADII", "DensityError", "DensityGrid", "RadialProfile", "MoleculeError",
    "condense_3d_to_2d", "default_profile", "default_profiles", "grid_centers",
    "load_profile", "rasterize", "slater_decay", "check_in_box",
]
