"""Random planar test molecules with a closed-form pairwise energy.

The synthetic energy is a Morse sum over all atom pairs,

    E = sum_{a<b} D_ab * ((1 - exp(-beta (r_ab - r0_ab)))^2 - 1)

with ``D_ab = sqrt(D_a D_b)`` (kcal/mol), ``r0_ab`` the sum of covalent radii
and a common stiffness ``beta`` (1/Angstrom). It depends on interatomic
distances only, so it is invariant to rigid motions and atom relabelling.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .density import COVALENT_RADII, DensityError, check_in_box, default_profiles
from .molecule import Dataset, Molecule

# Per-species well depths in kcal/mol.
WELL_DEPTH = {"H": 40.0, "C": 85.0, "N": 70.0, "O": 90.0, "S": 60.0}
MORSE_BETA = 2.0
HEAVY_SPECIES = ("C", "N", "O", "S")
HEAVY_WEIGHTS = (0.55, 0.2, 0.15, 0.1)
# Planar (sp2-like) coordination: maximum number of bonded neighbours.
VALENCE = {"C": 3, "N": 3, "O": 2, "S": 2}
HYDROGEN_FILL = 0.85
BOND_JITTER = 0.02                 # Angstrom, standard deviation
ANGLE_JITTER = np.deg2rad(3.0)     # radians, standard deviation
MIN_DISTANCE = 0.9
MIN_HEAVY_DISTANCE = 1.2
HEAVY_RADIUS = 3.5


def _pair_params(species):
    depth = np.array([WELL_DEPTH[s] for s in species])
    rcov = np.array([COVALENT_RADII[s] for s in species])
    return np.sqrt(np.outer(depth, depth)), rcov[:, None] + rcov[None, :]


def morse_energy(species, positions, beta: float = MORSE_BETA) -> float:
    """Pairwise Morse energy in kcal/mol; positions in Angstrom (any dimension)."""
    pos = np.asarray(positions, dtype=np.float64)
    if len(pos) < 2:
        return 0.0
    D, r0 = _pair_params(species)
    iu = np.triu_indices(len(pos), 1)
    e = np.exp(-beta * (pdist(pos) - r0[iu]))
    return float(np.sum(D[iu] * ((1.0 - e) ** 2 - 1.0)))


def morse_gradient(species, positions, beta: float = MORSE_BETA) -> np.ndarray:
    """Analytic gradient of :func:`morse_energy` with respect to the positions."""
    pos = np.asarray(positions, dtype=np.float64)
    grad = np.zeros_like(pos)
    if len(pos) < 2:
        return grad
    D, r0 = _pair_params(species)
    r = squareform(pdist(pos))
    np.fill_diagonal(r, 1.0)
    e = np.exp(-beta * (r - r0))
    dv = 2.0 * D * beta * (1.0 - e) * e
    np.fill_diagonal(dv, 0.0)
    diff = pos[:, None, :] - pos[None, :, :]
    return np.einsum("ij,ijk->ik", dv / r, diff)


def _far_enough(points: list, p: np.ndarray, dmin: float) -> bool:
    return all(np.hypot(*(p - q)) >= dmin for q in points)


def _slots(direction_in: float | None, rng, valence: int) -> list[float]:
    """Free bond directions of an atom with planar 120 degree coordination.

    ``direction_in`` is the direction of the bond pointing back to the
    parent (``None`` for the root atom).
    """
    if direction_in is None:
        start = rng.uniform(0.0, 2.0 * np.pi)
        dirs = [start + k * 2.0 * np.pi / 3.0 for k in range(3)]
        return dirs[:valence]
    dirs = [direction_in + 2.0 * np.pi / 3.0, direction_in - 2.0 * np.pi / 3.0]
    if valence == 2:
        return [dirs[int(rng.integers(2))]]
    return dirs[: valence - 1]


def random_planar_molecule(rng: np.random.Generator, a: float = 11.0, name: str = "",
                           max_tries: int = 200) -> Molecule:
    """One random planar, organic-like molecule inside the ``[-a, a]^2`` box.

    Heavy atoms (2 to 9, drawn from C/N/O/S) grow as a tree in which every
    atom offers bond directions 120 degrees apart, up to its planar valence.
    Bond lengths are covalent-radius sums. Both lengths and angles get
    small Gaussian jitter. Free bond directions are then filled with
    hydrogens with probability 0.85. Heavy atoms stay within 3.5 A of the
    first atom, and all pairs are at least 0.9 A apart. Coordinates are 3D
    with ``z = 0``.
    """
    for _ in range(max_tries):
        n_heavy = int(rng.integers(2, 10))
        species = [str(rng.choice(HEAVY_SPECIES, p=HEAVY_WEIGHTS))]
        points = [np.zeros(2)]
        free = [_slots(None, rng, VALENCE[species[0]])]
        stalls = 0
        while len(points) < n_heavy and stalls < 50:
            open_atoms = [k for k, f in enumerate(free) if f]
            if not open_atoms:
                break
            parent = open_atoms[int(rng.integers(len(open_atoms)))]
            slot = int(rng.integers(len(free[parent])))
            angle = free[parent][slot] + rng.normal(0.0, ANGLE_JITTER)
            sym = str(rng.choice(HEAVY_SPECIES, p=HEAVY_WEIGHTS))
            bond = COVALENT_RADII[sym] + COVALENT_RADII[species[parent]] + rng.normal(0.0, BOND_JITTER)
            p = points[parent] + bond * np.array([np.cos(angle), np.sin(angle)])
            if np.hypot(*p) > HEAVY_RADIUS or not _far_enough(points, p, MIN_HEAVY_DISTANCE):
                stalls += 1
                continue
            free[parent].pop(slot)
            species.append(sym)
            points.append(p)
            free.append(_slots(angle + np.pi, rng, VALENCE[sym]))
        if len(points) < 2:
            continue
        n_heavy = len(points)
        for k in range(n_heavy):
            for direction in free[k]:
                if rng.uniform() > HYDROGEN_FILL:
                    continue
                angle = direction + rng.normal(0.0, ANGLE_JITTER)
                bond = COVALENT_RADII["H"] + COVALENT_RADII[species[k]] + rng.normal(0.0, BOND_JITTER)
                p = points[k] + bond * np.array([np.cos(angle), np.sin(angle)])
                if _far_enough(points, p, MIN_DISTANCE):
                    species.append("H")
                    points.append(p)
        xy = np.array(points)
        xy -= xy.mean(axis=0)
        pos = np.column_stack([xy, np.zeros(len(xy))])
        mol = Molecule(tuple(species), pos, None, name)
        # label from the canonical atom order so it reproduces bit-exactly
        mol = mol.with_energy(morse_energy(mol.species, mol.positions))
        try:
            check_in_box(mol, a, default_profiles(mol.species))
        except DensityError:
            continue
        return mol
    raise RuntimeError("could not place a molecule inside the box")


def make_synthetic_dataset(n: int, seed: int = 0, a: float = 11.0) -> Dataset:
    """``n`` random planar molecules labelled with the Morse energy; deterministic in ``seed``."""
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(seed)
    width = max(4, len(str(n - 1)))
    mols = tuple(random_planar_molecule(rng, a, f"synth{i:0{width}d}") for i in range(n))
    return Dataset(mols, name=f"synthetic-{n}-seed{seed}", provenance=f"make_synthetic_dataset({n}, {seed})")
