"""Molecular states, XYZ ingestion, planar projection and fold assignment."""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

# Nuclear charges. The first six are the organic set; the rest are accepted
# so that unusual files still load, but they carry no special handling.
ATOMIC_NUMBERS = {
    "H": 1, "C": 6, "N": 7, "O": 8, "S": 16, "Cl": 17,
    "He": 2, "Li": 3, "Be": 4, "B": 5, "F": 9, "Ne": 10,
    "Na": 11, "Mg": 12, "Al": 13, "Si": 14, "P": 15, "Ar": 18,
    "K": 19, "Ca": 20, "Se": 34, "Br": 35, "I": 53,
}

ORGANIC_SPECIES = ("H", "C", "N", "O", "S", "Cl")

MIN_ATOM_DISTANCE = 0.05  # Angstrom

_ENERGY_RE = re.compile(r"energy\s*=\s*([-+0-9.eEdD]+)")


class ParseError(ValueError):
    """Raised for malformed XYZ input; the message names the line."""


class MoleculeError(ValueError):
    """Raised when a molecule violates a structural invariant."""


class NonPlanarError(MoleculeError):
    def __init__(self, deviation: float, tol: float, name: str = ""):
        self.deviation = deviation
        self.tol = tol
        label = f"{name}: " if name else ""
        super().__init__(
            f"{label}out-of-plane deviation {deviation:.4g} A exceeds tolerance {tol:.4g} A"
        )


def normalize_symbol(symbol: str) -> str:
    return symbol[:1].upper() + symbol[1:].lower()


def atomic_number(symbol: str) -> int:
    try:
        return ATOMIC_NUMBERS[normalize_symbol(symbol)]
    except KeyError:
        raise MoleculeError(f"unknown species {symbol}") from None


@dataclass(frozen=True)
class Molecule:
    """A molecular state: species, positions (Angstrom) and optional label.

    Atoms are stored in canonical order (nuclear charge, then coordinates
    lexicographically), so two inputs that differ only by atom ordering
    produce identical arrays and therefore bit-identical downstream sums.
    Positions are either ``(K, 3)`` or, after :func:`planarize`, ``(K, 2)``.
    """

    species: tuple[str, ...]
    positions: np.ndarray
    energy: float | None = None
    name: str = ""

    def __post_init__(self):
        species = tuple(normalize_symbol(s) for s in self.species)
        pos = np.array(self.positions, dtype=np.float64)
        if pos.ndim != 2 or pos.shape[1] not in (2, 3):
            raise MoleculeError(f"positions must have shape (K, 2) or (K, 3), got {pos.shape}")
        if len(species) != pos.shape[0]:
            raise MoleculeError("species and positions disagree on the atom count")
        if not species:
            raise MoleculeError("a molecule needs at least one atom")
        if not np.all(np.isfinite(pos)):
            raise MoleculeError("non-finite coordinate")
        z = np.array([atomic_number(s) for s in species])

        keys = [pos[:, c] for c in reversed(range(pos.shape[1]))] + [z]
        order = np.lexsort(keys)
        species = tuple(species[i] for i in order)
        pos = pos[order]
        pos.setflags(write=False)

        if len(species) > 1:
            diff = pos[:, None, :] - pos[None, :, :]
            dist = np.sqrt((diff ** 2).sum(-1))
            dist[np.diag_indices_from(dist)] = np.inf
            if dist.min() < MIN_ATOM_DISTANCE:
                raise MoleculeError(
                    f"atoms closer than {MIN_ATOM_DISTANCE} A ({dist.min():.3g} A)"
                )

        object.__setattr__(self, "species", species)
        object.__setattr__(self, "positions", pos)
        if self.energy is not None:
            object.__setattr__(self, "energy", float(self.energy))

    @property
    def charges(self) -> np.ndarray:
        return np.array([ATOMIC_NUMBERS[s] for s in self.species], dtype=np.int64)

    @property
    def n_atoms(self) -> int:
        return len(self.species)

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    def with_positions(self, positions) -> "Molecule":
        """Return a copy with new coordinates for the atoms in current order."""
        return Molecule(self.species, positions, self.energy, self.name)

    def with_energy(self, energy: float | None) -> "Molecule":
        return Molecule(self.species, self.positions, energy, self.name)


@dataclass(frozen=True)
class Dataset:
    molecules: tuple[Molecule, ...]
    name: str = ""
    provenance: str = ""

    def __len__(self):
        return len(self.molecules)

    def __getitem__(self, i):
        return self.molecules[i]

    def __iter__(self):
        return iter(self.molecules)

    @property
    def labels(self) -> np.ndarray:
        missing = [i for i, m in enumerate(self.molecules) if m.energy is None]
        if missing:
            raise MoleculeError(f"{len(missing)} molecules carry no energy label (first: {missing[0]})")
        return np.array([m.energy for m in self.molecules], dtype=np.float64)


# --------------------------------------------------------------------------
# XYZ
# --------------------------------------------------------------------------


def parse_xyz(text: str | bytes, name: str = "") -> Molecule:
    """Parse a single-frame extended-XYZ record.

    Line 1 holds the atom count, line 2 a comment that may contain
    ``energy=<kcal/mol>``, then one ``Symbol x y z`` line per atom.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise ParseError("malformed atom count at line 1")
    try:
        count = int(lines[0].split()[0])
    except ValueError:
        raise ParseError(f"malformed atom count {lines[0].strip()!r} at line 1") from None
    if count < 1:
        raise ParseError(f"malformed atom count {count} at line 1")

    comment = lines[1] if len(lines) > 1 else ""
    energy = None
    match = _ENERGY_RE.search(comment)
    if match:
        try:
            energy = float(match.group(1).replace("d", "e").replace("D", "e"))
        except ValueError:
            raise ParseError(f"malformed energy {match.group(1)!r} at line 2") from None

    species, coords = [], []
    for k in range(count):
        lineno = k + 3
        if lineno > len(lines):
            raise ParseError(f"expected {count} atom lines, input ends at line {len(lines)}")
        tokens = lines[lineno - 1].split()
        if len(tokens) < 4:
            raise ParseError(f"expected 'Symbol x y z' at line {lineno}")
        sym = normalize_symbol(tokens[0])
        if sym not in ATOMIC_NUMBERS:
            raise ParseError(f"unknown species {tokens[0]} at line {lineno}")
        xyz = []
        for tok in tokens[1:4]:
            try:
                xyz.append(float(tok))
            except ValueError:
                raise ParseError(f"non-numeric coordinate {tok!r} at line {lineno}") from None
        species.append(sym)
        coords.append(xyz)

    try:
        return Molecule(tuple(species), np.array(coords), energy, name)
    except MoleculeError as exc:
        raise ParseError(str(exc)) from None


def format_xyz(mol: Molecule) -> str:
    """Serialize with 17 significant digits so a re-parse is bit-exact."""
    comment = f"energy={mol.energy!r}" if mol.energy is not None else ""
    if mol.name:
        comment = f"{comment} name={mol.name}".strip()
    out = [str(mol.n_atoms), comment]
    pos = mol.positions
    for sym, p in zip(mol.species, pos):
        z = p[2] if pos.shape[1] == 3 else 0.0
        out.append(f"{sym} {p[0]:.17g} {p[1]:.17g} {z:.17g}")
    return "\n".join(out) + "\n"


def read_xyz(path) -> Molecule:
    path = Path(path)
    try:
        return parse_xyz(path.read_bytes(), name=path.stem)
    except ParseError as exc:
        raise ParseError(f"{path}: {exc}") from None


def load_manifest(path) -> Dataset:
    """Load a dataset from a text file listing one XYZ path per line.

    Relative paths are resolved against the manifest's directory; blank
    lines and ``#`` comments are ignored.
    """
    path = Path(path)
    base = path.parent
    molecules = []
    for line in path.read_text(encoding="utf-8").splitlines():
        entry = line.split("#", 1)[0].strip()
        if not entry:
            continue
        p = Path(entry)
        if not p.is_absolute():
            p = base / p
        molecules.append(read_xyz(p))
    return Dataset(tuple(molecules), name=path.stem, provenance=str(path))


def write_dataset(dataset: Dataset, directory) -> Path:
    """Write one XYZ file per molecule plus ``manifest.txt``; returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    width = max(4, len(str(len(dataset))))
    entries = []
    for i, mol in enumerate(dataset):
        fname = f"{mol.name or 'mol' + str(i).zfill(width)}.xyz"
        (directory / fname).write_text(format_xyz(mol), encoding="utf-8")
        entries.append(fname)
    manifest = directory / "manifest.txt"
    manifest.write_text("\n".join(entries) + "\n", encoding="utf-8")
    return manifest


# --------------------------------------------------------------------------
# Planar projection
# --------------------------------------------------------------------------


def fit_plane(positions: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    """Least-squares plane through a point cloud.

    Returns ``(centroid, unit normal, max |distance to plane|)``. The normal
    is oriented so its z component is non-negative; when the plane is not
    unique (collinear or coincident points) the candidate closest to the z
    axis is chosen, which keeps already-flat inputs in their own plane.
    """
    pos = np.asarray(positions, dtype=np.float64)
    if pos.shape[1] == 2:
        pos = np.column_stack([pos, np.zeros(len(pos))])
    centroid = pos.mean(axis=0)
    centered = pos - centroid
    _, s, vt = np.linalg.svd(centered, full_matrices=True)
    s = np.concatenate([s, np.zeros(3 - len(s))])
    scale = max(s[0], 1.0)
    normal = vt[2]
    if s[1] - s[2] <= 1e-9 * scale:
        # Degenerate: any unit vector in span(vt[1], vt[2]) (or all of R^3) fits.
        basis = vt[1:] if s[0] > 1e-9 * scale else np.eye(3)
        ez = np.array([0.0, 0.0, 1.0])
        cand = basis.T @ (basis @ ez)
        if np.linalg.norm(cand) > 1e-12:
            normal = cand / np.linalg.norm(cand)
    if normal[2] < 0 or (normal[2] == 0 and normal[np.flatnonzero(normal)[0]] < 0):
        normal = -normal
    deviation = float(np.abs(centered @ normal).max())
    return centroid, normal, deviation


def _rotation_to_z(normal: np.ndarray) -> np.ndarray:
    ez = np.array([0.0, 0.0, 1.0])
    v = np.cross(normal, ez)
    c = float(normal @ ez)
    if np.linalg.norm(v) < 1e-15:
        return np.eye(3)
    vx = np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])
    return np.eye(3) + vx + vx @ vx / (1.0 + c)


def plane_deviation(mol: Molecule) -> float:
    return fit_plane(mol.positions)[2]


def planarize(mol: Molecule, tol: float = 0.1) -> Molecule:
    """Project a nearly planar molecule into 2D plane coordinates.

    The molecule is rotated so the best-fit plane normal maps to the z axis
    (minimal rotation, so already-flat inputs keep their x/y coordinates),
    flattened, and recentered so the nuclear centroid is the origin.

    Raises
    ------
    NonPlanarError
        If some atom sits farther than ``tol`` from the best-fit plane.
    """
    centroid, normal, deviation = fit_plane(mol.positions)
    if deviation > tol:
        raise NonPlanarError(deviation, tol, mol.name)
    pos = mol.positions
    if pos.shape[1] == 2:
        xy = pos - pos.mean(axis=0)
    else:
        rot = _rotation_to_z(normal)
        xy = ((pos - centroid) @ rot.T)[:, :2]
        xy = xy - xy.mean(axis=0)
    return Molecule(mol.species, xy, mol.energy, mol.name)


# --------------------------------------------------------------------------
# Cross-validation folds
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class FoldAssignment:
    fold_of: np.ndarray
    n_folds: int
    seed: int = 0

    def __post_init__(self):
        arr = np.asarray(self.fold_of, dtype=np.int64)
        arr.setflags(write=False)
        object.__setattr__(self, "fold_of", arr)

    def __len__(self):
        return len(self.fold_of)

    def indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of == fold)

    def split(self, fold: int) -> tuple[np.ndarray, np.ndarray]:
        """(train indices, held-out indices) for one fold."""
        return np.flatnonzero(self.fold_of != fold), np.flatnonzero(self.fold_of == fold)

    def subset(self, rows: np.ndarray) -> "FoldAssignment":
        """Restrict to ``rows``, relabelling the surviving folds to 0..k-1."""
        sub = self.fold_of[np.asarray(rows)]
        present = np.unique(sub)
        remap = {int(f): i for i, f in enumerate(present)}
        return FoldAssignment(np.array([remap[int(f)] for f in sub]), len(present), self.seed)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["index", "fold"])
            for i, f in enumerate(self.fold_of):
                writer.writerow([i, int(f)])


def assign_folds(data: Dataset | Sequence[float], n_folds: int = 5, seed: int = 0) -> FoldAssignment:
    """Energy-stratified fold assignment.

    Molecules are sorted by label and dealt out in consecutive blocks of
    ``n_folds``; inside each block the fold order is shuffled by a seeded
    generator. A trailing partial block goes to a random subset of folds,
    so fold sizes never differ by more than one.
    """
    if n_folds < 2:
        raise ValueError("n_folds must be at least 2")
    labels = data.labels if isinstance(data, Dataset) else np.asarray(data, dtype=np.float64)
    if np.any(~np.isfinite(labels)):
        raise MoleculeError("fold assignment requires a finite label for every molecule")
    n = len(labels)
    if n < n_folds:
        raise ValueError(f"cannot split {n} molecules into {n_folds} folds")
    rng = np.random.default_rng(seed)
    order = np.argsort(labels, kind="stable")
    fold_of = np.empty(n, dtype=np.int64)
    for start in range(0, n, n_folds):
        block = order[start:start + n_folds]
        fold_of[block] = rng.permutation(n_folds)[: len(block)]
    return FoldAssignment(fold_of, n_folds, seed)


def read_folds_csv(path) -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    out = np.empty(len(rows), dtype=np.int64)
    for row in rows:
        out[int(row["index"])] = int(row["fold"])
    return out
