import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import minimize

from qmscatter.molecule import (
    Dataset, Molecule, MoleculeError, NonPlanarError, ParseError, assign_folds, format_xyz,
    load_manifest, parse_xyz, planarize, read_folds_csv, write_dataset,
)


def test_parse_single_atom_with_energy():
    m = parse_xyz("1\nenergy=-13.6\nH 0 0 0")
    assert m.n_atoms == 1
    assert list(m.charges) == [1]
    assert m.energy == -13.6


def test_parse_without_label():
    m = parse_xyz("2\n\nH 0 0 0\nH 0.74 0 0")
    assert m.n_atoms == 2
    assert m.energy is None


def test_parse_bytes_input():
    m = parse_xyz(b"1\n\nC 0 0 0")
    assert list(m.charges) == [6]


@pytest.mark.parametrize("text, message", [
    ("2\n\nH 0 0 0\nXx 1 0 0", "unknown species Xx at line 4"),
    ("two\n\nH 0 0 0", "malformed atom count"),
    ("1\n\nH 0 zero 0", "non-numeric coordinate 'zero' at line 3"),
    ("3\n\nH 0 0 0\nH 1 0 0", "expected 3 atom lines"),
    ("2\n\nH 0 0 0\nH 0.01 0 0", "closer than"),
])
def test_parse_errors(text, message):
    with pytest.raises(ParseError, match=message):
        parse_xyz(text)


def test_roundtrip_is_bit_exact():
    rng = np.random.default_rng(3)
    pos = rng.normal(size=(6, 3)) * 2.0
    m = Molecule(("C", "C", "O", "H", "H", "N"), pos, energy=-123.456789012345678, name="x")
    again = parse_xyz(format_xyz(m), name="x")
    assert np.array_equal(again.positions, m.positions)
    assert again.species == m.species
    assert again.energy == m.energy


def test_canonical_order_is_permutation_invariant():
    rng = np.random.default_rng(0)
    pos = rng.normal(size=(5, 3))
    sp = ("O", "C", "H", "C", "H")
    perm = [3, 1, 4, 0, 2]
    a = Molecule(sp, pos)
    b = Molecule(tuple(sp[i] for i in perm), pos[perm])
    assert a.species == b.species
    assert np.array_equal(a.positions, b.positions)


def test_species_case_is_normalized():
    assert Molecule(("cl",), [[0.0, 0.0, 0.0]]).species == ("Cl",)


def test_empty_molecule_rejected():
    with pytest.raises(MoleculeError):
        Molecule((), np.zeros((0, 3)))


def test_manifest_roundtrip(tmp_path):
    mols = tuple(Molecule(("C", "H"), [[0, 0, 0], [1.1, 0, 0]], energy=-float(i), name=f"m{i}")
                 for i in range(3))
    manifest = write_dataset(Dataset(mols), tmp_path)
    data = load_manifest(manifest)
    assert len(data) == 3
    assert [m.energy for m in data] == [0.0, -1.0, -2.0]


# -- planarize ---------------------------------------------------------------


def test_planarize_flat_input_keeps_coordinates():
    pos = np.array([[0.0, 0.0, 0.0], [1.2, 0.0, 0.0], [0.3, 1.0, 0.0]])
    flat = planarize(Molecule(("C", "C", "O"), pos))
    expect = Molecule(("C", "C", "O"), pos[:, :2] - pos[:, :2].mean(axis=0))
    assert flat.dim == 2
    assert np.allclose(flat.positions, expect.positions, atol=1e-12)


def _orthogonal_fit_deviation(pos):
    # independent oracle: minimize the summed squared orthogonal distance over normals
    c = pos - pos.mean(axis=0)

    def normal(v):
        th, ph = v
        return np.array([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)])

    best = None
    for start in ([0.1, 0.1], [1.0, 1.0], [2.0, -1.0]):
        res = minimize(lambda v: np.sum((c @ normal(v)) ** 2), start, method="Nelder-Mead",
                       options={"xatol": 1e-12, "fatol": 1e-16, "maxiter": 20000})
        if best is None or res.fun < best.fun:
            best = res
    return np.abs(c @ normal(best.x)).max()


def test_planarize_rejects_out_of_plane_atom():
    pos = np.array([[0.0, 0.0, 0.0], [1.5, 0.0, 0.0], [0.0, 1.5, 0.0], [1.5, 1.5, 0.5]])
    with pytest.raises(NonPlanarError) as info:
        planarize(Molecule(("C", "C", "C", "C"), pos), tol=0.1)
    dev = info.value.deviation
    assert dev == pytest.approx(_orthogonal_fit_deviation(pos), abs=1e-6)
    assert 0.1 < dev <= 0.5


def test_planarize_tilted_plane():
    rng = np.random.default_rng(5)
    xy = rng.uniform(-2, 2, size=(6, 2))
    pos = np.column_stack([xy, np.zeros(6)])
    axis = np.array([1.0, 2.0, 0.5]) / np.linalg.norm([1.0, 2.0, 0.5])
    ang = 0.7
    K = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
    R = np.eye(3) + np.sin(ang) * K + (1 - np.cos(ang)) * K @ K
    flat = planarize(Molecule(("C",) * 6, pos @ R.T + [3.0, -1.0, 2.0]))
    d0 = np.linalg.norm(xy[:, None] - xy[None], axis=-1)
    d1 = np.linalg.norm(flat.positions[:, None] - flat.positions[None], axis=-1)
    assert np.allclose(np.sort(d0.ravel()), np.sort(d1.ravel()), atol=1e-12)


coords = st.lists(
    st.tuples(st.floats(-4, 4), st.floats(-4, 4), st.floats(-0.04, 0.04)),
    min_size=1, max_size=8, unique_by=lambda t: (round(t[0], 1), round(t[1], 1)),
)


@settings(max_examples=60, deadline=None)
@given(coords)
def test_planarize_centroid_and_idempotence(points):
    pos = np.array(points)
    d = np.linalg.norm(pos[:, None] - pos[None], axis=-1) + np.eye(len(pos))
    if d.min() < 0.1:
        return
    once = planarize(Molecule(("C",) * len(pos), pos))
    twice = planarize(once)
    assert np.abs(once.positions.mean(axis=0)).max() < 1e-12
    assert np.allclose(once.positions, twice.positions, atol=1e-12)


# -- folds -------------------------------------------------------------------


def test_folds_balanced_ten_by_five():
    fa = assign_folds(np.arange(10.0), 5, seed=0)
    assert np.bincount(fa.fold_of).tolist() == [2] * 5


def test_folds_stratified():
    labels = np.arange(1.0, 11.0)
    fa = assign_folds(labels, 5, seed=4)
    for f in range(5):
        members = sorted(labels[fa.indices(f)])
        assert members[0] <= 5 and members[1] >= 6


def test_folds_deterministic():
    y = np.random.default_rng(1).normal(size=37)
    assert np.array_equal(assign_folds(y, 5, 9).fold_of, assign_folds(y, 5, 9).fold_of)


def test_folds_need_labels():
    data = Dataset((Molecule(("H",), [[0, 0, 0]]), Molecule(("H",), [[1, 0, 0]])))
    with pytest.raises(MoleculeError):
        assign_folds(data, 2)


def test_folds_csv_roundtrip(tmp_path):
    fa = assign_folds(np.arange(12.0), 4, 2)
    fa.to_csv(tmp_path / "folds.csv")
    assert np.array_equal(read_folds_csv(tmp_path / "folds.csv"), fa.fold_of)


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 10), st.integers(0, 60), st.integers(0, 2 ** 31))
def test_folds_property(n_folds, extra, seed):
    n = n_folds + extra
    y = np.random.default_rng(seed).normal(size=n)
    fa = assign_folds(y, n_folds, seed)
    sizes = np.bincount(fa.fold_of, minlength=n_folds)
    assert sizes.max() - sizes.min() <= 1
    assert np.array_equal(fa.fold_of, assign_folds(y, n_folds, seed).fold_of)
