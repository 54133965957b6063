import numpy as np
import pytest
from scipy.integrate import quad, trapezoid

from qmscatter.density import (
    DensityError, RadialProfile, condense_3d_to_2d, default_profile, grid_centers, load_profile,
    rasterize,
)
from qmscatter.molecule import Molecule, planarize
from qmscatter.synthetic import make_synthetic_dataset


@pytest.mark.parametrize("species, z", [("H", 1), ("C", 6), ("O", 8), ("S", 16)])
def test_default_profile_charge(species, z):
    p = default_profile(species)
    assert p.charge() == pytest.approx(z, rel=1e-3)
    assert np.all(p.values >= 0)


def test_doubled_decay_keeps_charge_and_shrinks_support():
    p1 = default_profile("C")
    q = 2.0 / 0.76
    p2 = default_profile("C", decay=2 * q)
    # independent quadrature of the tabulated tables
    c1 = quad(lambda r: 4 * np.pi * r * r * p1(r), 0, p1.r_max, limit=200)[0]
    c2 = quad(lambda r: 4 * np.pi * r * r * p2(r), 0, p2.r_max, limit=200)[0]
    assert c1 == pytest.approx(6, rel=1e-3)
    assert c2 == pytest.approx(6, rel=1e-3)
    assert p2.r_max == pytest.approx(p1.r_max / 2)


def test_unknown_species_profile():
    with pytest.raises(DensityError):
        default_profile("Xe")


def test_condense_vanishes_at_origin_and_is_linear():
    p = default_profile("N")
    flat = condense_3d_to_2d(p)
    assert flat.values[0] == 0.0
    scaled = RadialProfile("N", p.r, 3.0 * p.values)
    assert np.allclose(condense_3d_to_2d(scaled).values, 3.0 * flat.values, rtol=1e-15)


def test_condensed_hydrogen_charge():
    flat = condense_3d_to_2d(default_profile("H"))
    total = 2 * np.pi * trapezoid(flat.r * flat.values, flat.r)
    assert total == pytest.approx(1.0, abs=1e-3)


def test_load_profile(tmp_path):
    p = default_profile("O")
    lines = ["# species=O z=8", "r,rho3d"] + [f"{a!r},{b!r}" for a, b in zip(p.r.tolist(), p.values.tolist())]
    (tmp_path / "O.csv").write_text("\n".join(lines))
    q = load_profile(tmp_path / "O.csv")
    assert q.species == "O"
    assert np.array_equal(q.values, p.values)
    (tmp_path / "bad.csv").write_text("# species=O z=7\n0,1\n")
    with pytest.raises(DensityError, match="does not match"):
        load_profile(tmp_path / "bad.csv")


def test_single_hydrogen_normalization():
    g = rasterize(Molecule(("H",), [[0.0, 0.0]]), a=11.0, J=8)
    assert g.integral() == pytest.approx(1.0, rel=1e-13)
    assert 0.99 <= g.scale <= 1.01
    assert np.all(g.values >= 0)


def test_rasterize_permutation_bit_identical():
    pos = np.array([[0.0, 0.0], [1.3, 0.2], [-0.9, 0.7]])
    a = rasterize(Molecule(("C", "O", "H"), pos), J=7)
    b = rasterize(Molecule(("H", "C", "O"), pos[[2, 0, 1]]), J=7)
    assert np.array_equal(a.values, b.values)


def test_linear_superposition():
    one = rasterize(Molecule(("H",), [[-5.0, 0.0]]), J=8, normalize=False).values
    two = rasterize(Molecule(("H",), [[5.0, 0.0]]), J=8, normalize=False).values
    both = rasterize(Molecule(("H", "H"), [[-5.0, 0.0], [5.0, 0.0]]), J=8, normalize=False).values
    assert np.abs(both - (one + two)).max() < 1e-12


def test_translation_by_one_cell():
    J, a = 7, 11.0
    d = 2 * a / 2 ** J
    pos = np.array([[0.1, 0.3], [1.4, -0.2]])
    g = rasterize(Molecule(("C", "N"), pos), a=a, J=J, normalize=False).values
    h = rasterize(Molecule(("C", "N"), pos + [d, 0.0]), a=a, J=J, normalize=False).values
    assert np.abs(h[1:] - g[:-1]).max() < 1e-12


def test_rotation_by_90_degrees():
    pos = np.array([[0.1, 0.3], [1.4, -0.2], [-1.0, -1.1]])
    m = Molecule(("C", "N", "H"), pos)
    g = rasterize(m, J=7, normalize=False).values
    h = rasterize(m.with_positions(m.positions @ np.array([[0.0, 1.0], [-1.0, 0.0]])), J=7, normalize=False).values
    assert np.abs(h - np.rot90(g)).max() < 1e-12


def test_grid_centers_symmetric():
    c = grid_centers(11.0, 6)
    assert np.array_equal(c, -c[::-1])


def test_out_of_box_error_names_atom():
    with pytest.raises(DensityError, match="atom 1"):
        rasterize(Molecule(("C", "S"), [[0.0, 0.0], [9.0, 0.0]]), a=11.0, J=6)


def test_requires_planar_molecule():
    with pytest.raises(DensityError):
        rasterize(Molecule(("H",), [[0.0, 0.0, 0.0]]))


def test_pre_rescale_mismatch_small():
    for mol in make_synthetic_dataset(10, seed=3):
        g = rasterize(planarize(mol), J=8)
        assert abs(1.0 / g.scale - 1.0) <= 1e-2
        assert g.integral() == pytest.approx(mol.charges.sum(), rel=1e-12)
