import csv
import subprocess
import sys

import numpy as np
import pytest

from qmscatter.cache import FingerprintMismatch, load_cache
from qmscatter.cli import main
from qmscatter.config import RunConfig
from qmscatter.features import dictionary_size
from qmscatter.molecule import Dataset, planarize, write_dataset
from qmscatter.pipeline import Featurizer, feature_fingerprint, read_decay
from qmscatter.synthetic import make_synthetic_dataset

TOY = {
    "water.xyz": "3\nenergy=-10.5\nO 0.0 0.0 0.0\nH 0.96 0.0 0.0\nH -0.24 0.93 0.0\n",
    "methane_flat.xyz": "3\nenergy=-7.25\nC 0.0 0.0 0.0\nH 1.09 0.0 0.0\nH -0.545 0.944 0.0\n",
    "hcn.xyz": "3\nenergy=-12.0\nH -1.06 0.0 0.0\nC 0.0 0.0 0.0\nN 1.15 0.0 0.0\n",
}


@pytest.fixture
def toy(tmp_path):
    for name, text in TOY.items():
        (tmp_path / name).write_text(text)
    manifest = tmp_path / "manifest.txt"
    manifest.write_text("\n".join(TOY) + "\n")
    return manifest


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_featurize_toy_scattering(toy, tmp_path, capsys):
    out = tmp_path / "run"
    args = ["featurize", "--manifest", str(toy), "--representation", "scattering", "-J", "6", "-L", "4",
            "--out", str(out)]
    assert main(args) == 0
    matrix, labels = load_cache(out / "features.bin")
    assert matrix.shape == (3, dictionary_size("scattering", 6, 4))
    assert np.array_equal(np.sort(labels), [-12.0, -10.5, -7.25])
    first = (out / "features.bin").read_bytes()
    assert main(args) == 0
    assert (out / "features.bin").read_bytes() == first
    rows = read_csv(out / "planarity.csv")
    assert [r["status"] for r in rows] == ["kept"] * 3
    assert "3 molecules" in capsys.readouterr().out


def test_changed_resolution_is_refused(toy, tmp_path):
    out = tmp_path / "run"
    assert main(["featurize", "--manifest", str(toy), "--representation", "fourier", "-J", "5",
                 "--out", str(out)]) == 0
    with pytest.raises(FingerprintMismatch):
        load_cache(out / "features.bin", feature_fingerprint(RunConfig(representation="fourier", J=6)))
    assert main(["cv", "--manifest", str(toy), "--representation", "fourier", "-J", "6",
                 "--out", str(out)]) == 3


@pytest.fixture(scope="module")
def linear_run(tmp_path_factory):
    """Energies that are an exact sparse combination of wavelet features plus noise."""
    root = tmp_path_factory.mktemp("linear")
    cfg = RunConfig(representation="wavelet", J=6, L=4, m_max=20)
    data = make_synthetic_dataset(80, seed=21)
    feat = Featurizer(cfg)
    X = np.array([feat(m, planarize(m)) for m in data])
    rng = np.random.default_rng(0)
    cols = [3, 10, 17, 25]
    clean = X[:, cols] @ (rng.uniform(1, 2, 4) / X[:, cols].std(axis=0))
    noise = rng.normal(0, 0.01 * clean.std(), len(data))
    mols = tuple(m.with_energy(float(e)) for m, e in zip(data, clean + noise))
    manifest = write_dataset(Dataset(mols), root / "data")
    out = root / "run"
    rc = main(["cv", "--manifest", str(manifest), "--representation", "wavelet", "-J", "6", "-L", "4",
               "--m-max", "20", "--out", str(out)])
    return rc, out, np.abs(noise).mean()


def test_cv_reports(linear_run):
    rc, out, noise_mae = linear_run
    assert rc == 0
    summary = read_csv(out / "summary.csv")
    folds = [r for r in summary if r["fold"] != "all"]
    assert len(folds) == 5
    total = next(r for r in summary if r["fold"] == "all")
    assert float(total["MAE"]) < 1.2 * noise_mae
    assert len(read_csv(out / "report.csv")) == 80
    _, _, train = read_decay(out / "decay.csv")
    assert np.all(np.diff(train) <= 1e-12)
    assert (out / "model.txt").read_text().startswith("# qmscatter OLS model")


def test_compare_two_runs(linear_run, tmp_path, capsys):
    _, out, _ = linear_run
    assert main(["compare", str(out), str(out), "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "compare.csv")
    assert len(rows) == 2 and rows[0] == rows[1]
    with open(tmp_path / "compare.csv") as fh:
        header = fh.readline().strip().split(",")
    assert header == ["representation", "M", "MAE", "RMSE"]
    assert "| wavelet |" in capsys.readouterr().out


def test_predict_with_saved_model(linear_run, capsys):
    _, out, _ = linear_run
    data_dir = out.parent / "data"
    xyz = sorted(data_dir.glob("*.xyz"))[:2]
    rc = main(["predict", "--model", str(out / "model.txt"), "--representation", "wavelet", "-J", "6",
               "-L", "4", *map(str, xyz)])
    assert rc == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "id,prediction" and len(lines) == 3


def test_exit_codes(tmp_path, capsys):
    assert main([]) == 2
    bad = tmp_path / "bad.cfg"
    bad.write_text("nonsense = 1\n")
    assert main(["cv", "--config", str(bad)]) == 2
    assert main(["featurize", "--representation", "fourier"]) == 2        # no manifest
    broken = tmp_path / "broken.xyz"
    broken.write_text("2\n\nC 0 0\n")
    (tmp_path / "m.txt").write_text("broken.xyz\n")
    assert main(["featurize", "--manifest", str(tmp_path / "m.txt"), "--out", str(tmp_path)]) == 3


def test_dump_config(capsys):
    assert main(["--dump-config"]) == 0
    text = capsys.readouterr().out
    assert "krr.sigma_grid" in text and "representation = scattering" in text
    assert main(["cv", "--dump-config", "-J", "7", "--representation", "wavelet"]) == 0
    assert "J = 7" in capsys.readouterr().out


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "qmscatter", "synth", "--n", "3", "--out", str(tmp_path / "s")],
                          capture_output=True, text=True, cwd=tmp_path)
    assert proc.returncode == 0, proc.stderr
    assert len(list((tmp_path / "s").glob("*.xyz"))) == 3
