"""Featurize, cross-validate and report: the steps behind the command line."""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cache import fingerprint
from .config import RunConfig
from .coulomb import CoulombMatrix, augment, coulomb_matrix, grid_search, krr_fit
from .density import DensityError, check_in_box, default_profiles, load_profile, rasterize
from .features import FeatureMatrix, schema_for
from .fourier import fourier_features
from .molecule import (Dataset, FoldAssignment, Molecule, MoleculeError, NonPlanarError,
                       assign_folds, planarize, plane_deviation)
from .ols import RegressionModel, metrics, ols_fit, select_model_order, with_constant
from .scattering import scattering_features
from .signal import FFT_CONVENTION, make_bank
from .wavelet import wavelet_features

log = logging.getLogger(__name__)


def load_profiles(config: RunConfig) -> dict:
    """Profiles read from ``config.profiles`` (a directory of ``*.csv`` tables), keyed by species."""
    if not config.profiles:
        return {}
    directory = Path(config.profiles)
    if not directory.is_dir():
        raise DensityError(f"profile directory {directory} does not exist")
    out = {}
    for path in sorted(directory.glob("*.csv")):
        prof = load_profile(path)
        out[prof.species] = prof
    return out


def feature_fingerprint(config: RunConfig, profiles: dict | None = None) -> str:
    """Fingerprint of every setting that changes the cached rows."""
    rep = config.representation
    params = {"representation": rep, "planar_tol": float(config.planar_tol),
              "strict_planar": config.strict_planar}
    if rep == "coulomb":
        params["units"] = "bohr"
    else:
        params.update(J=config.resolved_J, a=float(config.a), fft=FFT_CONVENTION)
        if rep == "fourier":
            params["bins"] = config.bins
        else:
            params.update(L=config.L, slant=float(config.slant), xi=float(config.xi))
    return fingerprint(params, profiles if rep != "coulomb" else None)


def coulomb_schema(k_max: int) -> tuple[str, ...]:
    return tuple(f"C:k={i}:l={j}" for i in range(k_max) for j in range(k_max))


def coulomb_from_rows(rows: np.ndarray) -> list[CoulombMatrix]:
    """Rebuild padded Coulomb matrices from flattened cache rows."""
    k_max = int(round(np.sqrt(rows.shape[1])))
    mats = rows.reshape(len(rows), k_max, k_max)
    return [CoulombMatrix(m.copy(), int(np.count_nonzero(np.diag(m)))) for m in mats]


def feature_schema(config: RunConfig, k_max: int | None = None) -> tuple[str, ...]:
    if config.representation == "coulomb":
        return coulomb_schema(k_max)
    return schema_for(config.representation, config.resolved_J, config.L)


def profiles_for(species, profiles: dict) -> dict:
    """User profiles where given, Slater defaults for the remaining species."""
    species = set(species)
    out = default_profiles([s for s in species if s not in profiles])
    out.update({s: profiles[s] for s in species if s in profiles})
    return out


class Featurizer:
    """Per-molecule feature extraction for one configuration."""

    def __init__(self, config: RunConfig, profiles: dict | None = None, k_max: int | None = None):
        self.config = config
        self.profiles = dict(profiles or {})
        self.k_max = k_max
        rep = config.representation
        self.bank = None
        if rep in ("wavelet", "scattering"):
            self.bank = make_bank(config.resolved_J, config.L, config.slant, config.xi,
                                  angular=rep == "scattering")

    @property
    def schema(self) -> tuple[str, ...]:
        return feature_schema(self.config, self.k_max)

    def __call__(self, mol: Molecule, flat: Molecule | None = None) -> np.ndarray:
        """Features of ``mol``; ``flat`` is its planarized form (computed if omitted)."""
        c = self.config
        if c.representation == "coulomb":
            return coulomb_matrix(mol, self.k_max).entries.ravel()
        if flat is None:
            flat = mol if mol.dim == 2 else planarize(mol, c.planar_tol)
        grid = rasterize(flat, profiles_for(flat.species, self.profiles), c.a, c.resolved_J)
        if c.representation == "fourier":
            return fourier_features(grid, c.bins).values
        if c.representation == "wavelet":
            return wavelet_features(grid, self.bank).values
        return scattering_features(grid, self.bank).values


_WORKER: Featurizer | None = None


def _init_worker(config, profiles, k_max):
    global _WORKER
    _WORKER = Featurizer(config, profiles, k_max)


def _work(args):
    mol, flat = args
    return _WORKER(mol, flat)


@dataclass
class FeaturizeResult:
    matrix: FeatureMatrix
    labels: np.ndarray
    kept: np.ndarray
    skipped: list = field(default_factory=list)       # (index, name, reason)
    deviations: np.ndarray | None = None


def featurize_dataset(dataset: Dataset, config: RunConfig, profiles: dict | None = None,
                      jobs: int | None = None) -> FeaturizeResult:
    """Planarize, rasterize and featurize every molecule.

    Molecules that are not planar within ``planar_tol`` or do not fit in
    the box are skipped and reported, unless ``strict_planar`` is set, in
    which case the first one raises.
    """
    jobs = config.jobs if jobs is None else jobs
    profiles = load_profiles(config) if profiles is None else profiles
    tasks, kept, skipped, devs = [], [], [], np.full(len(dataset), np.nan)
    for i, mol in enumerate(dataset):
        label = mol.name or str(i)
        try:
            if mol.dim == 3:
                devs[i] = plane_deviation(mol)
                flat = planarize(mol, config.planar_tol)
            else:
                devs[i], flat = 0.0, mol
            log.debug("%s: planarity deviation %.4f A", label, devs[i])
            if config.representation != "coulomb":
                # box check before paying for the transform
                check_in_box(flat, config.a, profiles_for(flat.species, profiles))
        except (NonPlanarError, DensityError) as exc:
            if config.strict_planar:
                raise
            log.warning("skipping %s: %s", label, exc)
            skipped.append((i, label, str(exc)))
            continue
        kept.append(i)
        tasks.append((mol, flat))
    if not tasks:
        raise MoleculeError("no molecule survived the planarity and box checks")
    k_max = max(dataset[i].n_atoms for i in kept) if config.representation == "coulomb" else None

    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker,
                                 initargs=(config, profiles, k_max)) as pool:
            rows = list(pool.map(_work, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
        schema = feature_schema(config, k_max)
    else:
        feat = Featurizer(config, profiles, k_max)
        rows = []
        for n, (mol, flat) in enumerate(tasks, start=1):
            rows.append(feat(mol, flat))
            if n % 50 == 0 or n == len(tasks):
                log.info("featurized %d/%d molecules", n, len(tasks))
        schema = feat.schema
    if skipped:
        log.warning("skipped %d of %d molecules", len(skipped), len(dataset))
    ids = tuple(dataset[i].name or str(i) for i in kept)
    labels = np.array([np.nan if dataset[i].energy is None else dataset[i].energy for i in kept])
    matrix = FeatureMatrix(np.stack(rows), schema, ids)
    return FeaturizeResult(matrix, labels, np.array(kept, dtype=np.int64), skipped, devs)


# --------------------------------------------------------------------------
# Cross-validation
# --------------------------------------------------------------------------


@dataclass
class FoldResult:
    fold: int
    M: int | None
    mae: float
    rmse: float
    sigma: float | None = None
    lam: float | None = None


@dataclass
class CVResult:
    representation: str
    ids: tuple
    truth: np.ndarray
    prediction: np.ndarray
    folds: FoldAssignment
    per_fold: list
    decay_mse_test: np.ndarray | None = None
    decay_mse_train: np.ndarray | None = None
    model: object = None
    final_M: int | None = None

    @property
    def mae(self) -> float:
        return metrics(self.prediction, self.truth)[0]

    @property
    def rmse(self) -> float:
        return metrics(self.prediction, self.truth)[1]


def _check_labels(matrix: FeatureMatrix, labels) -> np.ndarray:
    y = np.asarray(labels, dtype=np.float64)
    if y.shape != (matrix.shape[0],):
        raise MoleculeError(f"{len(y)} labels for {matrix.shape[0]} feature rows")
    if not np.all(np.isfinite(y)):
        raise MoleculeError("every cached molecule needs an energy label for cross-validation")
    return y


def cross_validate(matrix: FeatureMatrix, labels, config: RunConfig) -> CVResult:
    """Outer ``n_folds`` CV with an inner CV on the training folds.

    For the dictionary representations the inner CV picks the model order
    ``M``; for the Coulomb baseline it picks ``(sigma, lambda)``. Every
    molecule is predicted exactly once, from the outer fold that holds it
    out.
    """
    y = _check_labels(matrix, labels)
    folds = assign_folds(y, config.n_folds, config.seed)
    if config.representation == "coulomb":
        return _cv_coulomb(matrix, y, folds, config)
    return _cv_ols(matrix, y, folds, config)


def _cv_ols(matrix, y, folds, config) -> CVResult:
    X = matrix.rows
    X1 = with_constant(X)
    m_max = config.m_max
    pred = np.empty(len(y))
    per_fold = []
    sse_test = np.zeros(m_max)
    sse_train = np.zeros(m_max)
    n_test = n_train = 0
    for f in range(folds.n_folds):
        tr, te = folds.split(f)
        inner = folds.subset(tr)
        m_star, _ = select_model_order(X[tr], y[tr], inner, m_max)
        path = ols_fit(X1[tr], y[tr], m_max, add_constant=False)
        m_star = min(m_star, path.length)
        pred[te] = path.predict(X1[te], m_star)
        mae, rmse = metrics(pred[te], y[te])
        per_fold.append(FoldResult(f, m_star, mae, rmse))
        log.info("fold %d: M=%d MAE=%.4g RMSE=%.4g", f, m_star, mae, rmse)

        err = path.predict_path(X1[te]) - y[te][:, None]
        sse_test += _pad((err * err).sum(axis=0), m_max)
        sse_train += _pad(path.training_rmse ** 2 * len(tr), m_max)
        n_test += len(te)
        n_train += len(tr)

    m_final, _ = select_model_order(X, y, folds, m_max)
    full = ols_fit(X1, y, m_max, add_constant=False)
    m_final = min(m_final, full.length)
    model = RegressionModel.from_path(
        full, matrix.schema, m_final, representation=config.representation,
        n_train=len(y), J=config.resolved_J, L=config.L, a=config.a,
    )
    return CVResult(config.representation, matrix.ids, y, pred, folds, per_fold,
                    sse_test / n_test, sse_train / n_train, model, m_final)


def _pad(curve: np.ndarray, length: int) -> np.ndarray:
    if len(curve) >= length:
        return curve[:length]
    return np.concatenate([curve, np.full(length - len(curve), curve[-1])])


def _cv_coulomb(matrix, y, folds, config) -> CVResult:
    mats = coulomb_from_rows(matrix.rows)
    pred = np.empty(len(y))
    per_fold = []
    opts = dict(n_copies=config.krr_copies, noise=config.krr_noise, seed=config.seed)
    for f in range(folds.n_folds):
        tr, te = folds.split(f)
        inner = folds.subset(tr)
        train = [mats[i] for i in tr]
        sigma, lam, _ = grid_search(train, y[tr], inner, config.sigma_grid, config.lambda_grid, **opts)
        X, yy = augment(train, y[tr], **opts)
        model = krr_fit(X, yy, sigma, lam, **opts)
        pred[te] = model.predict([mats[i] for i in te])
        mae, rmse = metrics(pred[te], y[te])
        per_fold.append(FoldResult(f, None, mae, rmse, sigma, lam))
        log.info("fold %d: sigma=%g lambda=%g MAE=%.4g RMSE=%.4g", f, sigma, lam, mae, rmse)
    sigma, lam, _ = grid_search(mats, y, folds, config.sigma_grid, config.lambda_grid, **opts)
    X, yy = augment(mats, y, **opts)
    model = krr_fit(X, yy, sigma, lam, **opts)
    return CVResult("coulomb", matrix.ids, y, pred, folds, per_fold, model=model)


# --------------------------------------------------------------------------
# Reports
# --------------------------------------------------------------------------

SUMMARY_COLUMNS = ("representation", "fold", "M", "MAE", "RMSE", "sigma", "lambda")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_reports(result: CVResult, out) -> dict[str, Path]:
    """Write ``report.csv``, ``summary.csv``, ``folds.csv`` and, for OLS runs, ``decay.csv`` and ``model.txt``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}

    paths["report"] = out / "report.csv"
    with open(paths["report"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "id", "fold", "truth", "prediction", "abs_error"])
        for i, (t, p) in enumerate(zip(result.truth, result.prediction)):
            mid = result.ids[i] if result.ids else str(i)
            w.writerow([i, mid, int(result.folds.fold_of[i]), _fmt(float(t)), _fmt(float(p)),
                        _fmt(float(abs(p - t)))])

    paths["summary"] = out / "summary.csv"
    with open(paths["summary"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_COLUMNS)
        for r in result.per_fold:
            w.writerow([result.representation, r.fold, _fmt(r.M), _fmt(r.mae), _fmt(r.rmse),
                        _fmt(r.sigma), _fmt(r.lam)])
        model = result.model
        sigma = getattr(model, "sigma", None)
        lam = getattr(model, "lam", None)
        w.writerow([result.representation, "all", _fmt(result.final_M), _fmt(result.mae),
                    _fmt(result.rmse), _fmt(sigma), _fmt(lam)])

    paths["folds"] = out / "folds.csv"
    result.folds.to_csv(paths["folds"])

    if result.decay_mse_test is not None:
        paths["decay"] = out / "decay.csv"
        with open(paths["decay"], "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["M", "log2_M", "half_log2_mse_test", "half_log2_mse_train"])
            for m, (te, tr) in enumerate(zip(result.decay_mse_test, result.decay_mse_train), start=1):
                w.writerow([m, _fmt(float(np.log2(m))), _fmt(float(0.5 * np.log2(te))),
                            _fmt(float(0.5 * np.log2(tr))) if tr > 0 else "-inf"])
    if isinstance(result.model, RegressionModel):
        paths["model"] = out / "model.txt"
        result.model.save(paths["model"])
    return paths


def read_decay(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(M, rmse_test, rmse_train)`` from a ``decay.csv``."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    m = np.array([int(r["M"]) for r in rows])
    te = 2.0 ** np.array([float(r["half_log2_mse_test"]) for r in rows])
    tr = 2.0 ** np.array([float(r["half_log2_mse_train"]) for r in rows])
    return m, te, tr


def decay_knee(rmse: np.ndarray, within: float = 0.10) -> int:
    """Smallest ``M`` whose RMSE is within ``within`` of the curve minimum."""
    rmse = np.asarray(rmse)
    return int(np.flatnonzero(rmse <= (1.0 + within) * rmse.min())[0]) + 1


COMPARE_COLUMNS = ("representation", "M", "MAE", "RMSE")


def read_summary_total(path) -> dict:
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            if row["fold"] == "all":
                return row
    raise MoleculeError(f"{path}: no 'all' row")


def compare_runs(run_dirs, out) -> tuple[Path, Path]:
    """Merge the pooled rows of several runs into ``compare.csv`` and ``compare.md``."""
    if len(run_dirs) < 2:
        raise ValueError("compare needs at least two runs")
    rows = []
    for d in run_dirs:
        summary = Path(d) / "summary.csv"
        if not summary.is_file():
            raise FileNotFoundError(f"{d}: missing summary.csv (run 'cv' first)")
        r = read_summary_total(summary)
        M = r["M"] or "N/A"
        rows.append((r["representation"], M, f"{float(r['MAE']):.2f}", f"{float(r['RMSE']):.2f}"))
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    csv_path, md_path = out / "compare.csv", out / "compare.md"
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(COMPARE_COLUMNS)
        w.writerows(rows)
    lines = ["| " + " | ".join(COMPARE_COLUMNS) + " |", "|" + "---|" * len(COMPARE_COLUMNS)]
    lines += ["| " + " | ".join(r) + " |" for r in rows]
    md_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return csv_path, md_path
