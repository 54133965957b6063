"""Command-line entry point: ``qmscatter {synth,featurize,cv,compare,predict}``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from .cache import CacheError, load_cache, save_cache
from .config import REPRESENTATIONS, ConfigError, RunConfig, load_config
from .density import DensityError
from .molecule import Dataset, MoleculeError, ParseError, load_manifest, read_xyz, write_dataset
from .ols import RegressionModel

log = logging.getLogger("qmscatter")

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 2, 3
CACHE_NAME = "features.bin"


def _config_from_args(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    overrides = {}
    for attr in ("manifest", "representation", "J", "L", "seed", "m_max", "jobs", "out"):
        v = getattr(args, attr, None)
        if v is not None:
            overrides[attr] = v
    if getattr(args, "strict_planar", False):
        overrides["strict_planar"] = True
    return cfg.replace(**overrides).validate()


def _cache_path(cfg: RunConfig, args) -> Path:
    return Path(args.cache) if getattr(args, "cache", None) else Path(cfg.out) / CACHE_NAME


def _load_dataset(cfg: RunConfig) -> Dataset:
    if not cfg.manifest:
        raise ConfigError("no dataset manifest given (set 'manifest' or pass --manifest)")
    try:
        return load_manifest(cfg.manifest)
    except OSError as exc:
        raise MoleculeError(f"cannot read manifest: {exc}") from None


def _write_planarity(path: Path, dataset: Dataset, result) -> None:
    skipped = {i: reason for i, _, reason in result.skipped}
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "id", "deviation", "status"])
        for i, mol in enumerate(dataset):
            dev = result.deviations[i]
            w.writerow([i, mol.name or i, "" if np.isnan(dev) else f"{dev:.6g}",
                        "skipped: " + skipped[i] if i in skipped else "kept"])


def cmd_featurize(args) -> int:
    from .pipeline import featurize_dataset, feature_fingerprint, load_profiles

    cfg = _config_from_args(args)
    dataset = _load_dataset(cfg)
    profiles = load_profiles(cfg)
    result = featurize_dataset(dataset, cfg, profiles)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    path = _cache_path(cfg, args)
    save_cache(path, result.matrix, feature_fingerprint(cfg, profiles), result.labels)
    (out / "config.txt").write_text(cfg.dump(), encoding="utf-8")
    _write_planarity(out / "planarity.csv", dataset, result)
    n, d = result.matrix.shape
    print(f"wrote {path}: {n} molecules x {d} features ({len(result.skipped)} skipped)")
    return EXIT_OK


def cmd_cv(args) -> int:
    from .pipeline import cross_validate, feature_fingerprint, load_profiles, write_reports

    cfg = _config_from_args(args)
    path = _cache_path(cfg, args)
    fp = feature_fingerprint(cfg, load_profiles(cfg))
    if not path.is_file():
        log.info("no cache at %s, featurizing first", path)
        cmd_featurize(args)
    matrix, labels = load_cache(path, fp)
    result = cross_validate(matrix, labels, cfg)
    paths = write_reports(result, cfg.out)
    m = "N/A" if result.final_M is None else result.final_M
    print(f"{cfg.representation}: M={m} MAE={result.mae:.4f} RMSE={result.rmse:.4f}")
    print("wrote " + ", ".join(str(p) for p in paths.values()))
    return EXIT_OK


def cmd_compare(args) -> int:
    from .pipeline import compare_runs

    csv_path, md_path = compare_runs(args.runs, args.out or ".")
    print(md_path.read_text(encoding="utf-8"), end="")
    log.info("wrote %s and %s", csv_path, md_path)
    return EXIT_OK


def cmd_synth(args) -> int:
    from .synthetic import make_synthetic_dataset

    data = make_synthetic_dataset(args.n, args.seed)
    manifest = write_dataset(data, args.out or "synthetic")
    print(f"wrote {len(data)} molecules, manifest {manifest}")
    return EXIT_OK


def cmd_predict(args) -> int:
    from .pipeline import Featurizer, load_profiles

    cfg = _config_from_args(args)
    if cfg.representation == "coulomb":
        raise ConfigError("predict works with OLS models of the dictionary representations")
    if args.xyz:
        mols = [read_xyz(p) for p in args.xyz]
    else:
        mols = list(_load_dataset(cfg))
    feat = Featurizer(cfg, load_profiles(cfg))
    model = RegressionModel.load(args.model, feat.schema)
    w = csv.writer(sys.stdout)
    w.writerow(["id", "prediction"])
    for i, mol in enumerate(mols):
        value = float(model.predict(feat(mol))[0])
        w.writerow([mol.name or i, repr(value)])
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration file (key = value lines)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--jobs", type=int, help="worker processes for featurization")
    common.add_argument("--strict-planar", action="store_true",
                        help="fail on the first non-planar molecule instead of skipping it")
    common.add_argument("--manifest", help="dataset manifest (one XYZ path per line)")
    common.add_argument("--representation", choices=REPRESENTATIONS)
    common.add_argument("-J", type=int, dest="J", help="grid resolution exponent")
    common.add_argument("-L", type=int, dest="L", help="number of orientations")
    common.add_argument("--seed", type=int)
    common.add_argument("--m-max", type=int, dest="m_max")
    common.add_argument("--cache", help="feature cache path (default OUT/features.bin)")
    common.add_argument("-v", "--verbose", action="count", default=0)
    common.add_argument("--dump-config", action="store_true", dest="dump_sub",
                        help="print the effective configuration with all defaults and exit")

    p = argparse.ArgumentParser(prog="qmscatter",
                                description="Invariant dictionaries and regression for planar molecules.")
    p.add_argument("--dump-config", action="store_true",
                   help="print the effective configuration with all defaults and exit")
    sub = p.add_subparsers(dest="command")

    sub.add_parser("featurize", parents=[common], help="rasterize molecules and cache features")
    sub.add_parser("cv", parents=[common], help="nested cross-validation and reports")
    cmp_ = sub.add_parser("compare", parents=[common], help="merge run summaries into one table")
    cmp_.add_argument("runs", nargs="+", help="run directories containing summary.csv")
    syn = sub.add_parser("synth", parents=[common], help="write a synthetic planar dataset")
    syn.add_argument("--n", type=int, default=200)
    pred = sub.add_parser("predict", parents=[common], help="predict energies with a saved OLS model")
    pred.add_argument("--model", required=True, help="model.txt written by 'cv'")
    pred.add_argument("xyz", nargs="*", help="XYZ files (default: the manifest)")
    return p


COMMANDS = {
    "featurize": cmd_featurize,
    "cv": cmd_cv,
    "compare": cmd_compare,
    "synth": cmd_synth,
    "predict": cmd_predict,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * getattr(args, "verbose", 0)
    logging.basicConfig(level=max(level, logging.DEBUG), format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command is None:
            if not args.dump_config:
                parser.print_help()
                return EXIT_CONFIG
            print(RunConfig().dump(), end="")
            return EXIT_OK
        if args.dump_sub:
            print(_config_from_args(args).dump(), end="")
            return EXIT_OK
        if args.command == "synth" and args.seed is None:
            args.seed = 0
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ParseError, MoleculeError, DensityError, CacheError, FileNotFoundError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
