"""Run configuration: flat ``key = value`` files with ``#`` comments."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .coulomb import DEFAULT_LAMBDA_GRID, DEFAULT_SIGMA_GRID
from .signal import DEFAULT_SLANT, DEFAULT_XI

REPRESENTATIONS = ("fourier", "wavelet", "scattering", "coulomb")
DEFAULT_J = {"fourier": 10, "wavelet": 10, "scattering": 9, "coulomb": 0}


class ConfigError(ValueError):
    pass


# file key -> dataclass field
_KEYS = {
    "manifest": "manifest",
    "representation": "representation",
    "J": "J",
    "L": "L",
    "a": "a",
    "slant": "slant",
    "xi": "xi",
    "n_folds": "n_folds",
    "seed": "seed",
    "m_max": "m_max",
    "krr.sigma_grid": "sigma_grid",
    "krr.lambda_grid": "lambda_grid",
    "krr.copies": "krr_copies",
    "krr.noise": "krr_noise",
    "planar.tol": "planar_tol",
    "planar.strict": "strict_planar",
    "fourier.bins": "bins",
    "profiles": "profiles",
    "jobs": "jobs",
    "out": "out",
}


def _parse_bool(text: str) -> bool:
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


@dataclass(frozen=True)
class RunConfig:
    """Every knob of a featurize / cross-validate run.

    ``J = None`` resolves to the representation's default (10 for the
    Fourier and wavelet dictionaries, 9 for scattering).
    """

    manifest: str = ""
    representation: str = "scattering"
    J: int | None = None
    L: int = 8
    a: float = 11.0
    slant: float = DEFAULT_SLANT
    xi: float = DEFAULT_XI
    n_folds: int = 5
    seed: int = 0
    m_max: int = 200
    sigma_grid: tuple[float, ...] = DEFAULT_SIGMA_GRID
    lambda_grid: tuple[float, ...] = DEFAULT_LAMBDA_GRID
    krr_copies: int = 8
    krr_noise: float = 1.0
    planar_tol: float = 0.1
    strict_planar: bool = False
    bins: str = "mean"
    profiles: str = ""
    jobs: int = 1
    out: str = "run"

    @property
    def resolved_J(self) -> int:
        return DEFAULT_J[self.representation] if self.J is None else self.J

    def validate(self) -> "RunConfig":
        """Raise :class:`ConfigError` on the first invalid setting."""
        if self.representation not in REPRESENTATIONS:
            raise ConfigError(f"representation must be one of {', '.join(REPRESENTATIONS)}")
        if self.representation != "coulomb" and not 3 <= self.resolved_J <= 12:
            raise ConfigError("J must lie in 3..12")
        if self.L < 2 or self.L & (self.L - 1):
            raise ConfigError("L must be a power of two, at least 2")
        for name in ("a", "slant", "xi", "planar_tol", "krr_noise"):
            v = getattr(self, name)
            if not np.isfinite(v) or (v <= 0 if name != "krr_noise" else v < 0):
                raise ConfigError(f"{name} must be positive")
        if self.n_folds < 2:
            raise ConfigError("n_folds must be at least 2")
        if self.m_max < 1:
            raise ConfigError("m_max must be at least 1")
        if self.krr_copies < 1:
            raise ConfigError("krr.copies must be at least 1")
        if not self.sigma_grid or min(self.sigma_grid) <= 0:
            raise ConfigError("krr.sigma_grid needs positive values")
        if not self.lambda_grid or min(self.lambda_grid) < 0:
            raise ConfigError("krr.lambda_grid needs non-negative values")
        if self.bins not in ("mean", "sum"):
            raise ConfigError("fourier.bins must be 'mean' or 'sum'")
        if self.jobs < 1:
            raise ConfigError("jobs must be at least 1")
        return self

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def dump(self) -> str:
        lines = ["# qmscatter run configuration"]
        for key, attr in _KEYS.items():
            v = getattr(self, attr)
            if isinstance(v, tuple):
                text = ", ".join(repr(float(x)) for x in v)
            elif isinstance(v, bool):
                text = "true" if v else "false"
            elif v is None:
                text = "default  # 10 for fourier/wavelet, 9 for scattering"
            else:
                text = str(v)
            lines.append(f"{key} = {text}")
        return "\n".join(lines) + "\n"


def _convert(attr: str, text: str):
    if attr in ("sigma_grid", "lambda_grid"):
        return _parse_floats(text)
    if attr == "strict_planar":
        return _parse_bool(text)
    if attr in ("J",):
        return int(text) if text.lower() not in ("", "default", "none") else None
    if attr in ("L", "n_folds", "seed", "m_max", "krr_copies", "jobs"):
        return int(text)
    if attr in ("a", "slant", "xi", "planar_tol", "krr_noise"):
        return float(text)
    return text


def parse_config(text: str, base: RunConfig | None = None) -> RunConfig:
    """Apply ``key = value`` lines to ``base`` (defaults if omitted)."""
    changes = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            changes[_KEYS[key]] = _convert(_KEYS[key], value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from None
    return (base or RunConfig()).replace(**changes)


def load_config(path, base: RunConfig | None = None) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, base)
