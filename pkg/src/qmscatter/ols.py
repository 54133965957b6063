"""Greedy orthogonal least squares forward selection.

At each step every unselected column is orthogonalized against the current
orthonormal basis (modified Gram-Schmidt), normalized over the training
rows, and the one whose normalized residual has the largest absolute
correlation with the target is appended. The coefficient of the new
orthonormal vector is that correlation, so every prefix of the path is the
least-squares fit on its support.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.linalg import solve_triangular

from .molecule import FoldAssignment

log = logging.getLogger(__name__)

DEPENDENCE_TOL = 1e-10
CONSTANT_ID = "const"
MODEL_FORMAT_VERSION = 1


def with_constant(X: np.ndarray) -> np.ndarray:
    """Prepend the all-ones intercept column (index 0)."""
    X = np.asarray(X, dtype=np.float64)
    return np.column_stack([np.ones(len(X)), X])


@dataclass(frozen=True)
class SelectionPath:
    """Result of :func:`ols_fit`.

    Column indices refer to the matrix *with* the constant prepended.
    ``R`` is the upper-triangular factor of ``X[:, selected] = Q R`` over the
    training rows and ``weights[m]`` is the coefficient of ``Q[:, m]``.
    """

    selected: np.ndarray
    R: np.ndarray
    weights: np.ndarray
    training_rmse: np.ndarray
    n_train: int
    stop_reason: str = ""

    @property
    def length(self) -> int:
        return len(self.selected)

    def coefficients(self, m: int | None = None) -> np.ndarray:
        """Coefficients on the original selected columns for the first ``m`` terms."""
        m = self.length if m is None else m
        if m == 0:
            return np.zeros(0)
        return solve_triangular(self.R[:m, :m], self.weights[:m], lower=False)

    def orthonormal_basis(self, X1: np.ndarray, m: int | None = None) -> np.ndarray:
        """Evaluate the orthonormalized functionals on new rows (constant already prepended)."""
        m = self.length if m is None else m
        Xs = np.asarray(X1)[:, self.selected[:m]]
        return solve_triangular(self.R[:m, :m], Xs.T, lower=False, trans="T").T

    def predict(self, X1: np.ndarray, m: int | None = None) -> np.ndarray:
        m = self.length if m is None else m
        if m == 0:
            return np.zeros(len(X1))
        return np.asarray(X1)[:, self.selected[:m]] @ self.coefficients(m)

    def predict_path(self, X1: np.ndarray) -> np.ndarray:
        """Predictions for every prefix length; shape ``(n_rows, length)``."""
        Q = self.orthonormal_basis(X1)
        return np.cumsum(Q * self.weights[None, :], axis=1)


def ols_fit(X, y, m_max: int, add_constant: bool = True, tol: float = DEPENDENCE_TOL) -> SelectionPath:
    """Orthogonal least squares forward selection.

    Parameters
    ----------
    X : array (N, D)
        Raw feature columns.
    y : array (N,)
        Targets.
    m_max : int
        Maximum number of selected columns.
    add_constant : bool
        Prepend an all-ones column at index 0.
    tol : float
        A candidate whose residual squared norm drops below ``tol`` times
        its original squared norm is dropped for good.

    Notes
    -----
    Ties in the selection score go to the lowest column index. If the
    candidates run out before ``m_max`` the path is shorter and
    ``stop_reason`` says why.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if add_constant:
        X = with_constant(X)
    n, d = X.shape
    if len(y) != n:
        raise ValueError(f"{len(y)} targets for {n} rows")
    if n < 2:
        raise ValueError("need at least two training rows")
    if m_max < 1:
        raise ValueError("m_max must be positive")

    residual = X.copy()
    norm0 = np.einsum("ij,ij->j", X, X)
    active = norm0 > 0
    m_cap = min(m_max, n, d)
    stop = "" if m_cap == m_max else f"m_max capped at min(N, D) = {m_cap}"
    selected: list[int] = []
    proj_rows = np.zeros((m_cap, d))
    weights = np.zeros(m_cap)
    rmse = np.zeros(m_cap)
    r_y = y.copy()

    for m in range(m_cap):
        sq = np.einsum("ij,ij->j", residual, residual)
        active &= sq >= tol * norm0
        if not active.any():
            stop = f"no linearly independent candidates left after {m} terms"
            break
        idx = np.flatnonzero(active)
        score = np.abs(y @ residual[:, idx]) / np.sqrt(sq[idx])
        k = int(idx[np.argmax(score)])
        q = residual[:, k] / np.sqrt(sq[k])
        proj = q @ residual
        proj[k] = np.sqrt(sq[k])
        proj_rows[m] = proj
        residual -= np.outer(q, proj)
        residual[:, k] = 0.0
        active[k] = False
        selected.append(k)
        weights[m] = q @ y
        r_y = r_y - weights[m] * q
        rmse[m] = np.sqrt(np.mean(r_y * r_y))

    M = len(selected)
    sel = np.array(selected, dtype=np.int64)
    R = np.triu(proj_rows[:M][:, sel]) if M else np.zeros((0, 0))
    if stop:
        log.debug("OLS path stopped at %d terms: %s", M, stop)
    return SelectionPath(sel, R, weights[:M], rmse[:M], n, stop)


def metrics(predictions, truths) -> tuple[float, float]:
    """Mean absolute error and root mean squared error."""
    p = np.asarray(predictions, dtype=np.float64)
    t = np.asarray(truths, dtype=np.float64)
    if p.shape != t.shape:
        raise ValueError("predictions and truths differ in length")
    if p.size == 0:
        raise ValueError("metrics of an empty set are undefined")
    err = p - t
    return float(np.mean(np.abs(err))), float(np.sqrt(np.mean(err * err)))


def _extend(curve: np.ndarray, length: int) -> np.ndarray:
    """Pad a per-m curve to ``length`` by repeating its last value."""
    if len(curve) >= length:
        return curve[:length]
    fill = curve[-1] if len(curve) else np.nan
    return np.concatenate([curve, np.full(length - len(curve), fill)])


@dataclass
class CVCurve:
    """Cross-validated error curves indexed by model order ``m = 1 .. m_max``."""

    validation_rmse: np.ndarray
    validation_mse: np.ndarray
    training_rmse: np.ndarray
    per_fold_rmse: np.ndarray

    @property
    def m_values(self) -> np.ndarray:
        return np.arange(1, len(self.validation_rmse) + 1)


def select_model_order(X, y, folds: FoldAssignment, m_max: int) -> tuple[int, CVCurve]:
    """Pick the model order minimizing mean held-out RMSE over ``folds``.

    Ties go to the smallest ``m``. ``X`` excludes the constant column.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if folds.n_folds < 2:
        raise ValueError("need at least two folds")
    X1 = with_constant(X)
    val_rmse, val_sse, train_rmse = [], np.zeros(m_max), []
    n_val = 0
    for f in range(folds.n_folds):
        tr, va = folds.split(f)
        path = ols_fit(X1[tr], y[tr], m_max, add_constant=False)
        pred = path.predict_path(X1[va])
        err = pred - y[va][:, None]
        sse = (err * err).sum(axis=0)
        val_rmse.append(_extend(np.sqrt(sse / len(va)), m_max))
        val_sse += _extend(sse, m_max)
        n_val += len(va)
        train_rmse.append(_extend(path.training_rmse, m_max))
    per_fold = np.array(val_rmse)
    mean_rmse = per_fold.mean(axis=0)
    m_star = int(np.argmin(mean_rmse)) + 1
    curve = CVCurve(mean_rmse, val_sse / n_val, np.array(train_rmse).mean(axis=0), per_fold)
    return m_star, curve


@dataclass(frozen=True)
class RegressionModel:
    """A truncated selection path ready for prediction on raw feature rows."""

    schema: tuple[str, ...]
    selected: tuple[int, ...]
    coefficients: np.ndarray
    offset: float = 0.0
    metadata: dict = field(default_factory=dict)

    @classmethod
    def from_path(cls, path: SelectionPath, schema: Sequence[str], m: int, **metadata) -> "RegressionModel":
        if m > path.length:
            raise ValueError(f"model order {m} exceeds path length {path.length}")
        return cls(tuple(schema), tuple(int(k) for k in path.selected[:m]),
                   path.coefficients(m), 0.0, dict(metadata))

    @property
    def M(self) -> int:
        return len(self.selected)

    @property
    def selected_ids(self) -> list[str]:
        full = (CONSTANT_ID,) + tuple(self.schema)
        return [full[k] for k in self.selected]

    def predict(self, X) -> np.ndarray:
        X1 = with_constant(np.atleast_2d(X))
        return self.offset + X1[:, list(self.selected)] @ self.coefficients

    def save(self, path) -> None:
        lines = [
            "# qmscatter OLS model",
            f"version = {MODEL_FORMAT_VERSION}",
            f"M = {self.M}",
            f"offset = {self.offset:.17g}",
            f"n_features = {len(self.schema)}",
        ]
        for k, v in sorted(self.metadata.items()):
            lines.append(f"meta.{k} = {v}")
        lines.append("[terms]")
        for fid, w in zip(self.selected_ids, self.coefficients):
            lines.append(f"{fid} {w:.17g}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path, schema: Sequence[str]) -> "RegressionModel":
        """Read a model file; ``schema`` resolves feature identifiers to columns."""
        header, terms = {}, []
        in_terms = False
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if line == "[terms]":
                in_terms = True
                continue
            if in_terms:
                fid, w = line.rsplit(None, 1)
                terms.append((fid, float(w)))
            else:
                k, v = (s.strip() for s in line.split("=", 1))
                header[k] = v
        if int(header.get("version", -1)) != MODEL_FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported model version {header.get('version')}")
        full = (CONSTANT_ID,) + tuple(schema)
        lookup = {fid: i for i, fid in enumerate(full)}
        missing = [fid for fid, _ in terms if fid not in lookup]
        if missing:
            raise ValueError(f"{path}: features not in schema: {missing[:3]}")
        meta = {k[5:]: v for k, v in header.items() if k.startswith("meta.")}
        return cls(tuple(schema), tuple(lookup[f] for f, _ in terms),
                   np.array([w for _, w in terms]), float(header.get("offset", 0.0)), meta)
