"""Coulomb-matrix baseline: randomly sorted matrices and Laplace-kernel ridge regression."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg
from scipy.spatial.distance import cdist

from .molecule import FoldAssignment, Molecule

BOHR = 0.52917721092  # Angstrom per Bohr

DEFAULT_SIGMA_GRID = tuple(25.0 * 2.0 ** k for k in range(14))  # 25 .. 204800
DEFAULT_LAMBDA_GRID = (1e-10, 1e-8, 1e-6, 1e-4, 1e-2)


class IllConditionedError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class CoulombMatrix:
    entries: np.ndarray
    n_atoms: int

    @property
    def k_max(self) -> int:
        return self.entries.shape[0]


def coulomb_matrix(mol: Molecule, k_max: int | None = None, positions_in_bohr: bool = False) -> CoulombMatrix:
    """``C_kk = z_k^2.4 / 2``, ``C_kl = z_k z_l / |p_k - p_l|`` in atomic units, zero-padded to ``k_max``.

    Positions are read in Angstrom and converted to Bohr unless
    ``positions_in_bohr`` is set.
    """
    K = mol.n_atoms
    k_max = K if k_max is None else int(k_max)
    if K > k_max:
        raise ValueError(f"molecule has {K} atoms, Coulomb matrix holds {k_max}")
    z = mol.charges.astype(np.float64)
    pos = mol.positions if positions_in_bohr else mol.positions / BOHR
    dist = cdist(pos, pos)
    np.fill_diagonal(dist, 1.0)
    c = np.outer(z, z) / dist
    np.fill_diagonal(c, 0.5 * z ** 2.4)
    out = np.zeros((k_max, k_max))
    out[:K, :K] = c
    return CoulombMatrix(out, K)


def random_sorted_copies(cm: CoulombMatrix, n_copies: int = 8, noise: float = 1.0,
                         seed: int | np.random.Generator = 0) -> np.ndarray:
    """Row/column sorts of ``cm`` by noisy descending row norm.

    Gaussian noise with standard deviation ``noise`` times the mean row norm
    is added to the norms of the real atoms before sorting; padding rows
    stay at the end. Returns an array ``(n_copies, k_max, k_max)``.
    """
    if n_copies < 1:
        raise ValueError("n_copies must be at least 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    K = cm.n_atoms
    c = cm.entries
    norms = np.linalg.norm(c[:K], axis=1)
    sd = noise * norms.mean()
    out = np.empty((n_copies,) + c.shape)
    for i in range(n_copies):
        noisy = norms + rng.normal(0.0, 1.0, K) * sd if sd > 0 else norms
        order = np.argsort(-noisy, kind="stable")
        perm = np.concatenate([order, np.arange(K, cm.k_max)])
        out[i] = c[np.ix_(perm, perm)]
    return out


def flat_upper(mats: np.ndarray) -> np.ndarray:
    """Upper triangle (with diagonal) of each matrix, flattened."""
    k = mats.shape[-1]
    iu = np.triu_indices(k)
    return mats[..., iu[0], iu[1]]


def laplace_kernel(A: np.ndarray, B: np.ndarray, sigma: float) -> np.ndarray:
    """``exp(-||a - b||_1 / sigma)`` between rows of ``A`` and ``B``."""
    return np.exp(-cdist(A, B, metric="cityblock") / sigma)


def augment(matrices: Sequence[CoulombMatrix], y=None, n_copies: int = 8, noise: float = 1.0,
            seed: int = 0):
    """Flattened augmented design: ``n_copies`` sorted copies per molecule.

    Copies of molecule ``i`` occupy rows ``i*n_copies .. (i+1)*n_copies - 1``.
    The generator for molecule ``i`` is seeded from ``(seed, i)`` so results
    do not depend on which other molecules are in the batch.
    """
    rows = []
    for i, cm in enumerate(matrices):
        rng = np.random.default_rng([seed, i])
        rows.append(flat_upper(random_sorted_copies(cm, n_copies, noise, rng)))
    X = np.concatenate(rows)
    if y is None:
        return X
    return X, np.repeat(np.asarray(y, dtype=np.float64), n_copies)


@dataclass(frozen=True)
class KRRModel:
    support: np.ndarray
    alpha: np.ndarray
    sigma: float
    lam: float
    n_copies: int
    noise: float = 1.0
    seed: int = 0
    offset: float = 0.0

    def predict_flat(self, X: np.ndarray) -> np.ndarray:
        return laplace_kernel(X, self.support, self.sigma) @ self.alpha + self.offset

    def predict(self, matrices: Sequence[CoulombMatrix], seed: int | None = None) -> np.ndarray:
        """Average prediction over ``n_copies`` sorted copies of each molecule."""
        X = augment(matrices, None, self.n_copies, self.noise, self.seed if seed is None else seed)
        return self.predict_flat(X).reshape(len(matrices), self.n_copies).mean(axis=1)


def krr_fit(X: np.ndarray, y: np.ndarray, sigma: float, lam: float, n_copies: int = 1,
            noise: float = 1.0, seed: int = 0, center: bool = True) -> KRRModel:
    """Solve ``(K + lam I) alpha = y - mean(y)`` on flattened (augmented) rows.

    Raises
    ------
    IllConditionedError
        If the regularized kernel matrix is numerically singular.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    offset = float(y.mean()) if center else 0.0
    K = laplace_kernel(X, X, sigma)
    K[np.diag_indices_from(K)] += lam
    try:
        cho = scipy.linalg.cho_factor(K, lower=True, check_finite=False)
        alpha = scipy.linalg.cho_solve(cho, y - offset, check_finite=False)
    except np.linalg.LinAlgError:
        raise IllConditionedError(
            f"kernel system is singular at sigma={sigma:g}, lambda={lam:g} (duplicate rows?)"
        ) from None
    return KRRModel(X, alpha, float(sigma), float(lam), n_copies, noise, seed, offset)


def krr_predict(model: KRRModel, molecule: Molecule | CoulombMatrix, k_max: int | None = None) -> float:
    """Predicted energy of one molecule, averaged over its sorted copies."""
    if isinstance(molecule, Molecule):
        size = k_max if k_max is not None else int(np.round((np.sqrt(8 * model.support.shape[1] + 1) - 1) / 2))
        molecule = coulomb_matrix(molecule, size)
    return float(model.predict([molecule])[0])


def grid_search(matrices: Sequence[CoulombMatrix], y, folds: FoldAssignment,
                sigma_grid=DEFAULT_SIGMA_GRID, lambda_grid=DEFAULT_LAMBDA_GRID,
                n_copies: int = 8, noise: float = 1.0, seed: int = 0):
    """Choose ``(sigma, lambda)`` by mean held-out MAE over ``folds``.

    Ties go to the smaller sigma, then the smaller lambda. Returns
    ``(sigma, lambda, table)`` where ``table[(s, l)]`` is the mean MAE.
    """
    y = np.asarray(y, dtype=np.float64)
    sigmas = sorted(float(s) for s in sigma_grid)
    lams = sorted(float(v) for v in lambda_grid)
    X = augment(matrices, None, n_copies, noise, seed)
    dist = cdist(X, X, metric="cityblock")
    rows = np.arange(len(matrices) * n_copies).reshape(len(matrices), n_copies)
    table = {}
    best = None
    splits = [(rows[tr].ravel(), rows[va].ravel(), tr, va)
              for tr, va in (folds.split(f) for f in range(folds.n_folds))]
    for s in sigmas:
        kernel = np.exp(-dist / s)
        for lam in lams:
            maes = []
            for r_tr, r_va, tr, va in splits:
                ytr = np.repeat(y[tr], n_copies)
                offset = ytr.mean()
                K = kernel[np.ix_(r_tr, r_tr)]
                K[np.diag_indices_from(K)] += lam
                try:
                    cho = scipy.linalg.cho_factor(K, lower=True, check_finite=False)
                except np.linalg.LinAlgError:
                    maes.append(np.inf)
                    continue
                alpha = scipy.linalg.cho_solve(cho, ytr - offset, check_finite=False)
                pred = (kernel[np.ix_(r_va, r_tr)] @ alpha + offset).reshape(len(va), n_copies).mean(axis=1)
                maes.append(np.mean(np.abs(pred - y[va])))
            score = float(np.mean(maes))
            table[(s, lam)] = score
            if best is None or score < best[0]:
                best = (score, s, lam)
    return best[1], best[2], table
