"""Comparison learners: plug-in KRR and the DR-learner, with k-fold CV for lambda."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .cate import Dataset
from .kernels import KernelSpec, gram_matrix
from .krr import FittedKRR, fit_masked, predict, solve_regularized
from .selection import split_indices

PROPENSITY_CLIP = (0.01, 0.99)


def dyadic_grid(n: int, count: int = 10) -> list:
    """Lambda grid {2^(j-1)/n : j = 1..count}."""
    return [2.0 ** (j - 1) / n for j in range(1, count + 1)]


def kfold_cv_lambda(
    spec: KernelSpec,
    X: np.ndarray,
    y: np.ndarray,
    mask: Optional[np.ndarray],
    grid: Sequence[float],
    k: int = 3,
    seed: int = 0,
) -> float:
    """Pick lambda from ``grid`` by k-fold CV over the masked rows.

    Each fold's held-out rows are dropped from the sample and the masked
    objective is refit on what remains, so the training ridge is
    (rows kept) * lambda. Ties go to the largest lambda.
    """
    grid = [float(g) for g in grid]
    if not grid:
        raise ValueError("lambda grid is empty")
    if k < 2:
        raise ValueError("k must be >= 2")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = X.shape[0]
    mask = np.ones(n, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    rows = np.flatnonzero(mask)
    if rows.size < k:
        raise ValueError(f"masked sample of size {rows.size} is smaller than k={k}")
    if len(grid) == 1:
        return grid[0]
    spec = spec.resolve(X)
    G_all = gram_matrix(spec, X[rows])
    sq_err = np.zeros(len(grid))
    for fold in split_indices(rows.size, k, seed):
        held = np.zeros(rows.size, dtype=bool)
        held[fold] = True
        if held.all():
            raise ValueError("degenerate fold: no training rows")
        n_kept = n - held.sum()
        G_tr = G_all[np.ix_(~held, ~held)]
        G_te = G_all[np.ix_(held, ~held)]
        y_tr = y[rows[~held]]
        y_te = y[rows[held]]
        for g, lam in enumerate(grid):
            alpha = solve_regularized(G_tr, n_kept * lam, y_tr)
            sq_err[g] += np.sum((G_te @ alpha - y_te) ** 2)
    mse = sq_err / rows.size
    best = np.flatnonzero(mse == mse.min())
    return grid[max(best, key=lambda g: grid[g])]


@dataclass(frozen=True)
class PluginEstimator:
    f0: FittedKRR
    f1: FittedKRR
    lam0: float
    lam1: float

    def predict(self, Xq: np.ndarray) -> np.ndarray:
        return predict(self.f1, Xq) - predict(self.f0, Xq)


def plugin_cate(
    data: Dataset, spec_F: KernelSpec, grid: Sequence[float], seed: int = 0, k: int = 3
) -> PluginEstimator:
    """h_hat = f1_hat - f0_hat with per-arm CV'd lambda, refit on all rows of each arm."""
    data.check_both_arms()
    spec_F = spec_F.resolve(data.X)
    fits = []
    lams = []
    for a in (0, 1):
        mask = data.A == a
        lam = kfold_cv_lambda(spec_F, data.X, data.Y, mask, grid, k, seed)
        fits.append(fit_masked(spec_F, data.X, data.Y, mask, lam))
        lams.append(lam)
    return PluginEstimator(fits[0], fits[1], lams[0], lams[1])


def dr_pseudo_outcome(A, Y, f0_vals, f1_vals, pi_vals) -> np.ndarray:
    """Doubly robust (AIPW) pseudo-outcome."""
    A = np.asarray(A, dtype=float)
    Y = np.asarray(Y, dtype=float)
    return (
        f1_vals
        - f0_vals
        + A * (Y - f1_vals) / pi_vals
        - (1.0 - A) * (Y - f0_vals) / (1.0 - pi_vals)
    )


@dataclass(frozen=True)
class DRLearner:
    f0: FittedKRR
    f1: FittedKRR
    propensity: FittedKRR
    second_stage: FittedKRR

    def propensity_scores(self, Xq: np.ndarray) -> np.ndarray:
        return np.clip(predict(self.propensity, Xq), *PROPENSITY_CLIP)

    def predict(self, Xq: np.ndarray) -> np.ndarray:
        return predict(self.second_stage, Xq)


def dr_learner(
    data: Dataset,
    spec_F: KernelSpec,
    stage2_spec: KernelSpec,
    grid: Sequence[float],
    seed: int = 0,
    k: int = 3,
) -> DRLearner:
    """Two-way split DR-learner; nuisances on one half, stage 2 on the other."""
    first, second = split_indices(data.n, 2, seed)
    h1 = data.subset(first)
    h2 = data.subset(second)
    h1.check_both_arms("first half")
    h2.check_both_arms("second half")

    spec_F = spec_F.resolve(h1.X)
    arms = []
    for a in (0, 1):
        mask = h1.A == a
        lam = kfold_cv_lambda(spec_F, h1.X, h1.Y, mask, grid, k, seed + 1 + a)
        arms.append(fit_masked(spec_F, h1.X, h1.Y, mask, lam))
    A1 = h1.A.astype(float)
    lam_pi = kfold_cv_lambda(spec_F, h1.X, A1, None, grid, k, seed + 3)
    pi_model = fit_masked(spec_F, h1.X, A1, None, lam_pi)

    pi_vals = np.clip(predict(pi_model, h2.X), *PROPENSITY_CLIP)
    psi = dr_pseudo_outcome(h2.A, h2.Y, predict(arms[0], h2.X), predict(arms[1], h2.X), pi_vals)
    lam2 = kfold_cv_lambda(stage2_spec, h2.X, psi, None, grid, k, seed + 4)
    stage2 = fit_masked(stage2_spec, h2.X, psi, None, lam2)
    return DRLearner(arms[0], arms[1], pi_model, stage2)
