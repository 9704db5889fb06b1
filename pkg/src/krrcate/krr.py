"""Exact kernel ridge regression with an optional row mask.

The fitted objective is

    (1/n) * sum_{i in mask} (y_i - f(x_i))^2 + lam * ||f||^2

with n the full number of rows passed in, so the dual system solved on the
masked rows S is (G_SS + n*lam*I) alpha = y_S.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .kernels import KernelSpec, cross_gram, gram_matrix

JITTER_START = 1e-10
JITTER_STEPS = 6


class SolverError(RuntimeError):
    """The regularized Gram system could not be factorized."""


@dataclass(frozen=True)
class FittedKRR:
    spec: KernelSpec
    train_points: np.ndarray
    dual_coeffs: np.ndarray
    ridge: float
    n_total: int

    def predict(self, Xq: np.ndarray) -> np.ndarray:
        return predict(self, Xq)


def solve_regularized(G: np.ndarray, ridge: float, y: np.ndarray) -> np.ndarray:
    """Solve (G + ridge*I) alpha = y by Cholesky, escalating jitter on failure."""
    m = G.shape[0]
    A = G + ridge * np.eye(m)
    jitter = JITTER_START * max(np.trace(G) / m, 1.0)
    for attempt in range(JITTER_STEPS + 1):
        try:
            factor = cho_factor(A, lower=True, check_finite=False)
            return cho_solve(factor, y, check_finite=False)
        except LinAlgError:
            if attempt == JITTER_STEPS:
                break
            A = A + jitter * np.eye(m)
            jitter *= 10.0
    raise SolverError(f"Gram system of size {m} is not positive definite after jitter")


def fit_masked(
    spec: KernelSpec,
    X: np.ndarray,
    y: np.ndarray,
    mask: Optional[np.ndarray],
    lam: float,
    gram: Optional[np.ndarray] = None,
) -> FittedKRR:
    """Fit KRR on the rows where ``mask`` is true.

    Args:
        spec: Kernel; a ``"median"`` length scale is resolved on all of ``X``.
        X: Covariates, shape (n, d).
        y: Responses, length n.
        mask: Boolean row mask, or None for all rows.
        lam: Regularizer; the system ridge is ``n * lam``.
        gram: Optional precomputed Gram matrix of the masked rows under the
            resolved ``spec``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = X.shape[0]
    if y.shape != (n,):
        raise ValueError(f"y has shape {y.shape}, expected ({n},)")
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    mask = np.ones(n, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("mask selects no rows")
    spec = spec.resolve(X)
    Xs = X[mask]
    G = gram_matrix(spec, Xs) if gram is None else gram
    ridge = n * lam
    alpha = solve_regularized(G, ridge, y[mask])
    return FittedKRR(spec=spec, train_points=Xs, dual_coeffs=alpha, ridge=ridge, n_total=n)


def predict(model: FittedKRR, Xq: np.ndarray) -> np.ndarray:
    Xq = np.asarray(Xq, dtype=float)
    if Xq.ndim == 1:
        Xq = Xq[None, :]
    if Xq.shape[1] != model.train_points.shape[1]:
        raise ValueError(
            f"query dimension {Xq.shape[1]} != training dimension {model.train_points.shape[1]}"
        )
    return cross_gram(model.spec, Xq, model.train_points) @ model.dual_coeffs
