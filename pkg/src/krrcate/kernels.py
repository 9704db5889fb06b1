"""Kernel families, Gram matrices and the median length-scale heuristic.

Three families are supported:

* ``matern`` with smoothness ``nu`` in {1.5, 2.5},
* ``rbf`` (squared exponential),
* ``sobolev``: the Bernoulli-polynomial reproducing kernel of H^m([0, 1])
  under the smoothing-spline inner product, tensorized over coordinates.

Every kernel reads only its ``active_coords``, which is how low-dimensional
projections of the covariates are expressed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Sequence, Union

import numpy as np
from scipy.optimize import brentq
from scipy.spatial.distance import pdist
from scipy.special import bernoulli

from . import _backend

FAMILIES = ("sobolev", "matern", "rbf")
MATERN_NUS = (1.5, 2.5)
MEDIAN = "median"

# pairs beyond this many rows are subsampled for the median heuristic
MEDIAN_MAX_ROWS = 4000


class KernelError(ValueError):
    """Invalid kernel specification or kernel input."""


ActiveCoords = Union[str, tuple]


@dataclass(frozen=True)
class KernelSpec:
    """Declarative kernel description.

    Attributes:
        family: One of ``"sobolev"``, ``"matern"``, ``"rbf"``.
        order_or_nu: Sobolev order m (integer >= 1) or Matern nu.
        length_scale: Positive length scale, ``"median"`` to resolve from
            data, or None for the Sobolev family (which ignores it).
        active_coords: Tuple of coordinate indices or ``"all"``.
    """

    family: str
    order_or_nu: float = 1.0
    length_scale: Union[float, str, None] = None
    active_coords: ActiveCoords = "all"

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise KernelError(f"unknown kernel family {self.family!r}")
        if self.family == "sobolev":
            m = self.order_or_nu
            if m != int(m) or m < 1:
                raise KernelError(f"sobolev order must be an integer >= 1, got {m}")
            object.__setattr__(self, "order_or_nu", int(m))
        elif self.family == "matern":
            if float(self.order_or_nu) not in MATERN_NUS:
                raise KernelError(f"matern nu must be one of {MATERN_NUS}")
            object.__setattr__(self, "order_or_nu", float(self.order_or_nu))
        if self.family != "sobolev":
            ls = self.length_scale
            if ls is None:
                raise KernelError(f"{self.family} kernel needs a length_scale")
            if ls != MEDIAN:
                ls = float(ls)
                if not (ls > 0 and math.isfinite(ls)):
                    raise KernelError("length_scale must be positive and finite")
                object.__setattr__(self, "length_scale", ls)
        coords = self.active_coords
        if coords != "all":
            coords = tuple(int(c) for c in coords)
            if not coords or min(coords) < 0 or len(set(coords)) != len(coords):
                raise KernelError("active_coords must be a non-empty set of indices >= 0")
            object.__setattr__(self, "active_coords", coords)

    @property
    def needs_resolution(self) -> bool:
        return self.length_scale == MEDIAN

    def restrict(self, X: np.ndarray) -> np.ndarray:
        """Return the active columns of ``X`` as a contiguous float array."""
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.ndim != 2:
            raise KernelError("expected a 2-d covariate array")
        if self.active_coords != "all":
            if max(self.active_coords) >= X.shape[1]:
                raise KernelError(
                    f"active coordinate {max(self.active_coords)} out of range "
                    f"for dimension {X.shape[1]}"
                )
            X = X[:, list(self.active_coords)]
        if not np.all(np.isfinite(X)):
            raise KernelError("non-finite kernel input")
        if self.family == "sobolev" and X.size and (X.min() < 0.0 or X.max() > 1.0):
            raise KernelError("sobolev kernel inputs must lie in [0, 1]")
        return np.ascontiguousarray(X)

    def resolve(self, X: np.ndarray) -> "KernelSpec":
        """Fill in a ``"median"`` length scale from the rows of ``X``."""
        if not self.needs_resolution:
            return self
        ls = median_heuristic_length_scale(self.family, self.order_or_nu, X, self.active_coords)
        return replace(self, length_scale=ls)

    def label(self) -> str:
        coords = "all" if self.active_coords == "all" else ",".join(map(str, self.active_coords))
        if self.family == "sobolev":
            return f"sobolev(m={self.order_or_nu})[{coords}]"
        ls = self.length_scale if isinstance(self.length_scale, str) else f"{self.length_scale:.4g}"
        if self.family == "matern":
            return f"matern(nu={self.order_or_nu},l={ls})[{coords}]"
        return f"rbf(l={ls})[{coords}]"

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "order_or_nu": self.order_or_nu,
            "length_scale": self.length_scale,
            "active_coords": (
                "all" if self.active_coords == "all" else list(self.active_coords)
            ),
        }

    @classmethod
    def from_dict(cls, record: dict) -> "KernelSpec":
        allowed = {"family", "order_or_nu", "length_scale", "active_coords"}
        unknown = set(record) - allowed
        if unknown:
            raise KernelError(f"unknown kernel keys: {sorted(unknown)}")
        if "family" not in record:
            raise KernelError("kernel record needs a 'family'")
        return cls(
            family=record["family"],
            order_or_nu=record.get("order_or_nu", 1.0),
            length_scale=record.get("length_scale"),
            active_coords=record.get("active_coords", "all"),
        )


@lru_cache(maxsize=None)
def _bernoulli_poly(k: int) -> np.ndarray:
    """Horner coefficients (highest degree first) of B_k(x)/k!."""
    b = bernoulli(k)
    # B_k(x) = sum_j C(k, j) b_j x^(k - j); index j is the coefficient of x^(k-j)
    coefs = np.array([math.comb(k, j) * b[j] for j in range(k + 1)])
    return coefs / math.factorial(k)


@lru_cache(maxsize=None)
def _sobolev_coefs(m: int):
    low = tuple(_bernoulli_poly(k) for k in range(1, m + 1))
    high = (-1) ** (m + 1) * _bernoulli_poly(2 * m)
    return low, np.ascontiguousarray(high)


def bernoulli_polynomial(k: int, x):
    """Evaluate the Bernoulli polynomial B_k at ``x``."""
    return np.polyval(_bernoulli_poly(k), np.asarray(x, dtype=float)) * math.factorial(k)


def _check_resolved(spec: KernelSpec):
    if spec.needs_resolution:
        raise KernelError("length_scale is 'median'; call spec.resolve(X) first")


def _dispatch(spec: KernelSpec, A: np.ndarray, B: np.ndarray, symmetric: bool) -> np.ndarray:
    if spec.family == "matern":
        return _backend.matern_gram(A, B, spec.order_or_nu, spec.length_scale, symmetric)
    if spec.family == "rbf":
        return _backend.rbf_gram(A, B, spec.length_scale, symmetric)
    low, high = _sobolev_coefs(spec.order_or_nu)
    return _backend.sobolev_gram(A, B, low, high, symmetric)


def cross_gram(spec: KernelSpec, X1: np.ndarray, X2: np.ndarray) -> np.ndarray:
    """Kernel matrix with entries k(X1[i], X2[j])."""
    _check_resolved(spec)
    A = spec.restrict(X1)
    B = spec.restrict(X2)
    if A.shape[1] != B.shape[1]:
        raise KernelError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    return _dispatch(spec, A, B, symmetric=False)


def gram_matrix(spec: KernelSpec, X: np.ndarray) -> np.ndarray:
    """Symmetric Gram matrix of the rows of ``X``."""
    _check_resolved(spec)
    A = spec.restrict(X)
    if A.shape[0] < 1:
        raise KernelError("gram_matrix needs at least one row")
    return _dispatch(spec, A, A, symmetric=True)


def kernel_eval(spec: KernelSpec, x: Sequence[float], y: Sequence[float]) -> float:
    """Evaluate k(x, y) for two single points."""
    x = np.asarray(x, dtype=float).reshape(1, -1)
    y = np.asarray(y, dtype=float).reshape(1, -1)
    if x.shape != y.shape:
        raise KernelError(f"dimension mismatch: {x.shape[1]} vs {y.shape[1]}")
    return float(cross_gram(spec, x, y)[0, 0])


def _profile(family: str, nu: float, r: float, length_scale: float) -> float:
    if family == "rbf":
        return math.exp(-(r * r) / (2.0 * length_scale**2))
    u = math.sqrt(2.0 * nu) * r / length_scale
    if nu == 1.5:
        return (1.0 + u) * math.exp(-u)
    return (1.0 + u + u * u / 3.0) * math.exp(-u)


def median_pairwise_distance(X: np.ndarray, active_coords: ActiveCoords = "all") -> float:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if active_coords != "all":
        X = X[:, list(active_coords)]
    if X.shape[0] < 2:
        raise KernelError("median heuristic needs at least two rows")
    if X.shape[0] > MEDIAN_MAX_ROWS:
        rows = np.random.default_rng(0).choice(X.shape[0], MEDIAN_MAX_ROWS, replace=False)
        X = X[np.sort(rows)]
    r_med = float(np.median(pdist(X)))
    if not r_med > 0:
        raise KernelError("median pairwise distance is zero; sample is degenerate")
    return r_med


def median_heuristic_length_scale(
    family: str, nu: float, X: np.ndarray, active_coords: ActiveCoords = "all"
) -> float:
    """Length scale at which the kernel equals 0.5 at the median pairwise distance."""
    if family not in ("matern", "rbf"):
        raise KernelError(f"median heuristic is undefined for {family!r}")
    r_med = median_pairwise_distance(X, active_coords)
    if family == "rbf":
        return r_med / math.sqrt(2.0 * math.log(2.0))
    if float(nu) not in MATERN_NUS:
        raise KernelError(f"matern nu must be one of {MATERN_NUS}")
    nu = float(nu)
    return brentq(
        lambda ls: _profile("matern", nu, r_med, ls) - 0.5,
        1e-12 * r_med,
        1e6 * r_med,
        xtol=1e-14 * r_med,
        rtol=4 * np.finfo(float).eps,
    )
