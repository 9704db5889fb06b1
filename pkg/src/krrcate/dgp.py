"""Synthetic observational data with known treatment effects.

Scenarios:

* ``univariate``: x ~ U[0, 1], f0(x) = 5(|x - 0.4| + |x - 0.8|), h(x) = x^2.
* ``multi_dense``: x ~ U[-1, 1]^10, f0(x) = (2/d) sum sin(x_j), h(x) = (0.5/d) sum x_j.
* ``multi_sparse``: as ``multi_dense`` but h(x) = (0.3/4) sum_{j<4} x_j^2.

All share the propensity pi(x) = clip(sin(5 ||x||_2), 0.1, 0.9).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Tuple

import numpy as np

from .cate import Dataset

SCENARIOS = ("univariate", "multi_dense", "multi_sparse")
DIMENSION = {"univariate": 1, "multi_dense": 10, "multi_sparse": 10}
SPARSE_P = 4
OVERLAP = 0.1
TEST_SIZE = 3000


@dataclass(frozen=True)
class ScenarioSpec:
    scenario: str
    n: int
    sigma: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}; expected one of {SCENARIOS}")
        if int(self.n) != self.n or self.n < 10:
            raise ValueError(f"n must be an integer >= 10, got {self.n}")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")

    @property
    def dim(self) -> int:
        return DIMENSION[self.scenario]

    def with_seed(self, seed: int) -> "ScenarioSpec":
        return ScenarioSpec(self.scenario, self.n, self.sigma, seed)

    def with_n(self, n: int) -> "ScenarioSpec":
        return ScenarioSpec(self.scenario, n, self.sigma, self.seed)

    def to_dict(self) -> dict:
        return {"scenario": self.scenario, "n": self.n, "sigma": self.sigma, "seed": self.seed}


def _as_2d(x):
    x = np.asarray(x, dtype=float)
    return x[None, :] if x.ndim == 1 else x


def propensity(x) -> np.ndarray:
    x = _as_2d(x)
    return np.clip(np.sin(5.0 * np.linalg.norm(x, axis=1)), OVERLAP, 1.0 - OVERLAP)


def baseline_fn(scenario: str) -> Callable[[np.ndarray], np.ndarray]:
    """Control-arm mean response f0 for a scenario."""
    if scenario == "univariate":
        return lambda x: 5.0 * (np.abs(_as_2d(x)[:, 0] - 0.4) + np.abs(_as_2d(x)[:, 0] - 0.8))
    return lambda x: (2.0 / _as_2d(x).shape[1]) * np.sin(_as_2d(x)).sum(axis=1)


def cate_fn(scenario: str) -> Callable[[np.ndarray], np.ndarray]:
    """True treatment effect h for a scenario."""
    if scenario == "univariate":
        return lambda x: _as_2d(x)[:, 0] ** 2
    if scenario == "multi_dense":
        return lambda x: (0.5 / _as_2d(x).shape[1]) * _as_2d(x).sum(axis=1)
    return lambda x: (0.3 / SPARSE_P) * (_as_2d(x)[:, :SPARSE_P] ** 2).sum(axis=1)


def sup_abs_cate(scenario: str) -> float:
    """sup_x |h(x)| over the covariate support."""
    return {"univariate": 1.0, "multi_dense": 0.5, "multi_sparse": 0.3}[scenario]


def _draw_covariates(scenario: str, q: int, rng: np.random.Generator) -> np.ndarray:
    if scenario == "univariate":
        return rng.uniform(0.0, 1.0, size=(q, 1))
    return rng.uniform(-1.0, 1.0, size=(q, DIMENSION[scenario]))


def generate(spec: ScenarioSpec) -> Tuple[Dataset, Callable, Callable]:
    """Draw a sample of size ``spec.n``.

    Returns:
        The dataset, the true CATE function and the true propensity function.
    """
    rng = np.random.default_rng(spec.seed)
    X = _draw_covariates(spec.scenario, spec.n, rng)
    pi = propensity(X)
    A = (rng.uniform(size=spec.n) < pi).astype(int)
    h = cate_fn(spec.scenario)
    Y = baseline_fn(spec.scenario)(X) + A * h(X) + spec.sigma * rng.standard_normal(spec.n)
    return Dataset(X, A, Y), h, propensity


def test_grid(spec: ScenarioSpec, q: int = TEST_SIZE, seed: int = None) -> np.ndarray:
    """Fresh covariate draws for evaluating a fitted CATE."""
    if q < 1:
        raise ValueError("q must be >= 1")
    seed = spec.seed if seed is None else seed
    # separate stream from the training draw with the same seed
    rng = np.random.default_rng([seed, 7919])
    return _draw_covariates(spec.scenario, q, rng)


test_grid.__test__ = False  # not a pytest test
