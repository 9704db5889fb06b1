"""Model selection over (stage-2 kernel, lambda) candidates with a three-way split.

D1 trains every candidate, D2 fits undersmoothed nuisances that turn D3 into
proxy labels, and the truncated candidate with the smallest proxy risk on D3
is returned.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import LinAlgError

from .cate import Dataset, default_bar_lambda, fit_nuisances, switch_impute
from .kernels import KernelSpec, gram_matrix
from .krr import FittedKRR, SolverError, fit_masked, predict

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CandidateConfig:
    stage2_spec: KernelSpec
    lam: float
    label: str = ""

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"candidate lambda must be positive, got {self.lam}")
        if not self.label:
            object.__setattr__(self, "label", f"{self.stage2_spec.label()}|lam={self.lam:.6g}")


@dataclass
class SelectionResult:
    chosen: int
    truncation_level: float
    proxy_risks: np.ndarray
    candidates: List[CandidateConfig]
    models: List[Optional[FittedKRR]] = field(repr=False, default_factory=list)
    failures: Dict[int, str] = field(default_factory=dict)

    @property
    def chosen_config(self) -> CandidateConfig:
        return self.candidates[self.chosen]

    def predict_candidate(self, j: int, Xq: np.ndarray) -> np.ndarray:
        """Truncated predictions of candidate ``j``."""
        if self.models[j] is None:
            raise ValueError(f"candidate {j} failed to train: {self.failures.get(j)}")
        return truncate(predict(self.models[j], Xq), self.truncation_level)

    def predict(self, Xq: np.ndarray) -> np.ndarray:
        return self.predict_candidate(self.chosen, Xq)


def split_indices(n: int, k: int, seed: int) -> List[np.ndarray]:
    """Seeded partition of range(n) into k parts; earlier parts take the remainder."""
    perm = np.random.default_rng(seed).permutation(n)
    return np.array_split(perm, k)


def split_three(data: Dataset, seed: int) -> Tuple[Dataset, Dataset, Dataset]:
    """Random (D1, D2, D3) with sizes ceil(n/3), floor(n/3), rest."""
    if data.n < 3:
        raise ValueError("need at least 3 rows to split three ways")
    parts = [data.subset(idx) for idx in split_indices(data.n, 3, seed)]
    for name, part in zip(("D1", "D2", "D3"), parts):
        part.check_both_arms(name)
    return tuple(parts)


def truncate(values, B: float) -> np.ndarray:
    if not B > 0:
        raise ValueError(f"truncation level must be positive, got {B}")
    return np.clip(np.asarray(values, dtype=float), -B, B)


def build_proxies(
    d2: Dataset, d3: Dataset, spec_F: KernelSpec, tilde_lambda: Optional[float] = None
) -> np.ndarray:
    """Proxy labels on D3 from nuisances fitted on D2."""
    if tilde_lambda is None:
        tilde_lambda = default_bar_lambda(d2.n)
    f0, f1 = fit_nuisances(d2, spec_F, tilde_lambda)
    return switch_impute(d3, f0, f1)


def select(
    candidates: Sequence[CandidateConfig],
    d1: Dataset,
    d2: Dataset,
    d3: Dataset,
    spec_F: KernelSpec,
    bar_lambda: Optional[float],
    tilde_lambda: Optional[float],
    B: float,
) -> SelectionResult:
    """Train all candidates on D1 and pick the lowest truncated proxy risk on D3.

    Candidates share the D1 nuisance fit, so the pseudo-outcomes are computed
    once. A candidate whose stage-2 solve fails gets risk +inf.
    """
    candidates = list(candidates)
    if not candidates:
        raise ValueError("need at least one candidate")
    if not B > 0:
        raise ValueError(f"truncation level must be positive, got {B}")
    if bar_lambda is None:
        bar_lambda = default_bar_lambda(d1.n)
    f0, f1 = fit_nuisances(d1, spec_F, bar_lambda)
    m1 = switch_impute(d1, f0, f1)
    proxies = build_proxies(d2, d3, spec_F, tilde_lambda)

    grams: Dict[KernelSpec, np.ndarray] = {}
    risks = np.full(len(candidates), math.inf)
    models: List[Optional[FittedKRR]] = [None] * len(candidates)
    failures: Dict[int, str] = {}
    for j, cand in enumerate(candidates):
        try:
            spec = cand.stage2_spec.resolve(d1.X)
            if spec not in grams:
                grams[spec] = gram_matrix(spec, d1.X)
            model = fit_masked(spec, d1.X, m1, None, cand.lam, gram=grams[spec])
            preds = truncate(predict(model, d3.X), B)
            risk = float(np.mean((preds - proxies) ** 2))
            if not math.isfinite(risk):
                raise SolverError("non-finite proxy risk")
        except (SolverError, LinAlgError, ValueError) as exc:
            log.warning("candidate %d (%s) failed: %s", j, cand.label, exc)
            failures[j] = str(exc)
            continue
        models[j] = model
        risks[j] = risk
    if not np.isfinite(risks).any():
        raise SolverError("every candidate failed to train")
    chosen = int(np.argmin(risks))  # first index on ties
    return SelectionResult(chosen, B, risks, candidates, models, failures)


def model_select(
    data: Dataset,
    candidates: Sequence[CandidateConfig],
    spec_F: KernelSpec,
    B: float,
    seed: int,
    bar_lambda: Optional[float] = None,
    tilde_lambda: Optional[float] = None,
) -> SelectionResult:
    """Split ``data`` three ways by ``seed`` and run :func:`select`."""
    d1, d2, d3 = split_three(data, seed)
    return select(candidates, d1, d2, d3, spec_F, bar_lambda, tilde_lambda, B)
