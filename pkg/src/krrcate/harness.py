"""Experiment orchestration: replications, rate sweeps, diagnostics, CSV ingestion.

Replication ``r`` of a run uses seed ``master_seed + r`` for data, test grid and
every method, so methods are compared on the same samples.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .baselines import dr_learner, dyadic_grid, plugin_cate
from .cate import Dataset, default_bar_lambda, fit_cate, theory_bar_lambda
from .dgp import ScenarioSpec, generate, test_grid
from .kernels import KernelSpec
from .krr import SolverError
from .selection import CandidateConfig, SelectionResult, select, split_indices, split_three

log = logging.getLogger(__name__)

METHODS = ("ours", "plugin", "dr", "ours_fixed", "flat")
METHOD_NAMES = {
    "ours": "Ours",
    "plugin": "Plug-in KRR",
    "dr": "DR-Learner KRR",
    "ours_fixed": "Ours (fixed lambda)",
    "flat": "Zero predictor",
}
MAX_FAILURE_FRACTION = 0.10
REPORT_COLUMNS = ("scenario", "method", "rep", "seed", "mse", "runtime_sec")

LambdaRule = Union[str, float]


class HarnessError(RuntimeError):
    """A run could not produce a usable report."""


def lambda_from_rule(rule: LambdaRule, n: int) -> float:
    """Resolve ``"0.01/n"``, ``"log(n)/n"`` or a number for sample size ``n``."""
    if rule == "0.01/n":
        return default_bar_lambda(n)
    if rule == "log(n)/n":
        return theory_bar_lambda(n)
    value = float(rule)
    if not value > 0:
        raise ValueError(f"regularizer must be positive, got {value}")
    return value


@dataclass(frozen=True)
class PipelineConfig:
    """Kernels, candidate library and tuning knobs shared by all methods.

    ``candidate_lambdas`` is ``"dyadic"`` for {2^(j-1)/n : j = 1..grid_size}
    with n the full sample size, or an explicit list.
    """

    nuisance: KernelSpec
    candidate_kernels: Tuple[KernelSpec, ...]
    dr_stage2: KernelSpec
    truncation: float
    candidate_lambdas: Union[str, Tuple[float, ...]] = "dyadic"
    grid_size: int = 10
    bar_lambda: LambdaRule = "0.01/n"
    tilde_lambda: LambdaRule = "0.01/n"
    cv_folds: int = 3
    fixed_lambda_exponent: float = -0.8
    fixed_stage2: Optional[KernelSpec] = None

    def lambda_grid(self, n: int) -> List[float]:
        if self.candidate_lambdas == "dyadic":
            return dyadic_grid(n, self.grid_size)
        return [float(v) for v in self.candidate_lambdas]

    def candidates(self, n: int) -> List[CandidateConfig]:
        return [
            CandidateConfig(spec, lam)
            for spec in self.candidate_kernels
            for lam in self.lambda_grid(n)
        ]

    def cv_grid(self, n: int) -> List[float]:
        return dyadic_grid(n, self.grid_size)


def default_pipeline(scenario: str) -> PipelineConfig:
    """Kernel and tuning choices of the synthetic experiments."""
    if scenario == "univariate":
        return PipelineConfig(
            nuisance=KernelSpec("sobolev", 1),
            candidate_kernels=(KernelSpec("sobolev", 2),),
            dr_stage2=KernelSpec("sobolev", 2),
            truncation=4.0,
        )
    first4 = (0, 1, 2, 3)
    library = (
        KernelSpec("matern", 1.5, 2.6),
        KernelSpec("matern", 2.5, 2.4),
        KernelSpec("matern", 1.5, 1.6, first4),
        KernelSpec("matern", 2.5, 1.5, first4),
        KernelSpec("rbf", 1, 2.1),
        KernelSpec("rbf", 1, 1.3, first4),
    )
    dr2 = KernelSpec("matern", 2.5, 2.4) if scenario == "multi_dense" else KernelSpec(
        "matern", 2.5, 1.5, first4
    )
    return PipelineConfig(
        nuisance=KernelSpec("matern", 1.5, 2.6),
        candidate_kernels=library,
        dr_stage2=dr2,
        truncation=2.0,
    )


# ---------------------------------------------------------------- methods


@dataclass
class MethodFit:
    predict: Callable[[np.ndarray], np.ndarray]
    selected: str = ""
    selection: Optional[SelectionResult] = None


def run_ours(data: Dataset, pipeline: PipelineConfig, seed: int) -> MethodFit:
    """Three-way split model selection on ``data``."""
    d1, d2, d3 = split_three(data, seed)
    result = select(
        pipeline.candidates(data.n),
        d1,
        d2,
        d3,
        pipeline.nuisance,
        lambda_from_rule(pipeline.bar_lambda, d1.n),
        lambda_from_rule(pipeline.tilde_lambda, d2.n),
        pipeline.truncation,
    )
    return MethodFit(result.predict, result.chosen_config.label, result)


def fit_method(method: str, data: Dataset, pipeline: PipelineConfig, seed: int) -> MethodFit:
    n = data.n
    if method == "ours":
        return run_ours(data, pipeline, seed)
    if method == "plugin":
        est = plugin_cate(data, pipeline.nuisance, pipeline.cv_grid(n), seed, pipeline.cv_folds)
        return MethodFit(est.predict)
    if method == "dr":
        est = dr_learner(
            data, pipeline.nuisance, pipeline.dr_stage2, pipeline.cv_grid(n), seed, pipeline.cv_folds
        )
        return MethodFit(est.predict)
    if method == "ours_fixed":
        stage2 = pipeline.fixed_stage2 or pipeline.candidate_kernels[0]
        lam = n ** pipeline.fixed_lambda_exponent
        est = fit_cate(data, pipeline.nuisance, stage2, lambda_from_rule(pipeline.bar_lambda, n), lam)
        return MethodFit(est.predict, f"{stage2.label()}|lam={lam:.6g}")
    if method == "flat":
        return MethodFit(lambda Xq: np.zeros(np.asarray(Xq).shape[0]))
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")


# ---------------------------------------------------------------- experiments


@dataclass
class ExperimentReport:
    scenario: ScenarioSpec
    method: str
    per_rep_mse: List[float]
    seeds: List[int]
    mean_mse: float
    se_mean: float
    runtime_sec: float
    per_rep_runtime: List[float] = field(default_factory=list)
    selected: List[str] = field(default_factory=list)
    n_failed: int = 0

    @property
    def successful_mse(self) -> np.ndarray:
        v = np.asarray(self.per_rep_mse, dtype=float)
        return v[np.isfinite(v)]


def summarize(values: Sequence[float]) -> Tuple[float, float]:
    """Mean and standard error of the mean (0 for a single value)."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return math.nan, math.nan
    se = float(np.std(v, ddof=1) / np.sqrt(v.size)) if v.size > 1 else 0.0
    return float(np.mean(v)), se


def run_replication(args) -> Dict[str, tuple]:
    """One replication: returns ``{method: (mse, runtime, selected, error)}``."""
    scenario, methods, seed, pipeline, test_size = args
    data, h_true, _ = generate(scenario.with_seed(seed))
    Xt = test_grid(scenario, test_size, seed)
    target = h_true(Xt)
    out = {}
    for method in methods:
        t0 = time.perf_counter()
        try:
            fit = fit_method(method, data, pipeline, seed)
            mse = float(np.mean((fit.predict(Xt) - target) ** 2))
            if not math.isfinite(mse):
                raise SolverError("non-finite test MSE")
            out[method] = (mse, time.perf_counter() - t0, fit.selected, "")
        except (SolverError, ValueError, np.linalg.LinAlgError) as exc:
            log.warning("seed %d method %s failed: %s", seed, method, exc)
            out[method] = (math.nan, time.perf_counter() - t0, "", str(exc))
    return out


def run_experiment(
    scenario: ScenarioSpec,
    methods: Sequence[str],
    reps: int,
    master_seed: int,
    pipeline: Optional[PipelineConfig] = None,
    workers: int = 1,
    test_size: int = 3000,
) -> List[ExperimentReport]:
    """Monte Carlo comparison of ``methods`` on ``reps`` fresh samples."""
    if reps < 1:
        raise ValueError("reps must be >= 1")
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}; expected one of {METHODS}")
    pipeline = pipeline or default_pipeline(scenario.scenario)
    seeds = [master_seed + r for r in range(reps)]
    jobs = [(scenario, tuple(methods), s, pipeline, test_size) for s in seeds]
    if workers > 1 and reps > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_replication, jobs))
    else:
        results = [run_replication(job) for job in jobs]

    reports = []
    for method in methods:
        rows = [res[method] for res in results]
        mse = [row[0] for row in rows]
        failed = sum(1 for v in mse if not math.isfinite(v))
        if failed > MAX_FAILURE_FRACTION * reps:
            raise HarnessError(f"{method}: {failed}/{reps} replications failed")
        mean, se = summarize([v for v in mse if math.isfinite(v)])
        runtimes = [row[1] for row in rows]
        reports.append(
            ExperimentReport(
                scenario=scenario.with_seed(master_seed),
                method=method,
                per_rep_mse=mse,
                seeds=seeds,
                mean_mse=mean,
                se_mean=se,
                runtime_sec=float(sum(runtimes)),
                per_rep_runtime=runtimes,
                selected=[row[2] for row in rows],
                n_failed=failed,
            )
        )
    return reports


def theoretical_exponent(gamma: float, dim: int) -> float:
    """n-exponent -2*gamma/(d + 2*gamma) of the squared L2 rate."""
    return -2.0 * gamma / (dim + 2.0 * gamma)


@dataclass
class RateSweep:
    n_list: List[int]
    mean_mse: List[float]
    slope: float
    intercept: float
    reports: List[ExperimentReport] = field(repr=False, default_factory=list)


def fit_loglog_slope(n_list: Sequence[int], mse: Sequence[float]) -> Tuple[float, float]:
    mse = np.asarray(mse, dtype=float)
    if not np.all(np.isfinite(mse)) or np.any(mse <= 0):
        raise HarnessError("rate fit needs finite positive MSEs")
    slope, intercept = np.polyfit(np.log(np.asarray(n_list, dtype=float)), np.log(mse), 1)
    return float(slope), float(intercept)


def rate_sweep(
    scenario: ScenarioSpec,
    method: str,
    n_list: Sequence[int],
    reps: int,
    master_seed: int,
    pipeline: Optional[PipelineConfig] = None,
    workers: int = 1,
    test_size: int = 3000,
) -> RateSweep:
    """Least-squares slope of log mean MSE against log n."""
    n_list = [int(n) for n in n_list]
    if len(n_list) < 3 or any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError("n_list needs at least 3 strictly increasing sizes")
    reports = [
        run_experiment(scenario.with_n(n), [method], reps, master_seed, pipeline, workers, test_size)[0]
        for n in n_list
    ]
    means = [r.mean_mse for r in reports]
    slope, intercept = fit_loglog_slope(n_list, means)
    return RateSweep(n_list, means, slope, intercept, reports)


def effective_dimension(gram: np.ndarray, lam: float) -> float:
    """sum_j mu_j / (mu_j + lam) over eigenvalues mu_j of gram / n."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    gram = np.asarray(gram, dtype=float)
    mu = np.clip(np.linalg.eigvalsh(gram / gram.shape[0]), 0.0, None)
    return float(np.sum(mu / (mu + lam)))


# ---------------------------------------------------------------- reports


def report_rows(reports: Sequence[ExperimentReport], record_runtime: bool = False):
    for rep in reports:
        for r, (seed, mse) in enumerate(zip(rep.seeds, rep.per_rep_mse)):
            runtime = f"{rep.per_rep_runtime[r]:.6f}" if record_runtime else ""
            yield {
                "scenario": rep.scenario.scenario,
                "method": rep.method,
                "rep": r,
                "seed": seed,
                "mse": repr(float(mse)),
                "runtime_sec": runtime,
            }


def write_report_csv(path, reports: Sequence[ExperimentReport], record_runtime: bool = False):
    """One row per method x replication; runtimes only when ``record_runtime``."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(report_rows(reports, record_runtime))


def markdown_table(reports: Sequence[ExperimentReport]) -> str:
    """Method rows, one column per sample size: ``mean (se)``."""
    ns = sorted({rep.scenario.n for rep in reports}, reverse=True)
    methods = list(dict.fromkeys(rep.method for rep in reports))
    cell = {(rep.method, rep.scenario.n): rep for rep in reports}
    buf = io.StringIO()
    buf.write("| Method | " + " | ".join(f"n={n}" for n in ns) + " |\n")
    buf.write("|---|" + "---|" * len(ns) + "\n")
    for m in methods:
        vals = []
        for n in ns:
            rep = cell.get((m, n))
            vals.append("" if rep is None else f"{rep.mean_mse:.4f} ({rep.se_mean:.4f})")
        buf.write(f"| {METHOD_NAMES.get(m, m)} | " + " | ".join(vals) + " |\n")
    return buf.getvalue()


# ---------------------------------------------------------------- real data


class IngestError(ValueError):
    """Malformed input CSV."""


@dataclass(frozen=True)
class Rescaling:
    """Min-max maps fitted on training rows."""

    x_min: np.ndarray
    x_range: np.ndarray
    y_min: float
    y_range: float

    def scale_X(self, X):
        return (np.asarray(X, dtype=float) - self.x_min) / self.x_range

    def scale_y(self, y):
        return (np.asarray(y, dtype=float) - self.y_min) / self.y_range

    def unscale_y(self, y):
        return np.asarray(y, dtype=float) * self.y_range + self.y_min

    def unscale_cate(self, h):
        # a difference of outcomes: the shift cancels
        return np.asarray(h, dtype=float) * self.y_range


@dataclass(frozen=True)
class IngestedData:
    data: Dataset
    rescaling: Rescaling
    raw_X: np.ndarray
    raw_Y: np.ndarray
    covariate_cols: Tuple[str, ...]


def ingest_csv(
    path,
    covariate_cols: Sequence[str],
    treatment_col: str,
    outcome_col: str,
    train_rows: Optional[Sequence[int]] = None,
) -> IngestedData:
    """Read a CSV and rescale covariates to [0,1]^d and outcomes to [0,1].

    Scaling statistics come from ``train_rows`` (all rows by default); other
    rows may fall outside [0, 1].
    """
    covariate_cols = tuple(covariate_cols)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise IngestError(f"cannot read {path} ({exc.strerror})") from None
    with fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in (*covariate_cols, treatment_col, outcome_col) if c not in header]
        if missing:
            raise IngestError(f"columns not found in header: {missing}")
        X, A, Y = [], [], []
        for row_no, row in enumerate(reader, start=1):
            try:
                x = [float(row[c]) for c in covariate_cols]
                a = float(row[treatment_col])
                y = float(row[outcome_col])
            except (TypeError, ValueError) as exc:
                raise IngestError(f"row {row_no}: unparseable value ({exc})") from None
            if a not in (0.0, 1.0):
                raise IngestError(f"row {row_no}: treatment must be 0 or 1, got {row[treatment_col]}")
            if not (all(map(math.isfinite, x)) and math.isfinite(y)):
                raise IngestError(f"row {row_no}: non-finite value")
            X.append(x)
            A.append(int(a))
            Y.append(y)
    if len(Y) < 10:
        raise IngestError(f"need at least 10 rows, got {len(Y)}")
    X = np.array(X, dtype=float)
    Y = np.array(Y, dtype=float)
    train = np.arange(len(Y)) if train_rows is None else np.asarray(train_rows)
    x_min = X[train].min(axis=0)
    x_range = X[train].max(axis=0) - x_min
    if np.any(x_range == 0):
        bad = [covariate_cols[j] for j in np.flatnonzero(x_range == 0)]
        raise IngestError(f"constant covariate column(s) {bad}: scale undefined")
    y_min = float(Y[train].min())
    y_range = float(Y[train].max()) - y_min
    if y_range == 0:
        raise IngestError(f"outcome column {outcome_col!r} is constant: scale undefined")
    scaling = Rescaling(x_min, x_range, y_min, y_range)
    data = Dataset(scaling.scale_X(X), np.array(A), scaling.scale_y(Y))
    return IngestedData(data, scaling, X, Y, covariate_cols)


@dataclass
class CrossFitPredictor:
    """Pointwise mean of the selected predictors over the successful rotations."""

    rotations: List[Optional[SelectionResult]]
    errors: Dict[int, str] = field(default_factory=dict)

    def predict(self, Xq: np.ndarray) -> np.ndarray:
        preds = [rot.predict(Xq) for rot in self.rotations if rot is not None]
        return np.mean(preds, axis=0)


def cross_fit_average(data: Dataset, pipeline: PipelineConfig, seed: int) -> CrossFitPredictor:
    """Rotate the (D1, D2, D3) roles over a seeded 3-fold partition and average."""
    if data.n < 9:
        raise ValueError("cross-fitting needs at least 9 rows")
    folds = [data.subset(idx) for idx in split_indices(data.n, 3, seed)]
    candidates = pipeline.candidates(data.n)
    rotations: List[Optional[SelectionResult]] = []
    errors: Dict[int, str] = {}
    for r in range(3):
        d1, d2, d3 = folds[r], folds[(r + 1) % 3], folds[(r + 2) % 3]
        try:
            for name, part in zip(("D1", "D2", "D3"), (d1, d2, d3)):
                part.check_both_arms(f"rotation {r} {name}")
            rotations.append(
                select(
                    candidates,
                    d1,
                    d2,
                    d3,
                    pipeline.nuisance,
                    lambda_from_rule(pipeline.bar_lambda, d1.n),
                    lambda_from_rule(pipeline.tilde_lambda, d2.n),
                    pipeline.truncation,
                )
            )
        except (SolverError, ValueError) as exc:
            log.warning("rotation %d failed: %s", r, exc)
            errors[r] = str(exc)
            rotations.append(None)
    if all(rot is None for rot in rotations):
        raise HarnessError(f"every cross-fitting rotation failed: {errors}")
    return CrossFitPredictor(rotations, errors)
