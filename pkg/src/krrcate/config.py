"""JSON run configuration: parsing, validation and serialization.

Top-level sections: ``scenario`` (simulations) or ``data`` (CSV fits),
``kernels``, ``candidates``, ``selection``, ``methods``, ``execution`` and,
for rate sweeps, ``rates``. Unknown keys are rejected at every level.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

from .dgp import SCENARIOS, ScenarioSpec
from .harness import METHODS, PipelineConfig
from .kernels import KernelError, KernelSpec

LAMBDA_RULES = ("0.01/n", "log(n)/n")

SECTION_KEYS = {
    "": {"scenario", "data", "kernels", "candidates", "selection", "methods", "execution", "rates"},
    "scenario": {"name", "n", "sigma"},
    "data": {"covariates", "treatment", "outcome"},
    "kernels": {"nuisance", "dr_stage2"},
    "candidates": {"kernels", "lambdas", "grid_size"},
    "selection": {"B", "bar_lambda", "tilde_lambda"},
    "execution": {"reps", "seed", "threads", "test_size", "cv_folds", "record_runtime"},
    "rates": {"n_list", "method", "lambda_exponent", "stage2", "gamma", "intrinsic_dim", "slope_band"},
}


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending field."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass
class DataColumns:
    covariates: Tuple[str, ...]
    treatment: str
    outcome: str


@dataclass
class Execution:
    reps: int = 1
    seed: int = 0
    threads: int = 1
    test_size: int = 3000
    cv_folds: int = 3
    record_runtime: bool = False


@dataclass
class RatesSection:
    n_list: Tuple[int, ...]
    method: str = "ours_fixed"
    lambda_exponent: float = -0.8
    stage2: Optional[KernelSpec] = None
    gamma: Optional[float] = None
    intrinsic_dim: Optional[int] = None
    slope_band: Optional[Tuple[float, float]] = None


@dataclass
class RunConfig:
    kernels: Dict[str, KernelSpec]
    candidate_kernels: Tuple[KernelSpec, ...]
    candidate_lambdas: Any = "dyadic"
    grid_size: int = 10
    truncation: Optional[float] = None
    bar_lambda: Any = "0.01/n"
    tilde_lambda: Any = "0.01/n"
    methods: Tuple[str, ...] = ("ours",)
    execution: Execution = field(default_factory=Execution)
    scenario: Optional[Dict[str, Any]] = None
    data: Optional[DataColumns] = None
    rates: Optional[RatesSection] = None

    def scenario_spec(self) -> ScenarioSpec:
        if self.scenario is None:
            raise ConfigError("scenario", "section is required for simulations")
        s = self.scenario
        return ScenarioSpec(s["name"], s["n"], s.get("sigma", 1.0), self.execution.seed)

    def pipeline(self, truncation: Optional[float] = None) -> PipelineConfig:
        B = self.truncation if truncation is None else truncation
        if B is None:
            raise ConfigError("selection.B", "truncation level is required")
        return PipelineConfig(
            nuisance=self.kernels["nuisance"],
            candidate_kernels=self.candidate_kernels,
            dr_stage2=self.kernels.get("dr_stage2", self.candidate_kernels[0]),
            truncation=B,
            candidate_lambdas=self.candidate_lambdas,
            grid_size=self.grid_size,
            bar_lambda=self.bar_lambda,
            tilde_lambda=self.tilde_lambda,
            cv_folds=self.execution.cv_folds,
            fixed_lambda_exponent=self.rates.lambda_exponent if self.rates else -0.8,
            fixed_stage2=self.rates.stage2 if self.rates else None,
        )

    def to_dict(self) -> dict:
        out: Dict[str, Any] = {}
        if self.scenario is not None:
            out["scenario"] = dict(self.scenario)
        if self.data is not None:
            out["data"] = {
                "covariates": list(self.data.covariates),
                "treatment": self.data.treatment,
                "outcome": self.data.outcome,
            }
        out["kernels"] = {k: v.to_dict() for k, v in self.kernels.items()}
        out["candidates"] = {
            "kernels": [k.to_dict() for k in self.candidate_kernels],
            "lambdas": (
                self.candidate_lambdas
                if isinstance(self.candidate_lambdas, str)
                else list(self.candidate_lambdas)
            ),
            "grid_size": self.grid_size,
        }
        selection: Dict[str, Any] = {
            "bar_lambda": self.bar_lambda,
            "tilde_lambda": self.tilde_lambda,
        }
        if self.truncation is not None:
            selection["B"] = self.truncation
        out["selection"] = selection
        out["methods"] = list(self.methods)
        ex = self.execution
        out["execution"] = {
            "reps": ex.reps,
            "seed": ex.seed,
            "threads": ex.threads,
            "test_size": ex.test_size,
            "cv_folds": ex.cv_folds,
            "record_runtime": ex.record_runtime,
        }
        if self.rates is not None:
            r = self.rates
            rates: Dict[str, Any] = {
                "n_list": list(r.n_list),
                "method": r.method,
                "lambda_exponent": r.lambda_exponent,
            }
            if r.stage2 is not None:
                rates["stage2"] = r.stage2.to_dict()
            if r.gamma is not None:
                rates["gamma"] = r.gamma
            if r.intrinsic_dim is not None:
                rates["intrinsic_dim"] = r.intrinsic_dim
            if r.slope_band is not None:
                rates["slope_band"] = list(r.slope_band)
            out["rates"] = rates
        return out


def _check_keys(section: str, record: Any):
    if not isinstance(record, dict):
        raise ConfigError(section or "config", "expected an object")
    unknown = set(record) - SECTION_KEYS[section]
    if unknown:
        raise ConfigError(section or "config", f"unknown key(s) {sorted(unknown)}")


def _int(name: str, value: Any, minimum: int) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(name, f"expected an integer, got {value!r}")
    if value < minimum:
        raise ConfigError(name, f"must be >= {minimum}, got {value}")
    return value


def _positive(name: str, value: Any) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(name, f"expected a number, got {value!r}")
    if not value > 0:
        raise ConfigError(name, f"must be positive, got {value}")
    return float(value)


def _kernel(name: str, record: Any) -> KernelSpec:
    if not isinstance(record, dict):
        raise ConfigError(name, "expected a kernel object")
    try:
        return KernelSpec.from_dict(record)
    except KernelError as exc:
        raise ConfigError(name, str(exc)) from None


def _lambda_rule(name: str, value: Any):
    if isinstance(value, str):
        if value not in LAMBDA_RULES:
            raise ConfigError(name, f"expected one of {LAMBDA_RULES} or a positive number")
        return value
    return _positive(name, value)


def parse_config(raw: dict) -> RunConfig:
    _check_keys("", raw)
    for section in SECTION_KEYS:
        if section and section in raw:
            _check_keys(section, raw[section])

    scenario = None
    if "scenario" in raw:
        s = raw["scenario"]
        if s.get("name") not in SCENARIOS:
            raise ConfigError("scenario.name", f"expected one of {SCENARIOS}")
        scenario = {
            "name": s["name"],
            "n": _int("scenario.n", s.get("n"), 10),
            "sigma": _positive("scenario.sigma", s.get("sigma", 1.0)),
        }

    data = None
    if "data" in raw:
        d = raw["data"]
        cov = d.get("covariates")
        if not isinstance(cov, list) or not cov or not all(isinstance(c, str) for c in cov):
            raise ConfigError("data.covariates", "expected a non-empty list of column names")
        for key in ("treatment", "outcome"):
            if not isinstance(d.get(key), str):
                raise ConfigError(f"data.{key}", "expected a column name")
        data = DataColumns(tuple(cov), d["treatment"], d["outcome"])

    k = raw.get("kernels")
    if k is None or "nuisance" not in k:
        raise ConfigError("kernels.nuisance", "nuisance kernel is required")
    kernels = {name: _kernel(f"kernels.{name}", rec) for name, rec in k.items()}

    c = raw.get("candidates")
    if c is None or not c.get("kernels"):
        raise ConfigError("candidates.kernels", "at least one candidate kernel is required")
    if not isinstance(c["kernels"], list):
        raise ConfigError("candidates.kernels", "expected a list")
    cand_kernels = tuple(_kernel(f"candidates.kernels[{i}]", r) for i, r in enumerate(c["kernels"]))
    lambdas = c.get("lambdas", "dyadic")
    if isinstance(lambdas, str):
        if lambdas != "dyadic":
            raise ConfigError("candidates.lambdas", "expected 'dyadic' or a list of numbers")
    elif isinstance(lambdas, list) and lambdas:
        lambdas = tuple(_positive(f"candidates.lambdas[{i}]", v) for i, v in enumerate(lambdas))
    else:
        raise ConfigError("candidates.lambdas", "expected 'dyadic' or a non-empty list")
    grid_size = _int("candidates.grid_size", c.get("grid_size", 10), 1)

    sel = raw.get("selection", {})
    truncation = _positive("selection.B", sel["B"]) if "B" in sel else None
    bar_lambda = _lambda_rule("selection.bar_lambda", sel.get("bar_lambda", "0.01/n"))
    tilde_lambda = _lambda_rule("selection.tilde_lambda", sel.get("tilde_lambda", "0.01/n"))

    methods = raw.get("methods", ["ours"])
    if not isinstance(methods, list) or not methods:
        raise ConfigError("methods", "expected a non-empty list")
    for i, m in enumerate(methods):
        if m not in METHODS:
            raise ConfigError(f"methods[{i}]", f"unknown method {m!r}; expected one of {METHODS}")

    e = raw.get("execution", {})
    record = e.get("record_runtime", False)
    if not isinstance(record, bool):
        raise ConfigError("execution.record_runtime", "expected true or false")
    execution = Execution(
        reps=_int("execution.reps", e.get("reps", 1), 1),
        seed=_int("execution.seed", e.get("seed", 0), 0),
        threads=_int("execution.threads", e.get("threads", 1), 1),
        test_size=_int("execution.test_size", e.get("test_size", 3000), 1),
        cv_folds=_int("execution.cv_folds", e.get("cv_folds", 3), 2),
        record_runtime=record,
    )

    rates = None
    if "rates" in raw:
        r = raw["rates"]
        n_list = r.get("n_list")
        if not isinstance(n_list, list):
            raise ConfigError("rates.n_list", "expected a list of sample sizes")
        n_list = tuple(_int(f"rates.n_list[{i}]", v, 10) for i, v in enumerate(n_list))
        if len(n_list) < 3:
            raise ConfigError("rates.n_list", f"need at least 3 sample sizes, got {len(n_list)}")
        if any(b <= a for a, b in zip(n_list, n_list[1:])):
            raise ConfigError("rates.n_list", "sample sizes must be strictly increasing")
        method = r.get("method", "ours_fixed")
        if method not in METHODS:
            raise ConfigError("rates.method", f"unknown method {method!r}")
        exponent = r.get("lambda_exponent", -0.8)
        if isinstance(exponent, bool) or not isinstance(exponent, (int, float)) or exponent >= 0:
            raise ConfigError("rates.lambda_exponent", "expected a negative number")
        band = r.get("slope_band")
        if band is not None:
            if (
                not isinstance(band, list)
                or len(band) != 2
                or not all(isinstance(v, (int, float)) for v in band)
                or band[0] >= band[1]
            ):
                raise ConfigError("rates.slope_band", "expected [low, high] with low < high")
            band = (float(band[0]), float(band[1]))
        rates = RatesSection(
            n_list=n_list,
            method=method,
            lambda_exponent=float(exponent),
            stage2=_kernel("rates.stage2", r["stage2"]) if "stage2" in r else None,
            gamma=_positive("rates.gamma", r["gamma"]) if "gamma" in r else None,
            intrinsic_dim=_int("rates.intrinsic_dim", r["intrinsic_dim"], 1) if "intrinsic_dim" in r else None,
            slope_band=band,
        )

    return RunConfig(
        kernels=kernels,
        candidate_kernels=cand_kernels,
        candidate_lambdas=lambdas,
        grid_size=grid_size,
        truncation=truncation,
        bar_lambda=bar_lambda,
        tilde_lambda=tilde_lambda,
        methods=tuple(methods),
        execution=execution,
        scenario=scenario,
        data=data,
        rates=rates,
    )


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON ({exc})") from None
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path} ({exc.strerror})") from None
    return parse_config(raw)


def dump_config(cfg: RunConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True)
