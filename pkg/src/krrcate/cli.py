"""Command-line entry point.

Exit codes: 0 success, 1 runtime failure (including a failed rate check),
2 invalid configuration or input.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import harness
from .config import ConfigError, RunConfig, load_config
from .dgp import DIMENSION, SPARSE_P
from .harness import HarnessError, IngestError
from .kernels import KernelError
from .krr import SolverError

log = logging.getLogger("krrcate")

EXIT_OK, EXIT_RUNTIME, EXIT_INVALID = 0, 1, 2


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    ex = cfg.execution
    if args.seed is not None:
        ex = replace(ex, seed=args.seed)
    if args.threads is not None:
        ex = replace(ex, threads=max(1, args.threads))
    return replace(cfg, execution=ex)


def _truncation(cfg: RunConfig, methods) -> float:
    """Configured B; only model selection needs it, so others get no clamp."""
    if cfg.truncation is not None:
        return cfg.truncation
    if "ours" in methods:
        raise ConfigError("selection.B", "truncation level is required for method 'ours'")
    return float("inf")


def cmd_simulate(cfg: RunConfig, out: Path) -> int:
    scenario = cfg.scenario_spec()
    ex = cfg.execution
    pipeline = cfg.pipeline(truncation=_truncation(cfg, cfg.methods))
    reports = harness.run_experiment(
        scenario, cfg.methods, ex.reps, ex.seed, pipeline, ex.threads, ex.test_size
    )
    harness.write_report_csv(out / "report.csv", reports, ex.record_runtime)
    if "ours" in cfg.methods:
        ours = next(r for r in reports if r.method == "ours")
        with open(out / "selections.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["rep", "seed", "selected"])
            for r, (seed, label) in enumerate(zip(ours.seeds, ours.selected)):
                writer.writerow([r, seed, label])
    title = f"{scenario.scenario}, sigma={scenario.sigma:g}, {ex.reps} runs"
    table = harness.markdown_table(reports)
    (out / "summary.md").write_text(f"## MSE ({title})\n\n{table}", encoding="utf-8")
    print(table, end="")
    return EXIT_OK


def cmd_fit(cfg: RunConfig, data_path: Path, out: Path) -> int:
    if cfg.data is None:
        raise ConfigError("data", "section is required for fit")
    cols = cfg.data
    ingested = harness.ingest_csv(data_path, cols.covariates, cols.treatment, cols.outcome)
    data = ingested.data
    # outcomes live in [0, 1] after rescaling
    B = cfg.truncation if cfg.truncation is not None else 2.0 * float(np.max(np.abs(data.Y)))
    pipeline = cfg.pipeline(truncation=B)
    predictor = harness.cross_fit_average(data, pipeline, cfg.execution.seed)

    with open(out / "selection.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["rotation", "candidate", "label", "proxy_risk", "chosen"])
        for r, rot in enumerate(predictor.rotations):
            if rot is None:
                continue
            for j, (cand, risk) in enumerate(zip(rot.candidates, rot.proxy_risks)):
                writer.writerow([r, j, cand.label, repr(float(risk)), int(j == rot.chosen)])
    selected = {
        "truncation_level": B,
        "rotations": [
            None
            if rot is None
            else {
                "chosen": rot.chosen,
                "label": rot.chosen_config.label,
                "kernel": rot.models[rot.chosen].spec.to_dict(),
                "failures": rot.failures,
            }
            for rot in predictor.rotations
        ],
        "rotation_errors": {str(k): v for k, v in predictor.errors.items()},
    }
    (out / "selected.json").write_text(json.dumps(selected, indent=2) + "\n", encoding="utf-8")

    cate = ingested.rescaling.unscale_cate(predictor.predict(data.X))
    with open(out / "predictions.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["row", "cate"])
        for i, v in enumerate(cate):
            writer.writerow([i, repr(float(v))])
    print(f"wrote {len(cate)} predictions to {out / 'predictions.csv'}")
    return EXIT_OK


def cmd_rates(cfg: RunConfig, out: Path) -> int:
    if cfg.rates is None:
        raise ConfigError("rates", "section is required for rates")
    rates = cfg.rates
    scenario = cfg.scenario_spec()
    ex = cfg.execution
    pipeline = cfg.pipeline(truncation=_truncation(cfg, [rates.method]))
    sweep = harness.rate_sweep(
        scenario, rates.method, rates.n_list, ex.reps, ex.seed, pipeline, ex.threads, ex.test_size
    )
    if rates.method == "flat":
        theory = 0.0
    else:
        gamma = rates.gamma if rates.gamma is not None else 2.0
        if rates.intrinsic_dim is not None:
            dim = rates.intrinsic_dim
        elif scenario.scenario == "multi_sparse":
            dim = SPARSE_P
        else:
            dim = DIMENSION[scenario.scenario]
        theory = harness.theoretical_exponent(gamma, dim)
    band = rates.slope_band or (theory - 0.3, theory + 0.3)
    passed = band[0] <= sweep.slope <= band[1]

    harness.write_report_csv(out / "report.csv", sweep.reports, ex.record_runtime)
    summary = {
        "n_list": list(sweep.n_list),
        "mean_mse": sweep.mean_mse,
        "fitted_slope": sweep.slope,
        "theoretical_exponent": theory,
        "slope_band": list(band),
        "passed": passed,
    }
    (out / "rates.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    print(
        f"fitted slope {sweep.slope:.4f}  theoretical {theory:.4f}  "
        f"band [{band[0]:.3f}, {band[1]:.3f}]  {'PASS' if passed else 'FAIL'}"
    )
    return EXIT_OK if passed else EXIT_RUNTIME


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="krrcate", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, type=Path)
    common.add_argument("--out", required=True, type=Path)
    common.add_argument("--seed", type=int, default=None, help="override execution.seed")
    common.add_argument("--threads", type=int, default=None, help="worker processes")

    sub.add_parser("simulate", parents=[common], help="Monte Carlo comparison on synthetic data")
    fit = sub.add_parser("fit", parents=[common], help="cross-fitted CATE on a CSV file")
    fit.add_argument("--data", required=True, type=Path)
    sub.add_parser("rates", parents=[common], help="log-log convergence slope")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.ERROR,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = _apply_overrides(load_config(args.config), args)
        args.out.mkdir(parents=True, exist_ok=True)
        if args.command == "simulate":
            return cmd_simulate(cfg, args.out)
        if args.command == "fit":
            return cmd_fit(cfg, args.data, args.out)
        return cmd_rates(cfg, args.out)
    except (ConfigError, IngestError, KernelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (HarnessError, SolverError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
