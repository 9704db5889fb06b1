import math

import numpy as np
import pytest

from conftest import toy_dataset
from krrcate.dgp import ScenarioSpec
from krrcate.harness import (
    CrossFitPredictor,
    HarnessError,
    IngestError,
    PipelineConfig,
    cross_fit_average,
    effective_dimension,
    fit_loglog_slope,
    ingest_csv,
    lambda_from_rule,
    markdown_table,
    default_pipeline,
    rate_sweep,
    run_experiment,
    summarize,
    theoretical_exponent,
    write_report_csv,
)
from krrcate.kernels import KernelSpec
from krrcate.selection import SelectionResult, select, split_indices

SMALL = PipelineConfig(
    nuisance=KernelSpec("sobolev", 1),
    candidate_kernels=(KernelSpec("sobolev", 2),),
    dr_stage2=KernelSpec("sobolev", 2),
    truncation=4.0,
    grid_size=4,
)


def test_lambda_rules():
    assert lambda_from_rule("0.01/n", 100) == pytest.approx(1e-4)
    assert lambda_from_rule("log(n)/n", 100) == pytest.approx(math.log(100) / 100)
    assert lambda_from_rule(0.5, 100) == 0.5
    with pytest.raises(ValueError):
        lambda_from_rule(-1.0, 100)


def test_summarize():
    assert summarize([0.3]) == (0.3, 0.0)
    mean, se = summarize([1.0, 2.0, 3.0])
    assert mean == 2.0 and se == pytest.approx(1 / math.sqrt(3))


def test_single_rep_has_zero_se():
    (rep,) = run_experiment(ScenarioSpec("univariate", 60), ["ours"], 1, 0, SMALL, test_size=200)
    assert rep.se_mean == 0.0
    assert rep.per_rep_mse[0] >= 0 and math.isfinite(rep.per_rep_mse[0])


def test_paired_seeds_and_determinism_across_workers():
    spec = ScenarioSpec("univariate", 60)
    methods = ["ours", "plugin", "dr", "flat"]
    a = run_experiment(spec, methods, 3, 10, SMALL, workers=1, test_size=200)
    b = run_experiment(spec, methods, 3, 10, SMALL, workers=2, test_size=200)
    for ra, rb in zip(a, b):
        assert ra.seeds == [10, 11, 12]
        assert ra.per_rep_mse == rb.per_rep_mse
        assert ra.selected == rb.selected


def test_unknown_method_and_bad_reps():
    spec = ScenarioSpec("univariate", 60)
    with pytest.raises(ValueError, match="unknown method"):
        run_experiment(spec, ["lasso"], 1, 0, SMALL)
    with pytest.raises(ValueError, match="reps"):
        run_experiment(spec, ["ours"], 0, 0, SMALL)


def test_failures_over_threshold_abort():
    # a subset kernel on a coordinate the univariate data lacks fails every rep
    bad = PipelineConfig(
        nuisance=KernelSpec("sobolev", 1),
        candidate_kernels=(KernelSpec("sobolev", 2),),
        dr_stage2=KernelSpec("rbf", 1, 1.0, (3,)),
        truncation=4.0,
        grid_size=2,
    )
    with pytest.raises(HarnessError, match="dr"):
        run_experiment(ScenarioSpec("univariate", 60), ["dr"], 2, 0, bad, test_size=50)


def test_theoretical_exponent():
    assert theoretical_exponent(2, 1) == pytest.approx(-0.8)


def test_loglog_slope_exact_power_law():
    ns = [100, 200, 400, 800]
    slope, _ = fit_loglog_slope(ns, [3.0 * n**-0.7 for n in ns])
    assert slope == pytest.approx(-0.7, abs=1e-12)
    with pytest.raises(HarnessError):
        fit_loglog_slope(ns, [1.0, 0.0, 1.0, 1.0])


def test_flat_method_slope_is_zero():
    sweep = rate_sweep(ScenarioSpec("univariate", 50), "flat", [50, 100, 200], 2, 0, SMALL, test_size=500)
    assert abs(sweep.slope) <= 0.1


def test_rate_sweep_needs_three_increasing_sizes():
    with pytest.raises(ValueError, match="at least 3"):
        rate_sweep(ScenarioSpec("univariate", 50), "flat", [50, 100], 1, 0, SMALL)
    with pytest.raises(ValueError):
        rate_sweep(ScenarioSpec("univariate", 50), "flat", [50, 200, 100], 1, 0, SMALL)


def test_effective_dimension_identity():
    n = 12
    assert effective_dimension(n * np.eye(n), 1.0) == pytest.approx(n / 2)
    assert effective_dimension(n * np.eye(n), 1e15) < 1e-12


def test_effective_dimension_finite_rank(rng):
    n, D = 40, 5
    U = rng.normal(size=(n, D))
    G = U @ U.T
    # lambda well above eigenvalue roundoff (about 1e-16 each) but far below the nonzero spectrum
    assert effective_dimension(G, 1e-7) == pytest.approx(D, abs=1e-6)


def test_effective_dimension_monotone_and_rank_bounded(rng):
    for _ in range(10):
        n = int(rng.integers(5, 100))
        D = int(rng.integers(1, n + 1))
        U = rng.normal(size=(n, D))
        G = U @ U.T
        vals = [effective_dimension(G, lam) for lam in np.logspace(-6, 3, 15)]
        assert all(b < a for a, b in zip(vals, vals[1:]))
        assert vals[0] <= np.linalg.matrix_rank(G) + 1e-9


def test_effective_dimension_rejects_bad_lambda():
    with pytest.raises(ValueError):
        effective_dimension(np.eye(3), 0.0)


def _write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def _rows(n, seed=0):
    r = np.random.default_rng(seed)
    lines = ["x1,x2,t,y"]
    for i in range(n):
        lines.append(f"{r.uniform(2, 4):.6f},{r.normal():.6f},{i % 2},{r.normal() * 5 + 10:.6f}")
    return "\n".join(lines) + "\n"


def test_ingest_affine_map(tmp_path):
    text = "x,t,y\n" + "".join(f"{2 + 2 * (i % 3) / 2},{i % 2},{i}\n" for i in range(12))
    ing = ingest_csv(_write(tmp_path, text), ["x"], "t", "y")
    # x column has min 2 and max 4
    np.testing.assert_allclose(ing.rescaling.scale_X([[3.0]]), [[0.5]])
    assert ing.data.X.min() == 0.0 and ing.data.X.max() == 1.0
    assert ing.data.Y.min() == 0.0 and ing.data.Y.max() == 1.0


def test_ingest_round_trip(tmp_path):
    ing = ingest_csv(_write(tmp_path, _rows(20)), ["x1", "x2"], "t", "y")
    np.testing.assert_allclose(ing.rescaling.unscale_y(ing.data.Y), ing.raw_Y, rtol=0, atol=1e-12)
    np.testing.assert_allclose(ing.rescaling.unscale_cate(ing.data.Y[:3] - ing.data.Y[3:6]),
                               ing.raw_Y[:3] - ing.raw_Y[3:6], atol=1e-12)


def test_ingest_train_rows_statistics(tmp_path):
    ing = ingest_csv(_write(tmp_path, _rows(20)), ["x1", "x2"], "t", "y", train_rows=range(10))
    assert ing.rescaling.y_min == ing.raw_Y[:10].min()


def test_ingest_bad_treatment_names_row(tmp_path):
    text = _rows(12).replace("\n", "\n", 1)
    lines = text.splitlines()
    parts = lines[4].split(",")
    parts[2] = "2"
    lines[4] = ",".join(parts)
    with pytest.raises(IngestError, match="row 4"):
        ingest_csv(_write(tmp_path, "\n".join(lines)), ["x1", "x2"], "t", "y")


@pytest.mark.parametrize(
    "text,match",
    [
        ("x1,t,y\n" + "1,0,2\n" * 12, "constant"),
        ("x1,t,y\n" + "".join(f"{i},{i % 2},3\n" for i in range(12)), "constant"),
        ("x1,t,y\n" + "".join(f"{i},{i % 2},{i}\n" for i in range(5)), "at least 10"),
        ("x1,t,y\n1,0,abc\n", "row 1"),
        ("a,b\n1,2\n", "not found"),
    ],
)
def test_ingest_errors(tmp_path, text, match):
    with pytest.raises(IngestError, match=match):
        ingest_csv(_write(tmp_path, text), ["x1"], "t", "y")


def test_ingest_missing_file(tmp_path):
    with pytest.raises(IngestError, match="cannot read"):
        ingest_csv(tmp_path / "nope.csv", ["x"], "t", "y")


class _Const:
    def __init__(self, c):
        self.c = c

    def predict(self, Xq):
        return np.full(len(Xq), self.c)


def test_cross_fit_average_arithmetic():
    X = np.zeros((4, 1))
    np.testing.assert_array_equal(CrossFitPredictor([_Const(2.0)] * 3).predict(X), np.full(4, 2.0))
    np.testing.assert_array_equal(
        CrossFitPredictor([_Const(0.0), _Const(3.0), _Const(6.0)]).predict(X), np.full(4, 3.0)
    )
    # a failed rotation is left out of the mean
    np.testing.assert_array_equal(CrossFitPredictor([_Const(1.0), None, _Const(3.0)], {1: "x"}).predict(X), np.full(4, 2.0))


def test_cross_fit_matches_independent_rotations():
    d = toy_dataset(60, seed=8)
    pipe = PipelineConfig(
        nuisance=KernelSpec("sobolev", 1),
        candidate_kernels=(KernelSpec("sobolev", 2), KernelSpec("sobolev", 1)),
        dr_stage2=KernelSpec("sobolev", 2),
        truncation=3.0,
        grid_size=3,
    )
    cf = cross_fit_average(d, pipe, seed=5)
    folds = [d.subset(i) for i in split_indices(60, 3, 5)]
    Xq = np.linspace(0, 1, 15)[:, None]
    preds = []
    for r in range(3):
        d1, d2, d3 = folds[r], folds[(r + 1) % 3], folds[(r + 2) % 3]
        res = select(pipe.candidates(60), d1, d2, d3, pipe.nuisance, 0.01 / d1.n, 0.01 / d2.n, 3.0)
        preds.append(res.predict(Xq))
    np.testing.assert_allclose(cf.predict(Xq), np.mean(preds, axis=0), rtol=1e-12)


def test_cross_fit_needs_nine_rows():
    with pytest.raises(ValueError):
        cross_fit_average(toy_dataset(8), SMALL, 0)


def test_report_csv_and_markdown(tmp_path):
    reps = run_experiment(ScenarioSpec("univariate", 60), ["ours", "plugin"], 2, 0, SMALL, test_size=100)
    path = tmp_path / "r.csv"
    write_report_csv(path, reps)
    lines = path.read_text().splitlines()
    assert lines[0] == "scenario,method,rep,seed,mse,runtime_sec"
    assert len(lines) == 5
    assert all(line.endswith(",") for line in lines[1:])
    write_report_csv(path, reps, record_runtime=True)
    assert not path.read_text().splitlines()[1].endswith(",")
    table = markdown_table(reps)
    assert table.splitlines()[0] == "| Method | n=60 |"
    assert "| Ours |" in table and "| Plug-in KRR |" in table


def test_default_pipeline_library():
    uni = default_pipeline("univariate")
    assert uni.truncation > 1.0
    assert len(uni.candidates(1000)) == 10
    sparse = default_pipeline("multi_sparse")
    assert len(sparse.candidates(1000)) == 60
    assert sum(k.active_coords == (0, 1, 2, 3) for k in sparse.candidate_kernels) == 3
    assert sparse.truncation > 0.3
