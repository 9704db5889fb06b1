import math

import numpy as np
import pytest

from conftest import toy_dataset
from krrcate.cate import Dataset, fit_nuisances, switch_impute
from krrcate.kernels import KernelSpec, cross_gram
from krrcate.krr import fit_masked, predict
from krrcate.selection import (
    CandidateConfig,
    build_proxies,
    model_select,
    select,
    split_indices,
    split_three,
    truncate,
)

F = KernelSpec("sobolev", 1)
H = KernelSpec("sobolev", 2)


@pytest.mark.parametrize("n,sizes", [(9, [3, 3, 3]), (10, [4, 3, 3]), (11, [4, 4, 3])])
def test_split_sizes(n, sizes):
    assert [len(p) for p in split_indices(n, 3, 0)] == sizes


def test_split_is_seeded_partition():
    a = split_indices(100, 3, 5)
    b = split_indices(100, 3, 5)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x, y)
    np.testing.assert_array_equal(np.sort(np.concatenate(a)), np.arange(100))
    assert not all(np.array_equal(x, y) for x, y in zip(a, split_indices(100, 3, 6)))


def test_split_three_requires_both_arms():
    d = Dataset(np.linspace(0, 1, 6)[:, None], np.array([1, 1, 1, 1, 1, 0]), np.zeros(6))
    with pytest.raises(ValueError, match="arm"):
        split_three(d, 0)


def test_truncate():
    v = np.array([-5.0, -1.0, 0.5, 3.0])
    t = truncate(v, 2.0)
    np.testing.assert_array_equal(t, [-2.0, -1.0, 0.5, 2.0])
    np.testing.assert_array_equal(truncate(t, 2.0), t)
    with pytest.raises(ValueError):
        truncate(v, 0.0)


def test_candidate_needs_positive_lambda():
    with pytest.raises(ValueError):
        CandidateConfig(H, 0.0)
    assert "lam=0.25" in CandidateConfig(H, 0.25).label


def test_proxy_oracle():
    d2 = toy_dataset(12, seed=1)
    d3 = toy_dataset(4, seed=2)
    tl = 0.01 / 12
    f0, f1 = fit_nuisances(d2, F, tl)
    mu0, mu1 = predict(f0, d3.X), predict(f1, d3.X)
    expected = np.where(d3.A == 1, d3.Y - mu0, mu1 - d3.Y)
    np.testing.assert_allclose(build_proxies(d2, d3, F, tl), expected, rtol=1e-12)
    # default tilde lambda is 0.01 / n2
    np.testing.assert_array_equal(build_proxies(d2, d3, F), build_proxies(d2, d3, F, tl))


def _exhaustive(cands, d1, d2, d3, B):
    f0, f1 = fit_nuisances(d1, F, 0.01 / d1.n)
    m = switch_impute(d1, f0, f1)
    prox = build_proxies(d2, d3, F)
    risks = []
    for c in cands:
        G = cross_gram(c.stage2_spec, d1.X, d1.X)
        alpha = np.linalg.solve(G + d1.n * c.lam * np.eye(d1.n), m)
        preds = np.clip(cross_gram(c.stage2_spec, d3.X, d1.X) @ alpha, -B, B)
        risks.append(np.mean((preds - prox) ** 2))
    return np.array(risks)


def test_select_matches_exhaustive_oracle():
    d1, d2, d3 = toy_dataset(30, seed=3), toy_dataset(30, seed=4), toy_dataset(30, seed=5)
    cands = [CandidateConfig(H, 1e-4), CandidateConfig(F, 1e-2), CandidateConfig(H, 1.0)]
    res = select(cands, d1, d2, d3, F, None, None, 2.0)
    oracle = _exhaustive(cands, d1, d2, d3, 2.0)
    np.testing.assert_allclose(res.proxy_risks, oracle, rtol=1e-7)
    assert res.chosen == int(np.argmin(oracle))


def test_single_candidate_always_chosen():
    d = toy_dataset(30)
    res = model_select(d, [CandidateConfig(H, 0.1)], F, 2.0, 0)
    assert res.chosen == 0


def test_duplicate_candidates_tie_to_first():
    d = toy_dataset(30)
    c = CandidateConfig(H, 0.1)
    res = model_select(d, [c, c], F, 2.0, 0)
    assert res.proxy_risks[0] == res.proxy_risks[1]
    assert res.chosen == 0


def test_chosen_predictions_are_truncated():
    d = toy_dataset(30)
    res = model_select(d, [CandidateConfig(H, 1e-6)], F, 0.05, 0)
    Xq = np.linspace(0, 1, 50)[:, None]
    assert np.abs(res.predict(Xq)).max() <= 0.05


def test_failed_candidate_gets_inf_risk():
    d = toy_dataset(30, d=2)
    bad = CandidateConfig(KernelSpec("rbf", 1, 1.0, (5,)), 0.1)
    res = model_select(d, [bad, CandidateConfig(KernelSpec("rbf", 1, 1.0), 0.1)], KernelSpec("rbf", 1, 1.0), 2.0, 0)
    assert math.isinf(res.proxy_risks[0])
    assert res.chosen == 1
    assert 0 in res.failures
    with pytest.raises(ValueError, match="failed"):
        res.predict_candidate(0, d.X)


def test_median_candidate_resolved_on_d1():
    d = toy_dataset(30, d=2, unit=False)
    d1, d2, d3 = split_three(d, 0)
    res = select([CandidateConfig(KernelSpec("matern", 1.5, "median"), 0.1)], d1, d2, d3,
                 KernelSpec("matern", 1.5, 1.0), None, None, 3.0)
    assert res.models[0].spec == KernelSpec("matern", 1.5, "median").resolve(d1.X)


def test_model_select_deterministic():
    d = toy_dataset(45)
    cands = [CandidateConfig(H, lam) for lam in (1e-3, 1e-2, 1e-1)]
    a = model_select(d, cands, F, 2.0, 9)
    b = model_select(d, cands, F, 2.0, 9)
    np.testing.assert_array_equal(a.proxy_risks, b.proxy_risks)
