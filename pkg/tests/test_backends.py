"""Compiled and numpy Gram kernels must agree."""

import os
import subprocess
import sys

import numpy as np
import pytest

from conftest import BACKENDS
from krrcate import _backend, _gram_py
from krrcate.kernels import _sobolev_coefs


def _inputs(rng, unit):
    X1 = rng.uniform(size=(37, 3)) if unit else rng.normal(size=(37, 3))
    X2 = rng.uniform(size=(11, 3)) if unit else rng.normal(size=(11, 3))
    return X1, X2


def _call(mod, kind, X1, X2, symmetric):
    if kind == "matern15":
        return mod.matern_gram(X1, X2, 1.5, 0.9, symmetric)
    if kind == "matern25":
        return mod.matern_gram(X1, X2, 2.5, 1.3, symmetric)
    if kind == "rbf":
        return mod.rbf_gram(X1, X2, 0.7, symmetric)
    low, high = _sobolev_coefs(int(kind[-1]))
    return mod.sobolev_gram(X1, X2, low, high, symmetric)


KINDS = ["matern15", "matern25", "rbf", "sobolev1", "sobolev2", "sobolev3"]


@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("kind", KINDS)
def test_backend_agrees_with_numpy(backend, kind, rng):
    X1, X2 = _inputs(rng, kind.startswith("sobolev"))
    np.testing.assert_allclose(
        _call(backend, kind, X1, X2, False), _call(_gram_py, kind, X1, X2, False), rtol=1e-13, atol=1e-15
    )
    G = _call(backend, kind, X1, X1, True)
    np.testing.assert_array_equal(G, G.T)
    np.testing.assert_allclose(G, _call(_gram_py, kind, X1, X1, False), rtol=1e-13, atol=1e-15)


def test_backend_selected():
    assert _backend.BACKEND in ("compiled", "python")


def test_env_var_forces_fallback():
    code = "import krrcate; print(krrcate.BACKEND)"
    env = dict(os.environ, KRRCATE_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
