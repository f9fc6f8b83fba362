import importlib

import numpy as np
import pytest

from coalition_forge import _kernels_py, kernels
from coalition_forge.pareto import _penalty, _stack_moments, simplex_grid

compiled = pytest.importorskip("coalition_forge._kernels")


@pytest.fixture(scope="module")
def problem(small_network):
    clients = list(small_network)
    grams, rhs = _stack_moments(clients)
    W = np.ascontiguousarray(simplex_grid(len(clients), 6))
    pen = _penalty(clients[0].n_features, 1e-6, True)
    return grams, rhs, W, pen, clients[0].validation.moments


def test_solve_batch_agrees(problem):
    grams, rhs, W, pen, _ = problem
    a = compiled.solve_batch(grams, rhs, W, pen)
    b = _kernels_py.solve_batch(grams, rhs, W, pen)
    np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-11)


def test_loss_batch_agrees(problem):
    grams, rhs, W, pen, (vg, vr, vc) = problem
    a = compiled.quadratic_loss_batch(grams, rhs, W, pen, vg, vr, vc)
    b = _kernels_py.quadratic_loss_batch(grams, rhs, W, pen, vg, vr, vc)
    np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-13)


@pytest.mark.parametrize("mod", [compiled, _kernels_py])
def test_singular_rows_are_nan(mod):
    grams = np.zeros((1, 3, 3))
    rhs = np.zeros((1, 3))
    out = mod.solve_batch(grams, rhs, np.ones((1, 1)), np.zeros(3))
    assert np.all(np.isnan(out))


def test_fallback_selected_by_env(monkeypatch):
    monkeypatch.setenv("COALITION_FORGE_PURE", "1")
    mod = importlib.reload(kernels)
    try:
        assert mod.BACKEND == "python"
    finally:
        monkeypatch.delenv("COALITION_FORGE_PURE")
        importlib.reload(kernels)
    assert kernels.BACKEND == "cython"
