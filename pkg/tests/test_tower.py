import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zoomtower.errors import BadParam, UnknownCell
from zoomtower.tower import (
    TowerMeasure,
    cylinder_consistency,
    cylinder_measure,
    integrate,
    kac_chi_square,
    make_weights,
    sample_mu_a,
)


def test_geometric_level_masses(doubling_induced, doubling_weights):
    R = doubling_induced.return_times
    a = doubling_weights.a
    levels = np.unique(R)
    mass = np.array([a[R == k].sum() for k in levels])
    want = 0.5 ** levels / np.sum(0.5 ** levels)
    assert mass == pytest.approx(want, rel=1e-12)
    assert math.fsum(a.tolist()) == pytest.approx(1.0, abs=1e-15)
    assert doubling_weights.descriptor["covered_mass"] == pytest.approx(1 - 2.0**-8)


def test_uniform_weights(doubling_induced):
    w = make_weights(doubling_induced, "uniform", None)
    assert np.allclose(w.a, 1 / len(doubling_induced.cells))


@pytest.mark.parametrize("family,param", [("geometric", 1.0), ("geometric", 0.0), ("zipf", 0.5)])
def test_bad_weights(doubling_induced, family, param):
    with pytest.raises(BadParam):
        make_weights(doubling_induced, family, param)


def test_cylinder_measure_is_product(doubling_weights):
    a = doubling_weights.a
    assert cylinder_measure(doubling_weights, [0, 3, 3]) == pytest.approx(a[0] * a[3] ** 2)
    with pytest.raises(UnknownCell):
        cylinder_measure(doubling_weights, [len(a)])


def test_cylinder_consistency_exact(doubling_weights):
    res = cylinder_consistency(doubling_weights, 3)
    assert res["additivity_residual"] <= 1e-14
    assert res["invariance_residual"] <= 1e-14
    assert res["total_mass_residual"] <= 1e-14


@settings(max_examples=20, deadline=None)
@given(st.floats(0.05, 0.95))
def test_geometric_weights_any_theta(doubling_induced, theta):
    w = make_weights(doubling_induced, "geometric", theta)
    assert np.all(w.a > 0)
    assert math.fsum(w.a.tolist()) == pytest.approx(1.0, abs=1e-14)
    assert cylinder_consistency(w, 2, n_cylinders=50)["additivity_residual"] <= 1e-14


def test_sampler_deterministic_and_thread_independent(doubling_tower):
    x1 = sample_mu_a(doubling_tower, 5000, 7, chunk=1000)
    x2 = sample_mu_a(doubling_tower, 5000, 7, chunk=1000, threads=4)
    assert np.array_equal(x1, x2)
    assert not np.array_equal(x1, sample_mu_a(doubling_tower, 5000, 8, chunk=1000))
    assert np.all((0 <= x1) & (x1 < 1))


def test_kac_marginal(doubling_tower):
    _, info = sample_mu_a(doubling_tower, 100_000, 11, return_info=True)
    kac = kac_chi_square(doubling_tower, info["cells"])
    assert kac["p_value"] > 0.01
    R = doubling_tower.induced.return_times
    assert np.all(info["offsets"] < 6 * R[info["cells"]])


def test_sampled_points_start_in_their_cells(doubling_tower):
    x, info = sample_mu_a(doubling_tower, 2000, 3, return_info=True)
    at_start = info["offsets"] == 0
    cells = doubling_tower.induced.cells
    for xi, cid in zip(x[at_start], info["cells"][at_start]):
        c = cells[cid]
        assert abs(((xi[0] - c.center[0] + 0.5) % 1) - 0.5) <= c.radius * (1 + 1e-9)


def test_mu_a_is_invariant(doubling_tower):
    x = sample_mu_a(doubling_tower, 400_000, 5)
    f = doubling_tower.induced.f
    d = np.cos(2 * np.pi * f.evaluate(x)[:, 0]) - np.cos(2 * np.pi * x[:, 0])
    assert abs(d.mean()) < 4 * d.std() / math.sqrt(len(d))


def test_integrate_constant(doubling_tower):
    est, se = integrate(doubling_tower, lambda x: np.ones(len(x)), 1000, 0)
    assert est == 1.0 and se == 0.0


def test_cascade_depth_zero_is_allowed(doubling_weights, doubling_induced):
    m = TowerMeasure(doubling_weights, doubling_induced, 0)
    assert sample_mu_a(m, 100, 0).shape == (100, 1)
