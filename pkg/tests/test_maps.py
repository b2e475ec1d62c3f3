from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zoomtower.errors import ConstraintViolation
from zoomtower.maps import (
    DoublingFamilyMap,
    LinearExpandingMap,
    PowerMap,
    build_perturbed_example,
    derivative_cocycle,
    exact_orbit,
    map_from_dict,
    volume_expansion,
)
from zoomtower.torus import torus_distance

unit = st.floats(0, 1, exclude_max=True, allow_nan=False)


@pytest.fixture(scope="module")
def example():
    return build_perturbed_example(grid_resolution=128)


@pytest.fixture(scope="module")
def cat():
    return LinearExpandingMap([[3, 1], [1, 2]])


def test_doubling_oracle():
    f = DoublingFamilyMap(2)
    assert f.evaluate(np.array([0.3]))[0] == pytest.approx(0.6)
    assert f.evaluate(np.array([0.75]))[0] == pytest.approx(0.5)
    pre = np.sort(f.inverse_branches(np.array([0.3]))[:, 0])
    assert pre == pytest.approx([0.15, 0.65])
    assert f.degree == 2


def test_degree_is_abs_det(cat):
    assert cat.degree == 5
    assert DoublingFamilyMap(3).degree == 3


def test_non_expanding_matrix_rejected():
    with pytest.raises(ValueError):
        LinearExpandingMap([[2, 1], [1, 2]])


def test_perturbation_creating_critical_point_rejected():
    with pytest.raises(ConstraintViolation):
        DoublingFamilyMap(2, strength=-3.0)


@settings(max_examples=40, deadline=None)
@given(st.lists(unit, min_size=2, max_size=2))
def test_inverse_branches_are_preimages(cat, y):
    y = np.array(y)
    pre = cat.inverse_branches(y)
    assert pre.shape == (5, 2)
    assert np.all(torus_distance(cat.evaluate(pre), y) < 1e-10)
    d = torus_distance(pre[:, None], pre[None])
    assert np.min(d[np.triu_indices(5, 1)]) > 1e-3


@settings(max_examples=40, deadline=None)
@given(st.lists(unit, min_size=2, max_size=2))
def test_perturbed_inverse_branches(example, y):
    y = np.array(y)
    pre = example.inverse_branches(y)
    assert pre.shape == (16, 2)
    assert np.all(torus_distance(example.evaluate(pre), y) < 1e-9)


@settings(max_examples=30, deadline=None)
@given(st.lists(unit, min_size=2, max_size=2), st.floats(-1e-4, 1e-4), st.floats(-1e-4, 1e-4))
def test_local_inverse_follows_anchor(example, x, dx, dy):
    x = np.array(x)
    z = example.evaluate(x[None])[0] + [dx, dy]
    w, ok = example.local_inverse(z, x)
    assert ok
    assert torus_distance(w, x) < 1e-3
    assert torus_distance(example.evaluate(w[None])[0], z) < 1e-10


@settings(max_examples=30, deadline=None)
@given(st.lists(unit, min_size=2, max_size=2))
def test_derivative_matches_finite_differences(example, x):
    x = np.array(x)
    h = 1e-6
    J = example.derivative(x[None])[0]
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        fd = (example.lift((x + e)[None])[0] - example.lift((x - e)[None])[0]) / (2 * h)
        assert fd == pytest.approx(J[:, k], abs=1e-5)


def test_cocycle_chain_rule(example):
    x = np.array([[0.2, 0.7], [0.31, 0.36]])
    M5 = derivative_cocycle(example, x, 5)
    M2 = derivative_cocycle(example, x, 2)
    M3 = derivative_cocycle(example, example.iterate(x, 2), 3)
    assert np.allclose(M5, M3 @ M2)


def test_cocycle_log_scale_does_not_overflow():
    f = DoublingFamilyMap(2)
    M, s = derivative_cocycle(f, np.array([0.1]), 2000, log_scale=True)
    assert np.log(abs(M[0, 0])) + s == pytest.approx(2000 * np.log(2))


def test_power_map_agrees_with_iterate(example):
    g = PowerMap(example, 3)
    x = np.array([[0.1, 0.8]])
    assert np.allclose(g.evaluate(x), example.iterate(x, 3))
    assert g.degree == 16**3


def test_exact_orbit_keeps_precision():
    f = DoublingFamilyMap(2)
    orb = exact_orbit(f, [Fraction(1, 3)], 200)
    assert np.allclose(orb[:, 0], [1 / 3, 2 / 3] * 100 + [1 / 3])


def test_example_reference_constraints(example):
    assert example.sigma > 1
    assert volume_expansion(example, 128) == pytest.approx(example.sigma)
    with pytest.raises(ConstraintViolation):
        build_perturbed_example({"p": [0.3, 0.3]}, grid_resolution=32)
    with pytest.raises(ConstraintViolation):
        build_perturbed_example({"pitchfork_strength": 3.99, "cubic": 0.0}, grid_resolution=256)


def test_map_dict_round_trip(example):
    for f in (DoublingFamilyMap(3, site=0.2, radius=0.05, strength=0.5), LinearExpandingMap([[3, 1], [1, 2]]), example, PowerMap(DoublingFamilyMap(2), 4)):
        g = map_from_dict(f.to_dict())
        x = np.random.default_rng(0).random((20, f.dim))
        assert np.allclose(g.evaluate(x), f.evaluate(x))


def test_exact_orbit_from_high_precision_start():
    import mpmath

    with mpmath.workprec(400):
        x = mpmath.sqrt(2) - 1
        orb = exact_orbit(DoublingFamilyMap(2), [x], 300)
        want = float(mpmath.frac(x * mpmath.mpf(2) ** 300))
    # the float orbit collapses to 0 after ~53 steps; the exact one does not
    assert orb[-1, 0] == pytest.approx(want, abs=1e-12)
    assert orb[-1, 0] != 0.0
