from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zoomtower.errors import BudgetExceeded, OrbitEntersU0
from zoomtower.maps import DoublingFamilyMap, LinearExpandingMap, build_perturbed_example
from zoomtower.orbits import (
    arc_escape_falsifier,
    build_preorbit_tree,
    classify,
    find_periodic_points,
    forward_orbit_density,
    preorbit_density_certificate,
    verify_expanding_off_U0,
    verify_irg,
    verify_preimages_off_U1,
)
from zoomtower.torus import Ball, is_epsilon_dense, torus_distance


@pytest.fixture(scope="module")
def example():
    return build_perturbed_example(grid_resolution=128)


def test_classify():
    assert classify(np.diag([2.0, 3.0])) == "source"
    assert classify(np.diag([0.5, 3.0])) == "saddle"
    assert classify(np.diag([0.5, 0.2])) == "sink"
    assert classify(np.diag([1.0, 3.0])) == "nonhyperbolic"


@pytest.mark.parametrize("k", [1, 2, 3, 4, 5])
def test_doubling_periodic_points_match_oracle(k):
    # fixed points of x -> 2^k x are j / (2^k - 1)
    pts = find_periodic_points(DoublingFamilyMap(2), k)
    want = np.arange(2**k - 1) / (2**k - 1)
    got = np.sort([o.point.coords[0] for o in pts])
    assert got == pytest.approx(want, abs=1e-10)
    assert all(o.classification == "source" for o in pts)


def test_linear_fixed_points_count_equals_det_minus_identity():
    f = LinearExpandingMap([[3, 1], [1, 2]])
    # number of fixed points of a hyperbolic toral map is |det(E - I)|
    assert len(find_periodic_points(f, 1)) == round(abs(np.linalg.det(np.array([[2, 1], [1, 1]]))))


def test_example_fixed_points(example):
    pts = find_periodic_points(example, 1, 64)
    kinds = {}
    for o in pts:
        kinds.setdefault(o.classification, []).append(o)
    p = min(pts, key=lambda o: torus_distance(o.point.array(), example.p.array()))
    assert p.classification == "saddle"
    moduli = sorted(np.abs(p.eigenvalues))
    assert moduli[0] < 1 < moduli[1]
    for r in example.pitchfork_repellers():
        o = min(pts, key=lambda o: torus_distance(o.point.array(), r.array()))
        assert torus_distance(o.point.array(), r.array()) < 1e-9
        assert o.classification == "source"
    q = min(pts, key=lambda o: torus_distance(o.point.array(), example.q_list[0].array()))
    ev = q.eigenvalues
    assert np.all(np.abs(ev.imag) > 1e-6)
    assert np.abs(ev) == pytest.approx([4, 4])


def test_forward_density_exact_vs_float():
    f = DoublingFamilyMap(2)
    # 1/3 is periodic, so its orbit is never 0.1-dense
    assert forward_orbit_density(f, [Fraction(1, 3)], 100, 0.1) == (False, None)
    dense, n = forward_orbit_density(f, [np.sqrt(2) - 1], 40, 0.1)
    assert dense and n <= 40


def test_preorbit_tree_levels():
    f = DoublingFamilyMap(2)
    t = build_preorbit_tree(f, [0.0], 5)
    assert [len(t.level(j)) for j in range(1, 6)] == [2, 4, 8, 16, 32]
    assert np.sort(t.level(3)[:, 0]) == pytest.approx(np.arange(8) / 8)
    with pytest.raises(BudgetExceeded) as e:
        build_preorbit_tree(f, [0.0], 30, node_budget=1000)
    assert e.value.largest_feasible == 9


def test_doubling_preorbit_density_depth():
    # level-d pre-images of 0 are the dyadics j/2^d; eps-density needs 2^-(d+1) < eps
    cert = preorbit_density_certificate(DoublingFamilyMap(2), [0.0], 2**-9, 12)
    assert cert.certified
    assert cert.depth_used == 9
    assert not preorbit_density_certificate(DoublingFamilyMap(2), [0.0], 2**-9, 8).certified


@settings(max_examples=15, deadline=None)
@given(st.floats(0.02, 0.3), st.floats(1.0, 2.0))
def test_preorbit_certificate_monotone_in_eps(eps, factor):
    f = DoublingFamilyMap(3)
    c1 = preorbit_density_certificate(f, [0.2], eps, 8, cell_size=0.005)
    c2 = preorbit_density_certificate(f, [0.2], eps * factor, 8, cell_size=0.005)
    if c1.certified:
        assert c2.certified and c2.depth_used <= c1.depth_used


def test_preorbit_certificate_is_sound(example):
    cert = preorbit_density_certificate(example, example.pitchfork_repellers()[0].array(), 0.05, 12)
    assert cert.certified and cert.depth_used <= 12
    assert cert.n_points > 0


def test_expanding_off_U0(example):
    ok, mn = verify_expanding_off_U0(example, example.U0, 128)
    assert ok and mn > 1
    ok_all, mn_all = verify_expanding_off_U0(example, None, 128)
    assert not ok_all and mn_all < 1


def test_irg_doubling():
    ok, N = verify_irg(DoublingFamilyMap(2), [1 / 3], 20, 0.01, 0.2)
    # 2^-N * 0.2 < 0.01 first holds at N = 5
    assert ok and N == 5


def test_irg_refuses_orbit_through_U0(example):
    with pytest.raises(OrbitEntersU0):
        verify_irg(example, example.p.array(), 5, 0.01, 0.1, example.U0)


def test_preimages_off_U1_and_arc_escape(example):
    U1 = Ball(example.U0.center, 1.1 * example.U0.radius)
    ok, margin = verify_preimages_off_U1(example, U1, 64)
    assert ok and margin > 0
    res = arc_escape_falsifier(example, U1, 0.15, n_arcs=8, points_per_arc=128, horizon=8, seed=3, U0=example.U0)
    assert res["passed"] and res["arcs"] == 8


def test_random_orbits_of_doubling_are_dense():
    pts = np.random.default_rng(1).random((2000, 1))
    assert is_epsilon_dense(pts, 0.01)
