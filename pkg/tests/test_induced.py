"""Induced map of the doubling map against an exact oracle.

For ``x -> 2x`` with base ``(-r, r)`` around the fixed point 0, ``r = 1/64``
and block ``ell = 6``, the branches of ``f^(6k)`` are ``x -> (x + j)/64^k``.
A level-``k`` cell is therefore the interval of centre ``j/64^k`` and
half-width ``r/64^k``; it is a first-return cell iff it lies inside the base
and meets no cell of a shorter return time.
"""
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zoomtower.errors import BudgetExceeded, MarkovViolation, RadiusTooLarge
from zoomtower.induced import InducedMarkovMap, base_seeds, build_base, build_induced_map, certify_markov, return_time_tail
from zoomtower.maps import LinearExpandingMap
from zoomtower.orbits import find_periodic_points
from zoomtower.torus import torus_distance
from zoomtower.zooming import ZoomingContraction, compute_source_zooming_data

R_BASE = Fraction(1, 64)


def oracle_levels(max_level):
    """Exact first-return cells of levels ``1..max_level`` as sets of numerators ``j``."""
    claimed = []  # (lo, hi) as Fractions
    out = {}
    for k in range(1, max_level + 1):
        scale = Fraction(1, 64**k)
        hw = R_BASE * scale
        js = []
        jmax = int(R_BASE / scale) + 1
        for j in range(-jmax, jmax + 1):
            c = j * scale
            lo, hi = c - hw, c + hw
            if not (-R_BASE < lo and hi < R_BASE):
                continue
            if any(lo < b and a < hi for a, b in claimed):
                continue
            js.append(j)
        claimed += [(j * scale - hw, j * scale + hw) for j in js]
        out[k] = set(js)
    return out, claimed


def signed_center(cell):
    c = cell.center[0]
    return c - 1.0 if c > 0.5 else c


def test_oracle_sanity():
    levels, _ = oracle_levels(2)
    assert levels[1] == {0}
    assert levels[2] == set(range(-63, 64)) - {-1, 0, 1}


def test_low_levels_are_complete(doubling_induced):
    F = doubling_induced
    levels, _ = oracle_levels(2)
    assert F.report["exhaustive_levels"] == [1, 2]
    for k in (1, 2):
        cells = [c for c in F.cells if c.return_time == k]
        js = [signed_center(c) * 64**k for c in cells]
        assert np.allclose(js, np.round(js), atol=1e-12 * 64**k)
        assert set(int(round(j)) for j in js) == levels[k]


def test_every_cell_matches_an_oracle_interval(doubling_induced):
    F = doubling_induced
    _, low = oracle_levels(2)
    for cell in F.cells:
        k = cell.return_time
        c = signed_center(cell)
        j = round(c * 64**k)
        assert abs(c - j / 64**k) < 1e-12
        assert cell.radius == pytest.approx(float(R_BASE) / 64**k, abs=1e-12)
        d = (cell.boundary[:, 0] - c + 0.5) % 1 - 0.5
        lo, hi = c + d.min(), c + d.max()
        assert hi - lo == pytest.approx(2 * float(R_BASE) / 64**k, abs=1e-12)
        assert -float(R_BASE) < lo and hi < float(R_BASE)
        if k > 2:
            cl, ch = Fraction(j, 64**k) - R_BASE / 64**k, Fraction(j, 64**k) + R_BASE / 64**k
            assert not any(cl < b and a < ch for a, b in low)
        assert cell.derivative_bound == pytest.approx(64.0**k)


def test_cells_are_disjoint(doubling_induced):
    iv = sorted((signed_center(c) - c.radius, signed_center(c) + c.radius) for c in doubling_induced.cells)
    for (a, b), (c, d) in zip(iv[:-1], iv[1:]):
        assert b <= c


def test_markov_certificate(doubling_induced):
    cert = certify_markov(doubling_induced)
    assert cert["passed"]
    assert cert["max_step_residual"] < 1e-9
    assert cert["min_derivative_bound"] == pytest.approx(64.0)


def test_markov_certificate_detects_corruption(doubling_induced):
    F = InducedMarkovMap.from_dict(doubling_induced.to_dict())
    bad = F.cells[5]
    bad.boundary = bad.chain[0] + 0.5 * (bad.boundary - bad.chain[0])
    with pytest.raises(MarkovViolation):
        certify_markov(F)


def test_dict_round_trip(doubling_induced):
    G = InducedMarkovMap.from_dict(doubling_induced.to_dict())
    assert len(G.cells) == len(doubling_induced.cells)
    assert np.array_equal(G.return_times, doubling_induced.return_times)
    assert certify_markov(G)["passed"]


def test_return_time_tail(doubling_induced):
    assert return_time_tail(doubling_induced, 1) == pytest.approx(1.0)
    assert return_time_tail(doubling_induced, 100) == 0.0


def test_radius_must_be_below_quarter_delta(doubling, doubling_zooming):
    with pytest.raises(RadiusTooLarge):
        build_base(doubling, doubling_zooming, doubling_zooming.delta / 4)


def test_strict_budget(doubling, doubling_zooming):
    base = build_base(doubling, doubling_zooming, doubling_zooming.delta / 8)
    with pytest.raises(BudgetExceeded) as e:
        build_induced_map(doubling, base, ZoomingContraction(1 / 8), 8, cell_budget=50, strict_budget=True)
    assert e.value.largest_feasible == 1


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 5000))
def test_seeds_lie_in_base(doubling_induced, n):
    s = base_seeds(doubling_induced.base, n)
    assert len(s) == n
    assert np.all(torus_distance(s, doubling_induced.base.center.array()) < doubling_induced.base.r)


@pytest.mark.slow
def test_linear_2d_induced_map():
    f = LinearExpandingMap([[2, 1], [1, 3]])
    src = next(o for o in find_periodic_points(f, 1) if o.classification == "source")
    sd = compute_source_zooming_data(f, src)
    base = build_base(f, sd, sd.delta / 8)
    F = build_induced_map(f, base, ZoomingContraction(1 / 8), 3, n_seeds=8192)
    cert = certify_markov(F)
    assert cert["passed"] and cert["min_derivative_bound"] > 8
    # degree 5, ell 11: the backward tree is far too large to enumerate
    assert F.report["exhaustive_levels"] == []
    assert cert["degenerate_cells"] >= 0
