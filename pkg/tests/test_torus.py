import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zoomtower.torus import Ball, TorusPoint, is_epsilon_dense, reduce, torus_distance, wrap

coords = st.floats(-50, 50, allow_nan=False)
pairs = st.lists(coords, min_size=2, max_size=2)


def test_distance_oracle_values():
    assert torus_distance([0.05], [0.95]) == pytest.approx(0.1)
    assert torus_distance([0.0, 0.0], [0.5, 0.5]) == pytest.approx(np.sqrt(0.5))
    assert torus_distance([0.25], [0.25 + 3]) == 0.0


def test_reduce_never_returns_one():
    x = reduce([-1e-18, -0.0, 1.0, 2.5])
    assert np.all((0 <= x) & (x < 1))
    assert x[0] == 0.0


@given(pairs, pairs, pairs)
def test_metric_axioms(x, y, z):
    dxy = torus_distance(x, y)
    assert dxy >= 0
    assert dxy == pytest.approx(torus_distance(y, x), abs=1e-12)
    assert dxy <= torus_distance(x, z) + torus_distance(z, y) + 1e-9
    assert dxy <= np.sqrt(2) / 2 + 1e-12


@given(pairs, st.integers(-5, 5), st.integers(-5, 5))
def test_distance_invariant_under_integer_translation(x, a, b):
    y = np.asarray(x) + [a, b]
    assert torus_distance(x, y) < 1e-9


@given(st.floats(-100, 100, allow_nan=False))
def test_wrap_range(d):
    w = wrap(d)
    assert -0.5 <= w < 0.5


def test_point_and_ball():
    p = TorusPoint([1.25, -0.25])
    assert p.coords == (0.25, 0.75)
    b = Ball(p, 0.1)
    assert b.contains([0.3, 0.75])
    assert not b.contains([0.36, 0.75])
    assert b.contains([0.35, 0.75], strict=False)
    with pytest.raises(ValueError):
        Ball(p, 0.5)


def test_density_oracles():
    grid = (np.arange(10) + 0.5) / 10
    assert is_epsilon_dense(grid[:, None], 0.051)
    assert not is_epsilon_dense(grid[:, None], 0.049)
    assert not is_epsilon_dense([[0.5, 0.5]], 0.5)
    g2 = np.stack(np.meshgrid(grid, grid), -1).reshape(-1, 2)
    assert is_epsilon_dense(g2, 0.0708)  # half-diagonal of a 0.1 cell is 0.0707
    assert not is_epsilon_dense(g2, 0.07)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0, 1, exclude_max=True), min_size=1, max_size=40), st.floats(0.01, 0.3), st.floats(1.0, 3.0))
def test_density_monotone_in_eps(xs, eps, factor):
    pts = np.array(xs)[:, None]
    if is_epsilon_dense(pts, eps):
        assert is_epsilon_dense(pts, eps * factor)
