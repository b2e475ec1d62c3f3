import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zoomtower.errors import SignalBelowNoise
from zoomtower.maps import DoublingFamilyMap, LinearExpandingMap
from zoomtower.stats import (
    correlation_decay,
    lebesgue_sampler,
    lyapunov_exponents,
    observable,
    substep_classes,
    tail_decay_fit,
    tower_sampler,
)
from zoomtower.tower import make_weights, sample_mu_a


def test_lyapunov_linear_oracle():
    f = LinearExpandingMap([[3, 1], [1, 2]])
    # the frame needs a few steps to align, so the bias is O(1 / n_iterates)
    est = lyapunov_exponents(f, lebesgue_sampler(2), 2000, 20, 0)
    want = sorted(np.log(np.abs(np.linalg.eigvals([[3, 1], [1, 2]]))), reverse=True)
    assert est.exponents == pytest.approx(want, rel=1e-3)
    assert sum(est.exponents) == pytest.approx(math.log(5), rel=1e-9)
    assert est.log_det_average == pytest.approx(math.log(5))


def test_lyapunov_doubling_is_log2():
    est = lyapunov_exponents(DoublingFamilyMap(2), lebesgue_sampler(1), 1000, 50, 1)
    assert est.exponents[0] == pytest.approx(math.log(2), rel=1e-12)


def test_lyapunov_sum_matches_log_det():
    f = DoublingFamilyMap(3, site=0.3, radius=0.2, strength=1.5)
    est = lyapunov_exponents(f, lebesgue_sampler(1), 500, 100, 2)
    assert est.exponents[0] == pytest.approx(est.log_det_average)


def test_lebesgue_correlations_match_analytic():
    # for psi = phi = x - 1/2 under doubling, C(k) = 2^-k / 12
    curve = correlation_decay(DoublingFamilyMap(2), lebesgue_sampler(1), observable("centered"), observable("centered"), 12, 400_000, 3)
    for k in range(6):
        assert curve.correlations[k] == pytest.approx(2.0**-k / 12, abs=4 * curve.errors[k])
    assert curve.fit["slope"] == pytest.approx(-math.log(2), rel=0.1)


def test_pure_noise_raises_signal_below_noise():
    rng_map = DoublingFamilyMap(2)
    # cos 2 pi x is uncorrelated with cos 2 pi 2^k x under Lebesgue for k >= 1
    with pytest.raises(SignalBelowNoise) as e:
        correlation_decay(rng_map, lebesgue_sampler(1), observable("cos2pi"), observable("cos2pi"), 10, 20_000, 4)
    assert e.value.curve is not None


def test_unknown_observable():
    with pytest.raises(ValueError):
        observable("nope")


def test_tail_fit_geometric_is_exact(doubling_induced, doubling_weights):
    fit = tail_decay_fit(doubling_induced, doubling_weights)
    assert fit.r2 > 0.99
    assert fit.tails[0] == pytest.approx(1.0)
    # nu(R >= n) for truncated geometric masses theta^k
    assert fit.tails[1] == pytest.approx(sum(0.5**k for k in range(2, 9)) / sum(0.5**k for k in range(1, 9)))


def test_tail_fit_degenerate(doubling_induced, doubling_weights):
    fit = tail_decay_fit(doubling_induced, doubling_weights, n_max=2)
    assert fit.degenerate and math.isnan(fit.r2)


@settings(max_examples=10, deadline=None)
@given(st.floats(0.1, 0.9))
def test_tail_matches_truncated_geometric(doubling_induced, theta):
    fit = tail_decay_fit(doubling_induced, make_weights(doubling_induced, "geometric", theta))
    want = [(theta**n - theta**9) / (theta - theta**9) for n in fit.ns]
    assert fit.tails == pytest.approx(want, rel=1e-12)


def test_mu_a_correlations_decay(doubling_tower):
    f = doubling_tower.induced.f
    cos = observable("cos2pi")
    curve = correlation_decay(f, tower_sampler(doubling_tower), cos, cos, 40, 200_000, 20240601)
    assert curve.fit["slope"] < 0 and curve.fit["r2"] > 0.9


def test_substep_classes_explain_plateau(doubling_tower):
    x, info = sample_mu_a(doubling_tower, 100_000, 2, return_info=True)
    res = substep_classes(doubling_tower.induced.f, observable("cos2pi"), x, info["offsets"], 6, 12)
    assert sum(res["class_weights"]) == pytest.approx(1.0)
    assert res["periodic_component"][0] == pytest.approx(res["periodic_component"][6])
    assert res["amplitude"] > 0
