import numpy as np
import pytest
from scipy.special import ndtr

from tiltmax.grid import Grid
from tiltmax.simulate import simulate_fields
from tiltmax.spectral import MaskedSpectral, constant, fbm, quadratic
from tiltmax.stationarity import (
    FUNCTIONALS,
    Functional,
    check_field_stationarity,
    check_theta_shift,
    check_tilt_shift_library,
    check_tilt_shift_mc,
    check_xi_shift_gaussian,
    functional_self_test,
)

G = Grid.from_values([0.0, 0.5, 1.0, 1.5, 2.0])


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5, 2.0])
@pytest.mark.parametrize("a, h", [(0.0, 1.0), (0.5, -0.5), (1.0, 0.25)])
def test_xi_shift_fbm_passes(alpha, a, h):
    r = check_xi_shift_gaussian(fbm(alpha), a, h, G)
    assert r.passed and r.discrepancy <= 1e-10


def test_xi_shift_quadratic_fails():
    r = check_xi_shift_gaussian(quadratic(), 0.0, 1.0, G)
    assert not r.passed and r.verdict == "fail"


def test_xi_shift_zero_shift_trivial():
    r = check_xi_shift_gaussian(quadratic(), 0.5, 0.0, G)
    assert r.passed and r.discrepancy == 0.0


def test_theta_shift_masked_same_as_unmasked():
    a = check_theta_shift(MaskedSpectral(0.5, fbm(1.0)), 0.0, 1.0, G)
    b = check_theta_shift(fbm(1.0), 0.0, 1.0, G)
    assert a.passed and b.passed and a.discrepancy == b.discrepancy


def test_theta_shift_controls():
    assert check_theta_shift(quadratic(), 1.0, 0.0, G).passed
    assert not check_theta_shift(quadratic(), 0.0, 1.0, G).passed


def test_theta_shift_ks_fallback():
    assert check_theta_shift(fbm(1.0), 0.0, 1.0, G, reps=5000, rng=1, method="ks").passed
    assert not check_theta_shift(quadratic(), 0.0, 1.0, G, reps=5000, rng=1, method="ks").passed


def test_library_is_shift_invariant():
    assert len(FUNCTIONALS) == 6
    for f in FUNCTIONALS.values():
        functional_self_test(f)


def test_non_invariant_functional_rejected():
    bad = Functional("level", (0,), lambda v: v[:, 0] <= 0.0)
    with pytest.raises(ValueError, match="shift-invariant"):
        check_tilt_shift_mc(fbm(1.0), bad, 0.0, 1.0, 100, 0)


def test_unit_functional():
    r = check_tilt_shift_mc(fbm(1.0), "unit", 0.0, 1.0, 1000, 1)
    assert r.passed and r.left.estimate == 1.0 and r.right.estimate == 1.0


def test_increment_functional_fbm_oracle():
    # under the tilt at 1 the increment f(1) - f(0) is N(1/2, 1), so every side is Phi(-1/2)
    r = check_tilt_shift_mc(fbm(1.0), "increment-back", 0.0, 1.0, 50_000, 2)
    assert r.passed
    for side in (r.left, r.middle, r.right):
        assert side.within(ndtr(-0.5))


def test_weighted_estimator_agrees():
    r = check_tilt_shift_mc(fbm(1.0), "increment-back", 0.0, 1.0, 50_000, 3, estimator="weight")
    assert r.passed


def test_quadratic_control_oracle_values():
    # left side P(3 xi - 9/2 <= 0) = Phi(3/2), right side P(xi - 1/2 <= 0) = Phi(1/2)
    r = check_tilt_shift_mc(quadratic(), "increment-forward", 0.0, 1.0, 50_000, 4)
    assert r.left.within(ndtr(1.5)) and r.right.within(ndtr(0.5))
    assert not r.passed


@pytest.mark.parametrize("a, h", [(0.0, 1.0), (0.5, 0.5), (1.0, 0.5)])
def test_library_verdicts(a, h):
    assert check_tilt_shift_library(fbm(1.0), a, h, 20_000, 5).passed
    assert not check_tilt_shift_library(quadratic(), a, h, 20_000, 5).passed


def test_masked_tilt_shift_passes():
    assert check_tilt_shift_library(MaskedSpectral(0.5, fbm(1.0)), 0.0, 1.0, 20_000, 6).passed


def test_field_stationarity_controls():
    g = Grid.from_values(np.arange(0.0, 3.01, 0.5))
    fb = simulate_fields(fbm(1.0), g, 4000, 7)
    qb = simulate_fields(quadratic(), g, 4000, 8)
    assert check_field_stationarity(fb, 1.0).passed
    assert not check_field_stationarity(qb, 1.0).passed
    zero = check_field_stationarity(qb, 0.0)
    assert zero.passed and zero.discrepancy == 0.0


def test_field_window_must_exist():
    fb = simulate_fields(constant(), Grid.from_values([0.0, 1.0]), 10, 1)
    with pytest.raises(ValueError):
        check_field_stationarity(fb, 5.0)


def test_report_serializes():
    d = check_tilt_shift_mc(fbm(1.0), "softmax-last", 0.0, 1.0, 1000, 1).to_dict()
    assert d["verdict"] in ("pass", "fail") and "estimate" in d["left"]
