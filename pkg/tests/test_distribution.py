import math

import numpy as np
import pytest
from scipy.special import ndtr

from tiltmax.distribution import (
    FidiQuery,
    TooFewExceedances,
    empirical_fidi,
    gpd_recover_theta,
    hr_closed_form,
    hr_limit_dependent,
    hr_limit_independent,
    hr_model_neglog,
    neglog_fidi_infargmax,
    neglog_fidi_mc,
    stp_extract,
    to_frechet,
)
from tiltmax.grid import Grid
from tiltmax.randomness import new_stream
from tiltmax.simulate import FieldSample, simulate_fields
from tiltmax.spectral import MaskedSpectral, constant, fbm

Q2 = FidiQuery.of([0.0, 1.0], [0.0, 0.0])


def test_query_validation():
    with pytest.raises(ValueError):
        FidiQuery.of([0.0, 0.0], [0.0, 0.0])
    with pytest.raises(ValueError):
        FidiQuery.of([0.0, 1.0], [0.0])
    with pytest.raises(ValueError):
        FidiQuery.of([0.0], [-1.0], scale="frechet")


def test_mc_single_point_unit():
    r = neglog_fidi_mc(fbm(1.0), FidiQuery.of([1.0], [0.0]), 100_000, 1)
    assert r.within(1.0)


def test_mc_bivariate_hr():
    r = neglog_fidi_mc(fbm(1.0), Q2, 100_000, 2)
    assert r.within(2 * ndtr(0.5))


def test_mc_homogeneity_exact():
    a = neglog_fidi_mc(fbm(1.0), Q2, 5000, 3)
    for c in (-1.3, 0.0, 2.5):
        b = neglog_fidi_mc(fbm(1.0), Q2.shifted(c), 5000, 3)
        assert math.isclose(b.estimate, math.exp(-c) * a.estimate, rel_tol=1e-12)


def test_frechet_homogeneity():
    q = FidiQuery.of([0.0, 1.0], [1.0, 2.0], scale="frechet", alpha=1.0)
    a = neglog_fidi_mc(fbm(1.0), q, 5000, 4)
    b = neglog_fidi_mc(fbm(1.0), FidiQuery.of([0.0, 1.0], [3.0, 6.0], scale="frechet"), 5000, 4)
    assert math.isclose(b.estimate, a.estimate / 3.0, rel_tol=1e-12)


def test_infargmax_single_point():
    r = neglog_fidi_infargmax(fbm(1.0), FidiQuery.of([1.0], [0.7]), 100, 5)
    assert r.flags["psi"] == [1.0] and math.isclose(r.estimate, math.exp(-0.7))


def test_infargmax_agrees_with_mc():
    a = neglog_fidi_infargmax(fbm(1.0), Q2, 100_000, 6)
    b = neglog_fidi_mc(fbm(1.0), Q2, 100_000, 7)
    assert a.agrees(b)
    assert all(0.0 <= p <= 1.0 for p in a.flags["psi"])


def test_infargmax_stationary_shortcut():
    q = FidiQuery.of([0.0, 1.0, 2.0], [0.0, 0.5, -0.2])
    a = neglog_fidi_infargmax(fbm(1.0), q, 50_000, 8, shortcut=True)
    b = neglog_fidi_infargmax(fbm(1.0), q, 50_000, 9)
    assert a.agrees(b)


def test_infargmax_tie_rule_on_degenerate_model():
    # Z == 0: every index ties; the smallest argmax wins, so the argmax probabilities are (1, 0, 0)
    r = neglog_fidi_infargmax(constant(), FidiQuery.of([0.0, 1.0, 2.0], [0.0, 0.0, 0.0]), 10, 1)
    assert r.flags["psi"] == [1.0, 0.0, 0.0] and r.estimate == 1.0


def test_hr_closed_form_values():
    assert math.isclose(hr_closed_form(1.0, 0.0, 0.0), 1.3829249225480262, rel_tol=1e-14)
    assert math.isclose(hr_closed_form(4.0, 0.0, 0.0), 1.6826894921370859, rel_tol=1e-14)
    with pytest.raises(ValueError):
        hr_closed_form(0.0, 0.0, 0.0)


def test_hr_limits():
    assert math.isclose(hr_closed_form(1e6, 0.3, -0.2), hr_limit_independent(0.3, -0.2), rel_tol=1e-6)
    assert math.isclose(hr_closed_form(1e-10, 0.3, -0.2), hr_limit_dependent(0.3, -0.2), rel_tol=1e-6)


def test_hr_symmetric_and_decreasing():
    xs = np.linspace(-2, 2, 9)
    gammas = np.linspace(0.1, 8, 12)
    for g in gammas:
        for x in xs:
            for y in xs:
                assert math.isclose(hr_closed_form(g, x, y), hr_closed_form(g, y, x), rel_tol=1e-14)
    for x in xs:
        vals = [hr_closed_form(g, x, x) for g in gammas]
        # -log H increases with gamma, so H decreases
        assert np.all(np.diff(vals) > 0)


def test_hr_model_closed_form():
    assert math.isclose(hr_model_neglog(fbm(1.0, scale=4.0), Q2), 2 * ndtr(1.0), rel_tol=1e-14)


def test_empirical_fidi_examples():
    b = simulate_fields(fbm(1.0), Grid.from_values([0.0, 1.0]), 20_000, 10)
    r = empirical_fidi(b, Q2)
    assert r.probability.within(math.exp(-2 * ndtr(0.5)))
    big = empirical_fidi(b, FidiQuery.of([0.0, 1.0], [1e9, 1e9]))
    assert big.probability.estimate == 1.0
    single = empirical_fidi(b, FidiQuery.of([0.0], [0.0]))
    assert single.probability.within(math.exp(-1.0))


def test_empirical_fidi_zero_probability_flag():
    b = simulate_fields(fbm(1.0), Grid.from_values([0.0]), 50, 1)
    r = empirical_fidi(b, FidiQuery.of([0.0], [-1e9]))
    assert r.unbounded and math.isinf(r.neglog.estimate)


def test_empirical_needs_two_replicates():
    b = simulate_fields(fbm(1.0), Grid.from_values([0.0]), 1, 1)
    with pytest.raises(ValueError):
        empirical_fidi(b, FidiQuery.of([0.0], [0.0]))


def test_gpd_recovery():
    g = Grid.from_values([0.0, 1.0])
    b = simulate_fields(fbm(1.0), g, 100_000, 11)
    r = gpd_recover_theta(b, 0.0, math.log(100.0), 1.0, model=fbm(1.0))
    assert r.count >= 800
    assert r.theta_mean == -0.5 and r.theta_sd == 1.0
    assert r.ks_theta[1] > 0.005 and r.ks_exp[1] > 0.01


def test_gpd_masked_same_theta():
    g = Grid.from_values([0.0, 1.0])
    b = simulate_fields(MaskedSpectral(0.5, fbm(1.0)), g, 50_000, 12)
    r = gpd_recover_theta(b, 0.0, math.log(50.0), 1.0, model=MaskedSpectral(0.5, fbm(1.0)), min_count=200)
    assert r.theta_mean == -0.5 and r.ks_theta[1] > 0.005


def test_gpd_too_few():
    b = simulate_fields(fbm(1.0), Grid.from_values([0.0, 1.0]), 100, 1)
    with pytest.raises(TooFewExceedances, match="exceedances"):
        gpd_recover_theta(b, 0.0, 5.0, 1.0)


def test_to_frechet_and_stp():
    f = FieldSample(Grid.from_values([0.0]), np.array([0.0]), True)
    assert to_frechet(f, 1.0).values[0] == 1.0
    with pytest.raises(ValueError):
        to_frechet(np.zeros(1), 0.0)
    stp = stp_extract(fbm(1.0))
    s = stp.sample([[0.0], [1.0]], 100_000, new_stream(3))
    assert np.all(s[:, 0] == 1.0) and np.all(s >= 0)
    assert np.allclose(stp.mean([[1.0]]), 1.0)
    assert abs(s[:, 1].mean() - 1.0) < 3 * s[:, 1].std(ddof=1) / math.sqrt(s.shape[0])
