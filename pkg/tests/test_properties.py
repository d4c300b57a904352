"""Property-based checks of exact algebraic invariants."""
import math

import numpy as np
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from tiltmax.distribution import FidiQuery, hr_closed_form, neglog_fidi_mc
from tiltmax.grid import Grid, LogPath, lag_shift, log_sum_exp
from tiltmax.pickands import ratio_of_path
from tiltmax.spectral import fbm, tilt_closed_form, xi_process
from tiltmax.stationarity import check_xi_shift_gaussian

finite = st.floats(-50, 50, allow_nan=False)
coord = st.integers(-20, 20).map(lambda k: k * 0.25)


@given(st.lists(finite, min_size=1, max_size=12), finite)
def test_log_sum_exp_shift(values, c):
    v = np.asarray(values)
    assert math.isclose(log_sum_exp(v + c) - c, log_sum_exp(v), rel_tol=1e-12, abs_tol=1e-10)


@given(st.lists(finite, min_size=2, max_size=10), st.integers(1, 3))
def test_lag_shift_round_trip(values, k):
    assume(len(values) > 2 * k)
    g = Grid.from_values(np.arange(len(values)) * 0.5, spacing=0.5)
    p = LogPath(g, values)
    h = k * 0.5
    back = lag_shift(lag_shift(p, [h]), [-h])
    for t in back.grid.points[:, 0]:
        assert back.at(t) == p.at(t)


@given(st.floats(0.05, 20), finite.filter(lambda x: abs(x) < 5), finite.filter(lambda x: abs(x) < 5))
def test_hr_symmetric_and_bounded(gamma, x, y):
    v = hr_closed_form(gamma, x, y)
    assert math.isclose(v, hr_closed_form(gamma, y, x), rel_tol=1e-13)
    # between complete dependence and independence
    assert math.exp(-min(x, y)) * (1 - 1e-12) <= v <= (math.exp(-x) + math.exp(-y)) * (1 + 1e-12)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.1, 2.0), coord, coord)
def test_fbm_xi_shift_always_passes(alpha, a, h):
    g = Grid.from_values([-1.0, 0.0, 0.5, 1.0, 2.0])
    assert check_xi_shift_gaussian(fbm(alpha), a, h, g).passed


@settings(max_examples=25, deadline=None)
@given(st.floats(0.1, 2.0), coord)
def test_tilt_covariance_bit_identical(alpha, h):
    m = fbm(alpha)
    pts = np.array([[-1.0], [0.0], [0.75], [2.0]])
    t = tilt_closed_form(m, [h])
    assert np.array_equal(t.covariance(pts), m.covariance(pts))
    assert np.array_equal(t.mean(pts), m.mean(pts) + m.covariance([[h]], pts)[0])


@settings(max_examples=25, deadline=None)
@given(st.floats(0.1, 2.0), coord)
def test_xi_zero_at_anchor(alpha, h):
    xi = xi_process(fbm(alpha), [h])
    assert xi.mean([[h]])[0] == 0.0 and xi.variance([[h]])[0] == 0.0


@settings(max_examples=20, deadline=None)
@given(st.floats(-3, 3), st.integers(0, 1000))
def test_fidi_homogeneity(c, seed):
    q = FidiQuery.of([0.0, 1.0, 2.0], [0.1, -0.2, 0.3])
    a = neglog_fidi_mc(fbm(1.0), q, 200, seed)
    b = neglog_fidi_mc(fbm(1.0), q.shifted(c), 200, seed)
    assert math.isclose(b.estimate, math.exp(-c) * a.estimate, rel_tol=1e-12)


@given(st.lists(finite, min_size=1, max_size=20), st.floats(0.05, 2.0))
def test_ratio_bounded_by_inverse_spacing(values, delta):
    r = ratio_of_path(np.asarray(values), delta)
    assert 0 < r <= 1 / delta * (1 + 1e-12)
