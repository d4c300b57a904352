import math

import numpy as np
import pytest
from scipy import stats

from tiltmax.grid import Grid
from tiltmax.randomness import new_stream
from tiltmax.simulate import (
    DMPlan,
    ProvenanceError,
    extension_model,
    extension_shift,
    extract_extremal,
    sample_levy_two_sided,
    simulate_direct,
    simulate_dm,
    simulate_fields,
    simulate_two_sided,
)
from tiltmax.spectral import BrownianLevySpectral, MaskedSpectral, brownian, constant, fbm

from conftest import hr_prob

ONE = Grid.from_values([0.0])
PAIR = Grid.from_values([0.0, 1.0])


def _joint(values):
    hit = np.all(values <= 0.0, axis=1)
    p = hit.mean()
    return p, math.sqrt(p * (1 - p) / hit.size)


def test_dm_single_point_gumbel():
    b = simulate_fields(fbm(1.0), ONE, 10_000, 1)
    assert b.exact
    assert stats.kstest(b.values[:, 0], stats.gumbel_r.cdf).pvalue > 0.01


def test_dm_bivariate_hr(backend):
    b = simulate_fields(fbm(1.0), PAIR, 20_000, 2)
    p, se = _joint(b.values)
    assert abs(p - hr_prob(1.0)) < 3 * se


def test_dm_masked_matches_unmasked():
    a = simulate_fields(MaskedSpectral(0.5, fbm(1.0)), PAIR, 20_000, 3)
    b = simulate_fields(fbm(1.0), PAIR, 20_000, 4)
    pa, sa = _joint(a.values)
    pb, sb = _joint(b.values)
    assert abs(pa - pb) < 3 * math.hypot(sa, sb)


def test_dm_rejects_non_counting_measure():
    with pytest.raises(ValueError, match="exact stopping requires bounded shapes"):
        simulate_dm(fbm(1.0), PAIR, new_stream(0), measure="probability")


def test_dm_shapes_bounded_and_stop_rule(backend):
    g = Grid.from_values([0.0, 0.5, 1.0])
    for i in range(200):
        f = simulate_dm(fbm(1.0), g, new_stream(5, i), provenance=True)
        shape = f.provenance["shape"]
        assert np.all(shape <= 1e-12)
        # the mark's own point carries the largest weight of its shape: F(T) = -logsumexp(shape)
        for t in range(g.size):
            assert shape[t, f.provenance["mark"][t]] <= 0.0
        # the value is attained by the recorded atom
        assert np.allclose(f.provenance["atom"] + shape[np.arange(g.size), np.arange(g.size)], f.values)
        assert np.all(np.isfinite(f.values))


def test_dm_plan_anchor_zero():
    plan = DMPlan.build(fbm(1.0), Grid.from_values([0.0, 1.0, 2.0]))
    for j in range(3):
        assert plan.means[j, j] == 0.0 and np.all(plan.factors[j, j] == 0.0)


def test_direct_constant_equals_first_point():
    f = simulate_direct(constant(), PAIR, new_stream(9), error_budget=0.5)
    assert f.values[0] == f.values[1]
    from tiltmax.randomness import GumbelPPPStream

    assert f.values[0] == GumbelPPPStream(new_stream(9)).next()
    assert not f.exact


def test_direct_single_point_gumbel():
    b = simulate_fields(fbm(1.0), ONE, 10_000, 10, method="direct")
    assert stats.kstest(b.values[:, 0], stats.gumbel_r.cdf).pvalue > 0.01


def test_direct_matches_dm(backend):
    a = simulate_fields(fbm(1.0), PAIR, 20_000, 11, method="direct", error_budget=1e-4)
    b = simulate_fields(fbm(1.0), PAIR, 20_000, 12, method="dm")
    pa, sa = _joint(a.values)
    pb, sb = _joint(b.values)
    assert abs(pa - pb) < 3 * math.hypot(sa, sb) + 1e-4


def test_direct_budget_validation():
    with pytest.raises(ValueError):
        simulate_direct(fbm(1.0), PAIR, new_stream(0), error_budget=0.0)


def test_extract_extremal_requires_provenance():
    f = simulate_dm(fbm(1.0), PAIR, new_stream(1))
    with pytest.raises(ProvenanceError):
        extract_extremal(f, 0.0)


def test_extract_extremal_single_point():
    f = simulate_dm(fbm(1.0), ONE, new_stream(1), provenance=True)
    e = extract_extremal(f, 0.0)
    assert np.array_equal(e.normalized_shape(), [0.0])
    assert e.value_at_anchor == f.values[0]


def test_extremal_shape_law_and_independence():
    b = simulate_fields(fbm(1.0), PAIR, 10_000, 14, provenance=True)
    d = np.array([extract_extremal(b.sample(i), 0.0).normalized_shape()[1] for i in range(len(b))])
    assert stats.kstest(d, stats.norm(-0.5, 1.0).cdf).pvalue > 0.01
    r = np.corrcoef(d, b.values[:, 0])[0, 1]
    assert abs(r) < 3 / math.sqrt(len(b))


def test_extension_shift_and_positive_grid():
    assert extension_shift(Grid.from_values([-1.0, 0.0, 2.0])).tolist() == [1.0]
    g = Grid.from_values([0.0, 1.0, 2.0])
    assert extension_shift(g).tolist() == [0.0]
    m = extension_model(brownian(), g)
    assert np.allclose(m.covariance(g.points), brownian().covariance(g.points))


def test_extension_brownian_moments():
    g = Grid.from_values([-1.0, 0.0, 1.0])
    m = extension_model(brownian(), g)
    assert np.allclose(m.mean(g.points), [-0.5, 0.0, -0.5])
    c = m.covariance(g.points)
    assert c[0, 2] == pytest.approx(0.0, abs=1e-14) and c[0, 0] == pytest.approx(1.0) and c[2, 2] == pytest.approx(1.0)


def test_two_sided_restricted_matches_one_sided():
    g = Grid.from_values([-1.0, 0.0, 1.0])
    a = simulate_fields(brownian(), g, 20_000, 15, method="two-sided")
    b = simulate_fields(brownian(), PAIR, 20_000, 16)
    pa, sa = _joint(a.values[:, 1:])
    pb, sb = _joint(b.values)
    assert abs(pa - pb) < 3 * math.hypot(sa, sb)
    f = simulate_two_sided(brownian(), g, new_stream(0))
    assert f.exact and f.values.shape == (3,)


def test_levy_two_sided_negative_branch():
    g = Grid.from_values([-1.0, 0.0, 1.0])
    z = sample_levy_two_sided(BrownianLevySpectral(1.0), g, 100_000, new_stream(17))
    assert np.all(z[:, 1] == 0.0)
    assert abs(z[:, 0].mean() + 0.5) < 4 / math.sqrt(z.shape[0])
    assert abs(np.corrcoef(z[:, 0], z[:, 2])[0, 1]) < 0.02


def test_fields_independent_of_thread_count():
    g = Grid.from_values([0.0, 0.5, 1.0])
    a = simulate_fields(fbm(1.0), g, 300, 21, threads=1)
    b = simulate_fields(fbm(1.0), g, 300, 21, threads=4)
    assert a.values.tobytes() == b.values.tobytes()
    c = simulate_fields(fbm(1.0), g, 100, 21, first_replicate=200)
    assert c.values.tobytes() == a.values[200:].tobytes()


def test_unknown_method():
    with pytest.raises(ValueError):
        simulate_fields(fbm(1.0), PAIR, 2, 0, method="magic")
