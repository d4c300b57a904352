import math

import numpy as np
import pytest

from tiltmax.grid import NEG_INF, EmptyDomainError, Grid, LogPath, lag_shift, log_sum_exp, log_sum_exp_rows


def test_points_sorted_and_distinct():
    g = Grid.from_values([2.0, 0.0, 1.0])
    assert g.points[:, 0].tolist() == [0.0, 1.0, 2.0]
    with pytest.raises(ValueError, match="distinct"):
        Grid.from_values([0.0, 0.0])


def test_points_are_read_only():
    g = Grid.from_values([0.0, 1.0])
    with pytest.raises(ValueError):
        g.points[0, 0] = 5.0


def test_lattice_spacing_enforced():
    with pytest.raises(ValueError):
        Grid.from_values([0.0, 0.3], spacing=0.5)
    g = Grid.lattice(0.5, -1.0, 1.0)
    assert g.size == 5 and g.spacing == 0.5


def test_multidimensional_lattice_lexicographic():
    g = Grid.box(1.0, 1.0, dim=2)
    assert g.points.tolist() == [[0, 0], [0, 1], [1, 0], [1, 1]]


@pytest.mark.parametrize(
    "spec, size",
    [
        ("0,1,2", 3),
        ([0.0, 0.5], 2),
        ({"points": [0, 1, 3]}, 3),
        ({"dim": 1, "delta": 0.5, "extent": 2.0}, 5),
        ({"dim": 2, "delta": 1.0, "lower": -1.0, "upper": 1.0}, 9),
    ],
)
def test_from_spec(spec, size):
    assert Grid.from_spec(spec).size == size


def test_spec_round_trip():
    g = Grid.lattice(0.5, 0.0, 2.0)
    assert Grid.from_spec(g.to_spec()) == g


def test_index_lookup():
    g = Grid.from_values([0.0, 0.5, 1.0])
    assert g.index_of(0.5) == 1
    assert g.indices_of([[1.0], [7.0]], missing="ignore").tolist() == [2, -1]
    with pytest.raises(KeyError):
        g.index_of(7.0)


def test_lag_shift_zero_is_identity():
    g = Grid.from_values([0.0, 1.0, 2.0])
    p = LogPath(g, [1.0, 2.0, 3.0])
    out = lag_shift(p, [0.0])
    assert out.grid == g and np.array_equal(out.values, p.values)


def test_lag_shift_moves_one_slot():
    g = Grid.from_values([0.0, 1.0, 2.0], spacing=1.0)
    p = LogPath(g, [10.0, 20.0, 30.0])
    out = lag_shift(p, [1.0])
    assert out.grid.points[:, 0].tolist() == [1.0, 2.0]
    assert out.at(1.0) == 10.0 and out.at(2.0) == 20.0


def test_lag_shift_empty_domain():
    g = Grid.from_values([0.0, 1.0, 2.0])
    with pytest.raises(EmptyDomainError):
        lag_shift(LogPath(g, [0.0, 0.0, 0.0]), [3.0])


def test_lag_shift_round_trip():
    g = Grid.from_values([0.0, 1.0, 2.0, 3.0])
    p = LogPath(g, [0.1, 0.2, 0.3, 0.4])
    back = lag_shift(lag_shift(p, [1.0]), [-1.0])
    for t in back.grid.points[:, 0]:
        assert back.at(t) == p.at(t)


def test_lag_shift_to_declared_subgrid():
    g = Grid.from_values([0.0, 1.0, 2.0])
    p = LogPath(g, [5.0, 6.0, 7.0])
    out = lag_shift(p, [1.0], subgrid=Grid.from_values([2.0]))
    assert out.values.tolist() == [6.0]


def test_logpath_rejects_nan_and_plus_inf():
    g = Grid.from_values([0.0, 1.0])
    with pytest.raises(ValueError):
        LogPath(g, [0.0, np.nan])
    with pytest.raises(ValueError):
        LogPath(g, [0.0, np.inf])
    assert LogPath(g, [NEG_INF, NEG_INF]).is_killed


def test_log_sum_exp_examples():
    assert log_sum_exp(np.array([1.7])) == 1.7
    assert math.isclose(log_sum_exp(np.array([0.0, 0.0])), math.log(2.0))
    assert log_sum_exp(np.array([0.0, NEG_INF])) == 0.0


def test_log_sum_exp_weights_and_degenerate():
    assert math.isclose(log_sum_exp(np.array([0.0, 0.0]), weights=[1.0, 3.0]), math.log(4.0))
    out = log_sum_exp(np.array([NEG_INF, 1.0]), weights=[1.0, 0.0])
    assert out == NEG_INF and out.degenerate
    with pytest.raises(ValueError):
        log_sum_exp(np.array([0.0]), weights=[-1.0])


def test_log_sum_exp_large_values_stable():
    assert math.isclose(log_sum_exp(np.array([1000.0, 1000.0])), 1000.0 + math.log(2.0))


def test_log_sum_exp_rows_handles_killed_rows():
    v = np.array([[0.0, 0.0], [NEG_INF, NEG_INF]])
    out = log_sum_exp_rows(v)
    assert math.isclose(out[0], math.log(2.0)) and out[1] == NEG_INF


def test_union_and_shifted():
    a = Grid.from_values([0.0, 1.0])
    b = Grid.from_values([1.0, 2.0])
    assert a.union(b).points[:, 0].tolist() == [0.0, 1.0, 2.0]
    assert a.shifted([1.0]) == b
