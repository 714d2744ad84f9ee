import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cucumber_sim import (
    UNIT_UTILIZATION,
    UNIT_WATTS,
    FreepForecast,
    GridMismatch,
    InvariantViolation,
    PointSeries,
    PowerModel,
    ProbabilisticSeries,
    TimeGrid,
    compute_freep,
    reduce_load_forecast,
)
from oracles import nearest_rank

MODEL = PowerModel(30.0, 180.0)
GRID = TimeGrid(0.0, 600.0, 2)


def freep_of(u_pred: float, p_ree: float) -> FreepForecast:
    return compute_freep(
        PointSeries(GRID, [u_pred] * 2, UNIT_UTILIZATION),
        PointSeries(GRID, [p_ree] * 2, UNIT_WATTS),
        MODEL,
    )


def test_capacity_from_surplus_and_headroom():
    result = freep_of(0.4, 180.0)
    assert result.u_free == pytest.approx([0.6, 0.6], abs=1e-9)
    assert result.u_freep == pytest.approx([0.6, 0.6], abs=1e-9)


def test_ree_at_static_power_gives_nothing():
    result = freep_of(0.0, 30.0)
    assert result.u_freep == pytest.approx([0.0, 0.0], abs=1e-9)


def test_saturated_node_gives_nothing():
    result = freep_of(1.0, 500.0)
    assert result.u_free == pytest.approx([0.0, 0.0], abs=1e-9)
    assert result.u_freep == pytest.approx([0.0, 0.0], abs=1e-9)


def test_grid_mismatch():
    with pytest.raises(GridMismatch):
        compute_freep(
            PointSeries(GRID, [0.5, 0.5], UNIT_UTILIZATION),
            PointSeries(TimeGrid(0.0, 300.0, 2), [100.0, 100.0], UNIT_WATTS),
            MODEL,
        )


def test_forecast_invariant_enforced():
    with pytest.raises(InvariantViolation):
        FreepForecast(GRID, [0.7, 0.7], [0.5, 0.5])


@given(u=st.floats(0.0, 1.0), p=st.floats(0.0, 600.0))
@settings(max_examples=100)
def test_freep_below_both_terms(u, p):
    result = freep_of(u, p)
    u_reep = min(max((p - 30.0) / 150.0, 0.0), 1.0)
    assert result.u_freep[0] <= result.u_free[0] + 1e-12
    assert result.u_freep[0] <= u_reep + 1e-12


@given(u=st.floats(0.0, 1.0), pair=st.tuples(st.floats(0.0, 600.0), st.floats(0.0, 600.0)))
@settings(max_examples=60)
def test_monotone_in_ree(u, pair):
    lo, hi = min(pair), max(pair)
    assert freep_of(u, lo).u_freep[0] <= freep_of(u, hi).u_freep[0] + 1e-12


@given(p=st.floats(0.0, 600.0), pair=st.tuples(st.floats(0.0, 1.0), st.floats(0.0, 1.0)))
@settings(max_examples=60)
def test_monotone_in_load(p, pair):
    lo, hi = min(pair), max(pair)
    assert freep_of(hi, p).u_freep[0] <= freep_of(lo, p).u_freep[0] + 1e-12


@given(u=st.floats(0.0, 1.0))
def test_zero_ree_annihilates(u):
    assert freep_of(u, 0.0).u_freep[0] == 0.0


class TestReduceLoadForecast:
    def test_point_is_identity(self):
        series = ProbabilisticSeries.point(GRID, [0.3, 0.7], UNIT_UTILIZATION)
        for alpha in (0.1, 0.5, 0.9):
            assert reduce_load_forecast(series, alpha).values == pytest.approx([0.3, 0.7])

    def test_quantiles_pick_median_trajectory(self):
        series = ProbabilisticSeries.quantiles(
            GRID,
            (0.1, 0.5, 0.9),
            [[0.1, 0.1], [0.4, 0.5], [0.8, 0.9]],
            UNIT_UTILIZATION,
        )
        assert reduce_load_forecast(series, 0.5).values == pytest.approx([0.4, 0.5])

    def test_ensemble_median_matches_oracle(self):
        members = [0.2, 0.4, 0.6]
        assert nearest_rank(members, 0.5) == 0.4
        series = ProbabilisticSeries.ensemble(
            GRID, [[m] * 2 for m in members], UNIT_UTILIZATION
        )
        assert reduce_load_forecast(series, 0.5).values == pytest.approx([0.4, 0.4])
