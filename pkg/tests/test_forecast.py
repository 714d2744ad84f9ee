import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cucumber_sim import (
    UNIT_UTILIZATION,
    UNIT_WATTS,
    GridMismatch,
    InvalidAlpha,
    InvariantViolation,
    ParseError,
    ProbabilisticSeries,
    QuantileUnavailable,
    RepresentationMismatch,
    TimeGrid,
    fuse_ree_fallback,
    fuse_ree_joint,
    ingest_forecast_csv,
    quantile,
    write_forecast_csv,
)
from oracles import enumerate_pair_quantile, nearest_rank

GRID3 = TimeGrid(0.0, 600.0, 3)


def const_ensemble(grid, member_values, unit=UNIT_WATTS):
    members = [[v] * grid.num_steps for v in member_values]
    return ProbabilisticSeries.ensemble(grid, members, unit)


def const_point(grid, value, unit=UNIT_WATTS):
    return ProbabilisticSeries.point(grid, [value] * grid.num_steps, unit)


class TestTimeGrid:
    def test_validation(self):
        with pytest.raises(InvariantViolation):
            TimeGrid(0.0, 0.0, 4)
        with pytest.raises(InvariantViolation):
            TimeGrid(0.0, 600.0, 0)

    def test_step_membership(self):
        grid = TimeGrid(100.0, 50.0, 4)
        assert grid.index_of(100.0) == 0
        assert grid.index_of(149.9) == 0
        assert grid.index_of(150.0) == 1
        assert grid.end == 300.0


class TestSeriesValidation:
    def test_quantile_crossing_rejected(self):
        with pytest.raises(InvariantViolation, match="step 1"):
            ProbabilisticSeries.quantiles(
                GRID3, (0.1, 0.9), [[10, 10, 10], [20, 5, 20]], UNIT_WATTS
            )

    def test_levels_must_increase(self):
        with pytest.raises(InvariantViolation):
            ProbabilisticSeries.quantiles(
                GRID3, (0.9, 0.1), [[10] * 3, [20] * 3], UNIT_WATTS
            )

    def test_unit_ranges(self):
        with pytest.raises(InvariantViolation):
            const_point(GRID3, -5.0, UNIT_WATTS)
        with pytest.raises(InvariantViolation):
            const_point(GRID3, 1.5, UNIT_UTILIZATION)

    def test_values_are_immutable(self):
        series = const_point(GRID3, 10.0)
        from cucumber_sim.forecast import as_point_series

        with pytest.raises(ValueError):
            as_point_series(series).values[0] = 99.0


class TestQuantile:
    def test_median_of_odd_ensemble(self):
        series = const_ensemble(GRID3, [10, 20, 30])
        assert quantile(series, 0.5).values == pytest.approx([20, 20, 20])

    def test_stored_level_lookup_is_verbatim(self):
        series = ProbabilisticSeries.quantiles(
            GRID3, (0.1, 0.5, 0.9), [[1, 2, 3], [4, 5, 6], [7, 8, 9]], UNIT_WATTS
        )
        assert quantile(series, 0.9).values == pytest.approx([7, 8, 9])

    def test_even_ensemble_matches_nearest_rank_oracle(self):
        # Frozen from the nearest-rank oracle: ceil(0.5 * 2) - 1 = index 0.
        members = [0.0, 100.0]
        assert nearest_rank(members, 0.5) == 0.0
        series = const_ensemble(GRID3, members)
        assert quantile(series, 0.5).values == pytest.approx([0.0, 0.0, 0.0])

    def test_point_ignores_alpha(self):
        series = const_point(GRID3, 42.0)
        for alpha in (0.01, 0.5, 0.99):
            assert quantile(series, alpha).values == pytest.approx([42.0] * 3)

    def test_unstored_level_rejected(self):
        series = ProbabilisticSeries.quantiles(GRID3, (0.1, 0.9), [[1] * 3, [2] * 3], UNIT_WATTS)
        with pytest.raises(QuantileUnavailable):
            quantile(series, 0.5)

    def test_complement_level_matches_despite_float_noise(self):
        series = ProbabilisticSeries.quantiles(GRID3, (0.1, 0.9), [[1] * 3, [2] * 3], UNIT_WATTS)
        assert quantile(series, 1.0 - 0.9).values == pytest.approx([1, 1, 1])

    @pytest.mark.parametrize("alpha", [0.0, 1.0, -0.2, 1.7])
    def test_alpha_domain(self, alpha):
        with pytest.raises(InvalidAlpha):
            quantile(const_point(GRID3, 1.0), alpha)

    @given(
        members=st.lists(
            st.lists(st.floats(0, 1e4), min_size=4, max_size=4), min_size=1, max_size=9
        ),
        alphas=st.tuples(st.floats(0.01, 0.99), st.floats(0.01, 0.99)),
    )
    @settings(max_examples=60)
    def test_quantile_monotone_in_alpha(self, members, alphas):
        grid = TimeGrid(0.0, 60.0, 4)
        series = ProbabilisticSeries.ensemble(grid, members, UNIT_WATTS)
        lo, hi = min(alphas), max(alphas)
        assert (quantile(series, lo).values <= quantile(series, hi).values).all()

    @given(
        members=st.lists(st.floats(0, 1e4), min_size=1, max_size=12),
        alpha=st.floats(0.01, 0.99),
    )
    @settings(max_examples=80)
    def test_ensemble_quantile_equals_oracle(self, members, alpha):
        grid = TimeGrid(0.0, 60.0, 1)
        series = ProbabilisticSeries.ensemble(grid, [[m] for m in members], UNIT_WATTS)
        assert quantile(series, alpha).values[0] == nearest_rank(members, alpha)


class TestJointFusion:
    def test_degenerate_distributions(self):
        prod = const_point(GRID3, 200.0)
        cons = const_point(GRID3, 120.0)
        for alpha in (0.1, 0.5, 0.9):
            assert fuse_ree_joint(prod, cons, alpha, 500, 7).values == pytest.approx([80.0] * 3)

    def test_clamps_at_zero(self):
        prod = const_point(GRID3, 50.0)
        cons = const_point(GRID3, 120.0)
        assert fuse_ree_joint(prod, cons, 0.5, 500, 7).values == pytest.approx([0.0] * 3)

    def test_two_member_ensembles_against_enumeration_oracle(self):
        # Exact pairwise enumeration: differences {-50, 50, 150, 250}; the
        # nearest-rank median of that multiset is 50.  alpha = 0.5 sits exactly
        # on the enumeration CDF jump, so the Monte Carlo estimate can only
        # land on one of the two adjacent outcomes {50, 150}.
        oracle = enumerate_pair_quantile([100, 300], [50, 150], 0.5)
        assert oracle == 50.0
        prod = const_ensemble(GRID3, [100, 300])
        cons = const_ensemble(GRID3, [50, 150])
        fused = fuse_ree_joint(prod, cons, 0.5, 10000, 42)
        assert all(v in (50.0, 150.0) for v in fused.values)

    def test_interior_alpha_converges_to_enumeration_oracle(self):
        # At alpha away from the CDF jumps the estimator is consistent.
        oracle = enumerate_pair_quantile([100, 300], [50, 150], 0.53)
        prod = const_ensemble(GRID3, [100, 300])
        cons = const_ensemble(GRID3, [50, 150])
        fused = fuse_ree_joint(prod, cons, 0.53, 50000, 42)
        assert fused.values == pytest.approx([oracle] * 3, abs=1.0)

    @given(
        prod_members=st.lists(st.floats(0, 400), min_size=1, max_size=8),
        cons_members=st.lists(st.floats(0, 400), min_size=1, max_size=8),
        alpha_seed=st.integers(0, 10_000),
    )
    @settings(max_examples=25, deadline=None)
    def test_oracle_equivalence_small_ensembles(self, prod_members, cons_members, alpha_seed):
        # Pick an alpha away from every CDF jump of the enumeration so the
        # Monte Carlo estimator has a unique consistent target.
        total = len(prod_members) * len(cons_members)
        alpha = (2 * (alpha_seed % total) + 1) / (2 * total)
        grid = TimeGrid(0.0, 600.0, 1)
        prod = ProbabilisticSeries.ensemble(grid, [[m] for m in prod_members], UNIT_WATTS)
        cons = ProbabilisticSeries.ensemble(grid, [[m] for m in cons_members], UNIT_WATTS)
        oracle = enumerate_pair_quantile(prod_members, cons_members, alpha)
        fused = fuse_ree_joint(prod, cons, alpha, 200_000, seed=alpha_seed)
        assert fused.values[0] == pytest.approx(oracle, abs=1.0)

    def test_determinism(self):
        rng = np.random.default_rng(5)
        grid = TimeGrid(0.0, 600.0, 4)
        prod = ProbabilisticSeries.ensemble(grid, rng.uniform(0, 400, (6, 4)), UNIT_WATTS)
        cons = ProbabilisticSeries.ensemble(grid, rng.uniform(0, 200, (5, 4)), UNIT_WATTS)
        a = fuse_ree_joint(prod, cons, 0.4, 2000, 99).values
        b = fuse_ree_joint(prod, cons, 0.4, 2000, 99).values
        assert (a == b).all()
        # A small sample with another seed picks visibly different atoms.
        c = fuse_ree_joint(prod, cons, 0.4, 8, 100).values
        d = fuse_ree_joint(prod, cons, 0.4, 8, 101).values
        assert not (c == d).all()

    @given(
        alpha_pair=st.tuples(st.floats(0.01, 0.99), st.floats(0.01, 0.99)),
        seed=st.integers(0, 1000),
    )
    @settings(max_examples=40, deadline=None)
    def test_alpha_monotone_via_shared_samples(self, alpha_pair, seed):
        prod = const_ensemble(GRID3, [10, 90, 170, 330])
        cons = const_ensemble(GRID3, [40, 60, 120])
        lo, hi = min(alpha_pair), max(alpha_pair)
        low = fuse_ree_joint(prod, cons, lo, 400, seed).values
        high = fuse_ree_joint(prod, cons, hi, 400, seed).values
        assert (low <= high).all()

    def test_grid_and_representation_errors(self):
        other_grid = TimeGrid(0.0, 300.0, 3)
        prod = const_point(GRID3, 100.0)
        with pytest.raises(GridMismatch):
            fuse_ree_joint(prod, const_point(other_grid, 10.0), 0.5, 10, 0)
        stored = ProbabilisticSeries.quantiles(GRID3, (0.5,), [[10] * 3], UNIT_WATTS)
        with pytest.raises(RepresentationMismatch):
            fuse_ree_joint(prod, stored, 0.5, 10, 0)


class TestFallbackFusion:
    PROD = ProbabilisticSeries.quantiles(
        GRID3, (0.1, 0.5, 0.9), [[40] * 3, [100] * 3, [160] * 3], UNIT_WATTS
    )

    def test_optimistic_pairing(self):
        cons = const_point(GRID3, 50.0)
        assert fuse_ree_fallback(self.PROD, cons, 0.9).values == pytest.approx([110.0] * 3)

    def test_conservative_pairing_clamps(self):
        cons = ProbabilisticSeries.quantiles(
            GRID3, (0.1, 0.5, 0.9), [[30] * 3, [50] * 3, [80] * 3], UNIT_WATTS
        )
        assert fuse_ree_fallback(self.PROD, cons, 0.1).values == pytest.approx([0.0] * 3)

    def test_identical_point_series_cancel(self):
        series = const_point(GRID3, 77.0)
        assert fuse_ree_fallback(series, series, 0.5).values == pytest.approx([0.0] * 3)

    def test_unresolvable_level_propagates(self):
        cons = ProbabilisticSeries.quantiles(GRID3, (0.5,), [[50] * 3], UNIT_WATTS)
        with pytest.raises(QuantileUnavailable):
            fuse_ree_fallback(self.PROD, cons, 0.9)

    @given(alpha_pair=st.tuples(st.sampled_from([0.1, 0.5, 0.9]), st.sampled_from([0.1, 0.5, 0.9])))
    def test_alpha_monotone(self, alpha_pair):
        cons = ProbabilisticSeries.quantiles(
            GRID3, (0.1, 0.5, 0.9), [[30] * 3, [50] * 3, [80] * 3], UNIT_WATTS
        )
        lo, hi = min(alpha_pair), max(alpha_pair)
        assert (
            fuse_ree_fallback(self.PROD, cons, lo).values
            <= fuse_ree_fallback(self.PROD, cons, hi).values
        ).all()


class TestForecastCsv:
    def write(self, tmp_path, text):
        path = tmp_path / "fc.csv"
        path.write_text(text)
        return path

    def test_quantile_file_roundtrip(self, tmp_path):
        rows = ["timestamp,p10,p50,p90"]
        for i in range(144):
            rows.append(f"2024-01-01T{i // 6:02d}:{(i % 6) * 10:02d}:00+00:00,{i},{i + 1},{i + 2}")
        series = ingest_forecast_csv(self.write(tmp_path, "\n".join(rows) + "\n"), UNIT_WATTS)
        assert series.grid.num_steps == 144
        assert series.grid.step == 600.0
        assert series.representation.levels == (0.1, 0.5, 0.9)

        out = tmp_path / "out.csv"
        write_forecast_csv(out, series)
        again = ingest_forecast_csv(out, UNIT_WATTS)
        assert np.array_equal(again.representation.trajectories, series.representation.trajectories)
        assert again.grid == series.grid

    def test_crossing_names_the_row(self, tmp_path):
        path = self.write(
            tmp_path,
            "timestamp,p10,p90\n"
            "2024-01-01T00:00:00Z,1,2\n"
            "2024-01-01T00:10:00Z,9,3\n",
        )
        with pytest.raises(InvariantViolation, match="step 1"):
            ingest_forecast_csv(path, UNIT_WATTS)

    def test_empty_file(self, tmp_path):
        with pytest.raises(ParseError):
            ingest_forecast_csv(self.write(tmp_path, ""), UNIT_WATTS)

    def test_header_only(self, tmp_path):
        with pytest.raises(ParseError, match="no data rows"):
            ingest_forecast_csv(self.write(tmp_path, "timestamp,value\n"), UNIT_WATTS)

    def test_negative_value_rejected(self, tmp_path):
        path = self.write(
            tmp_path, "timestamp,value\n2024-01-01T00:00:00Z,-4\n2024-01-01T00:10:00Z,4\n"
        )
        with pytest.raises(InvariantViolation, match="non-negative"):
            ingest_forecast_csv(path, UNIT_WATTS)

    def test_ensemble_columns(self, tmp_path):
        path = self.write(
            tmp_path,
            "timestamp,m0,m1,m2\n"
            "2024-01-01T00:00:00Z,5,1,3\n"
            "2024-01-01T00:10:00Z,6,2,4\n",
        )
        series = ingest_forecast_csv(path, UNIT_WATTS)
        assert series.representation.members.shape == (3, 2)

    def test_ensemble_write_roundtrip(self, tmp_path):
        rng = np.random.default_rng(4)
        grid = TimeGrid(1704067200.0, 600.0, 5)
        series = ProbabilisticSeries.ensemble(grid, rng.uniform(0, 400, (7, 5)), UNIT_WATTS)
        out = tmp_path / "ens.csv"
        write_forecast_csv(out, series)
        again = ingest_forecast_csv(out, UNIT_WATTS, representation_hint="ensemble")
        assert again.grid == grid
        assert np.array_equal(again.representation.members, series.representation.members)

    def test_hint_mismatch(self, tmp_path):
        path = self.write(tmp_path, "timestamp,value\n2024-01-01T00:00:00Z,5\n")
        with pytest.raises(ParseError, match="point"):
            ingest_forecast_csv(path, UNIT_WATTS, representation_hint="quantiles")

    def test_irregular_spacing(self, tmp_path):
        path = self.write(
            tmp_path,
            "timestamp,value\n"
            "2024-01-01T00:00:00Z,1\n"
            "2024-01-01T00:10:00Z,2\n"
            "2024-01-01T00:25:00Z,3\n",
        )
        with pytest.raises(ParseError, match="uniformly spaced"):
            ingest_forecast_csv(path, UNIT_WATTS)

    def test_bad_number_names_location(self, tmp_path):
        path = self.write(
            tmp_path, "timestamp,value\n2024-01-01T00:00:00Z,1\n2024-01-01T00:10:00Z,oops\n"
        )
        with pytest.raises(ParseError, match=r":3"):
            ingest_forecast_csv(path, UNIT_WATTS)
