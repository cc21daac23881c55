"""Tests for the two-sample statistics against independently coded oracles."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sp_stats

from counterspeech.errors import (
    DegenerateVarianceError,
    InsufficientDataError,
    InvalidInputError,
)
from counterspeech.stats import (
    bootstrap_p,
    nearest_rank_percentiles,
    regularized_incomplete_beta,
    student_t_sf,
    welch_t,
)


def welch_oracle(a, b):
    """Straight-line textbook Welch formula; the t tail comes from scipy so
    the oracle shares no code with the continued-fraction implementation."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    va, vb = a.var(ddof=1), b.var(ddof=1)
    na, nb = len(a), len(b)
    se2 = va / na + vb / nb
    t = (a.mean() - b.mean()) / math.sqrt(se2)
    df = se2**2 / ((va / na) ** 2 / (na - 1) + (vb / nb) ** 2 / (nb - 1))
    return t, df, 2.0 * sp_stats.t.sf(abs(t), df)


class TestWelch:
    def test_identical_samples_give_p_one_exactly(self):
        r = welch_t([1, 2, 3], [1, 2, 3])
        assert r.t == 0.0
        assert r.p == 1.0

    def test_matches_textbook_oracle(self):
        r = welch_t([1, 2, 3, 4, 5], [2, 3, 4, 5, 6])
        _, _, p = welch_oracle([1, 2, 3, 4, 5], [2, 3, 4, 5, 6])
        assert abs(r.p - p) <= 1e-9

    def test_thousand_random_pairs_within_1e9(self):
        rng = np.random.default_rng(1234)
        worst = 0.0
        for _ in range(1000):
            na, nb = rng.integers(2, 201, size=2)
            a = rng.normal(rng.uniform(-3, 3), rng.uniform(0.1, 5), na)
            b = rng.normal(rng.uniform(-3, 3), rng.uniform(0.1, 5), nb)
            mine = welch_t(a, b)
            t, df, p = welch_oracle(a, b)
            assert abs(mine.t - t) < 1e-9
            assert abs(mine.df - df) < 1e-6 * max(1.0, df)
            worst = max(worst, abs(mine.p - p))
        assert worst <= 1e-9

    def test_symmetry_is_exact(self):
        rng = np.random.default_rng(77)
        for _ in range(50):
            a = rng.normal(0, 1, int(rng.integers(2, 40)))
            b = rng.normal(0.5, 2, int(rng.integers(2, 40)))
            assert welch_t(a, b).p == welch_t(b, a).p

    def test_undersized_sample(self):
        with pytest.raises(InsufficientDataError):
            welch_t([1.0], [1.0, 2.0])

    def test_degenerate_variance(self):
        with pytest.raises(DegenerateVarianceError):
            welch_t([0.0, 0.0], [0.0, 0.0])

    @given(
        a=st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=30),
        b=st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=30),
        k=st.integers(min_value=-20, max_value=20),
    )
    @settings(max_examples=100, deadline=None)
    def test_scaling_both_samples_by_powers_of_two_is_exact(self, a, b, k):
        scale = 2.0**k
        try:
            base = welch_t(a, b)
        except (DegenerateVarianceError, ZeroDivisionError):
            return
        scaled = welch_t([x * scale for x in a], [x * scale for x in b])
        if math.isfinite(base.t):
            assert scaled.t == pytest.approx(base.t, rel=1e-12, abs=1e-300)
            assert scaled.p == pytest.approx(base.p, rel=1e-12)


class TestStudentTSf:
    def test_grid_against_scipy_to_1e10(self):
        for t in [0.0, 0.05, 0.3, 1.0, 1.96, 3.5, 7.0, 25.0, 100.0]:
            for df in [1.0, 2.0, 3.7, 10.0, 29.0, 120.0, 900.0]:
                assert abs(student_t_sf(t, df) - sp_stats.t.sf(t, df)) < 1e-10

    def test_negative_t(self):
        assert student_t_sf(-1.5, 7) == pytest.approx(sp_stats.t.sf(-1.5, 7), abs=1e-12)

    def test_incomplete_beta_bounds(self):
        assert regularized_incomplete_beta(2.0, 3.0, 0.0) == 0.0
        assert regularized_incomplete_beta(2.0, 3.0, 1.0) == 1.0
        with pytest.raises(InvalidInputError):
            regularized_incomplete_beta(-1.0, 1.0, 0.5)
        with pytest.raises(InvalidInputError):
            regularized_incomplete_beta(1.0, 1.0, 1.5)


class TestBootstrap:
    def test_fixed_seed_is_bit_reproducible(self):
        data = list(np.random.default_rng(5).normal(0, 1, 500))
        p1 = bootstrap_p(data, 0.1, resamples=5000, rng=99)
        p2 = bootstrap_p(data, 0.1, resamples=5000, rng=99)
        assert p1 == p2

    def test_mean_below_every_control_value_gives_zero(self):
        control = [1.0, 2.0, 3.0, 4.0]
        assert bootstrap_p(control, 0.5, resamples=2000, rng=1) == 0.0

    def test_symmetric_sample_centered_mean_near_half(self):
        rng = np.random.default_rng(17)
        control = list(rng.normal(10.0, 2.0, 1000))
        mean = float(np.mean(control))
        ps = [
            bootstrap_p(control, mean, resamples=2000, rng=seed)
            for seed in range(20)
        ]
        assert 0.45 <= float(np.mean(ps)) <= 0.55

    def test_lower_tail_p_nonincreasing_in_experimental_mean(self):
        control = list(np.random.default_rng(3).normal(0, 1, 200))
        grid = np.linspace(-1.0, 1.0, 9)
        ps = [bootstrap_p(control, m, resamples=3000, rng=11) for m in grid]
        assert all(a <= b for a, b in zip(ps, ps[1:]))

    def test_upper_tail_mirrors_lower_at_extremes(self):
        control = [1.0, 2.0, 3.0]
        assert bootstrap_p(control, 10.0, resamples=500, rng=0, tail="upper") == 0.0
        assert bootstrap_p(control, 10.0, resamples=500, rng=0, tail="lower") == 1.0

    def test_empty_control(self):
        with pytest.raises(InsufficientDataError):
            bootstrap_p([], 1.0)

    def test_bad_arguments(self):
        with pytest.raises(InvalidInputError):
            bootstrap_p([1.0], 1.0, resamples=0)
        with pytest.raises(InvalidInputError):
            bootstrap_p([1.0], 1.0, tail="sideways")


class TestNearestRank:
    def test_hand_sortable_oracle(self):
        # {0,1,2,3}: the 50th percentile is 1 under nearest-rank (no
        # interpolation), unlike the 1.5 linear interpolation would give.
        got = nearest_rank_percentiles([3, 0, 2, 1])
        assert got == {"min": 0, "max": 3, "p25": 0, "p50": 1, "p75": 2}

    def test_single_value(self):
        got = nearest_rank_percentiles([7.0])
        assert set(got.values()) == {7.0}

    def test_empty(self):
        with pytest.raises(InsufficientDataError):
            nearest_rank_percentiles([])

    @given(st.lists(st.integers(-1000, 1000), min_size=1, max_size=60))
    @settings(max_examples=200, deadline=None)
    def test_matches_definition(self, values):
        got = nearest_rank_percentiles(values)
        data = sorted(values)
        n = len(data)
        for key, q in (("p25", 0.25), ("p50", 0.5), ("p75", 0.75)):
            rank = max(1, math.ceil(q * n))
            assert got[key] == data[rank - 1]
        assert got["min"] == data[0] and got["max"] == data[-1]
