"""Metric formulas, stratum filtering and the group-comparison machinery,
each checked against straight-line reimplementations."""

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sp_stats

from counterspeech.analysis import (
    compare_groups,
    engagement,
    filter_observations,
    first_reply_share,
    link_impact,
    percentile_table,
    reply_ratio,
)
from counterspeech.errors import ExcludedObservationError, InsufficientDataError
from counterspeech.models import AnalysisFilter, Observation
from counterspeech.stats import bootstrap_p


def obs(
    post_id="p",
    arm="control",
    is_reply=False,
    dl=1,
    di=100,
    dr=0,
    has_link=False,
    first=False,
):
    return Observation(
        post_id=post_id,
        arm=arm,
        is_reply=is_reply,
        delta_likes=dl,
        delta_impressions=di,
        delta_replies=dr,
        has_link=has_link,
        was_first_reply=first,
    )


def observations_from_ratios(ratios, arm, denominator=10_000, **kw):
    return [
        obs(
            post_id=f"{arm}-{i}",
            arm=arm,
            dl=round(r * denominator),
            di=denominator,
            dr=round(r * denominator),
            **kw,
        )
        for i, r in enumerate(ratios)
    ]


class TestMetricFormulas:
    def test_engagement_direct(self):
        assert engagement(obs(dl=1, di=100)) == 0.01
        assert engagement(obs(dl=0, di=50)) == 0.0

    def test_engagement_zero_impressions_excluded(self):
        with pytest.raises(ExcludedObservationError):
            engagement(obs(di=0))

    def test_engagement_negative_likes_excluded(self):
        with pytest.raises(ExcludedObservationError):
            engagement(obs(dl=-1))

    def test_reply_ratio_direct(self):
        assert reply_ratio(obs(dr=2, di=100)) == 0.02
        assert reply_ratio(obs(dr=0, di=70)) == 0.0

    def test_reply_ratio_negative_replies_excluded(self):
        with pytest.raises(ExcludedObservationError):
            reply_ratio(obs(dr=-1))

    def test_fifty_randomized_observations_match_rational_oracle(self):
        rng = np.random.default_rng(50)
        for _ in range(50):
            dl = int(rng.integers(0, 3000))
            dr = int(rng.integers(0, 500))
            di = int(rng.integers(1, 250_000))
            o = obs(dl=dl, di=di, dr=dr)
            assert engagement(o) == float(Fraction(dl, di))
            assert reply_ratio(o) == float(Fraction(dr, di))


class TestFilter:
    def sample(self):
        return [
            obs("keep10", di=10),
            obs("keep100", di=100),
            obs("drop9", di=9),
            obs("anomaly", dl=-2, di=500),
            obs("reply-pos", is_reply=True, di=50),
            obs("reply-anomaly", is_reply=True, dr=-1, di=50),
        ]

    def test_min_impressions_boundary_inclusive(self):
        f = AnalysisFilter(thread_position="original", min_delta_impressions=10)
        kept = {o.post_id for o in filter_observations(self.sample(), f)}
        assert kept == {"keep10", "keep100"}

    def test_anomaly_rule_engagement(self):
        f = AnalysisFilter(thread_position="original", min_delta_impressions=1)
        kept = {o.post_id for o in filter_observations(self.sample(), f, "engagement")}
        assert "anomaly" not in kept

    def test_anomaly_rule_replies(self):
        f = AnalysisFilter(thread_position="reply", min_delta_impressions=1)
        kept = {o.post_id for o in filter_observations(self.sample(), f, "replies")}
        assert kept == {"reply-pos"}

    def test_no_anomaly_rule(self):
        f = AnalysisFilter(thread_position="original", min_delta_impressions=1)
        kept = {o.post_id for o in filter_observations(self.sample(), f, None)}
        assert "anomaly" in kept

    def test_empty_input(self):
        f = AnalysisFilter(thread_position="original")
        assert filter_observations([], f) == []

    def test_matches_brute_force_oracle_on_random_sets(self):
        rng = np.random.default_rng(8)
        for _ in range(25):
            pool = [
                obs(
                    post_id=f"o{i}",
                    is_reply=bool(rng.integers(0, 2)),
                    dl=int(rng.integers(-3, 50)),
                    di=int(rng.integers(0, 300)),
                    dr=int(rng.integers(-2, 20)),
                )
                for i in range(40)
            ]
            f = AnalysisFilter(
                thread_position="original" if rng.integers(0, 2) else "reply",
                min_delta_impressions=int(rng.choice([10, 100])),
            )
            got = filter_observations(pool, f, "engagement")
            expected = []
            for o in pool:
                if o.is_reply != (f.thread_position == "reply"):
                    continue
                if o.delta_likes < 0:
                    continue
                if o.delta_impressions < f.min_delta_impressions:
                    continue
                expected.append(o)
            assert got == expected

    @given(
        min_impr=st.sampled_from([10, 100]),
        want_reply=st.booleans(),
        rows=st.lists(
            st.tuples(
                st.booleans(),
                st.integers(-5, 200),
                st.integers(0, 400),
                st.integers(-5, 30),
            ),
            max_size=50,
        ),
    )
    @settings(max_examples=100, deadline=None)
    def test_subset_and_idempotence(self, min_impr, want_reply, rows):
        pool = [
            obs(post_id=f"o{i}", is_reply=r, dl=dl, di=di, dr=dr)
            for i, (r, dl, di, dr) in enumerate(rows)
        ]
        f = AnalysisFilter(
            thread_position="reply" if want_reply else "original",
            min_delta_impressions=min_impr,
        )
        once = filter_observations(pool, f)
        assert set(o.post_id for o in once) <= set(o.post_id for o in pool)
        assert filter_observations(once, f) == once


def compare_groups_brute_force(all_obs, f, metric, seed, resamples=4000):
    """Separate straight-line reimplementation used as the oracle."""
    rows = []
    for o in all_obs:
        if o.is_reply != (f.thread_position == "reply"):
            continue
        if metric == "engagement" and o.delta_likes < 0:
            continue
        if metric == "reply_ratio" and o.delta_replies < 0:
            continue
        if o.delta_impressions < f.min_delta_impressions:
            continue
        value = (
            o.delta_likes / o.delta_impressions
            if metric == "engagement"
            else o.delta_replies / o.delta_impressions
        )
        rows.append((o.arm, value))
    cg = [v for a, v in rows if a == "control"]
    eg = [v for a, v in rows if a == "experimental"]
    cg_mean = sum(cg) / len(cg)
    eg_mean = sum(eg) / len(eg)
    va = sum((x - cg_mean) ** 2 for x in cg) / (len(cg) - 1)
    vb = sum((x - eg_mean) ** 2 for x in eg) / (len(eg) - 1)
    se2 = va / len(cg) + vb / len(eg)
    t = (cg_mean - eg_mean) / math.sqrt(se2)
    df = se2**2 / (
        (va / len(cg)) ** 2 / (len(cg) - 1) + (vb / len(eg)) ** 2 / (len(eg) - 1)
    )
    p_t = 2 * sp_stats.t.sf(abs(t), df)
    return cg_mean, eg_mean, p_t


class TestCompareGroups:
    def random_observations(self, seed, n=60):
        rng = np.random.default_rng(seed)
        out = []
        for i in range(n):
            out.append(
                obs(
                    post_id=f"o{i}",
                    arm="control" if rng.random() < 0.5 else "experimental",
                    is_reply=bool(rng.integers(0, 2)),
                    dl=int(rng.integers(0, 60)),
                    di=int(rng.integers(10, 4000)),
                    dr=int(rng.integers(0, 25)),
                )
            )
        return out

    def test_matches_brute_force_twin(self):
        for seed in range(6):
            all_obs = self.random_observations(seed, n=80)
            f = AnalysisFilter(thread_position="original", min_delta_impressions=10)
            try:
                mine = compare_groups(all_obs, f, "engagement", rng=1, resamples=500)
            except InsufficientDataError:
                continue
            cg_mean, eg_mean, p_t = compare_groups_brute_force(
                all_obs, f, "engagement", seed
            )
            assert abs(mine.cg_mean - cg_mean) < 1e-12
            assert abs(mine.eg_mean - eg_mean) < 1e-12
            assert abs(mine.p_t_test - p_t) < 1e-9

    def test_identical_arms_give_zero_diff_and_p_one(self):
        ratios = [0.01, 0.02, 0.03, 0.04]
        all_obs = observations_from_ratios(ratios, "control") + observations_from_ratios(
            ratios, "experimental"
        )
        result = compare_groups(all_obs, AnalysisFilter(thread_position="original"), "engagement", rng=0, resamples=100)
        assert result.diff_pct_of_cg == 0.0
        assert result.p_t_test == 1.0

    def test_single_observation_arm_is_insufficient(self):
        all_obs = observations_from_ratios([0.01], "control") + observations_from_ratios(
            [0.02, 0.03], "experimental"
        )
        with pytest.raises(InsufficientDataError):
            compare_groups(all_obs, AnalysisFilter(thread_position="original"), "engagement")

    def test_constructed_means_recover_paper_style_diff(self):
        rng = np.random.default_rng(99)
        cg = 0.0346 + rng.normal(0, 0.004, 40)
        eg = 0.0266 + rng.normal(0, 0.004, 40)
        cg = cg - cg.mean() + 0.0346
        eg = eg - eg.mean() + 0.0266
        all_obs = observations_from_ratios(cg, "control") + observations_from_ratios(
            eg, "experimental"
        )
        result = compare_groups(
            all_obs,
            AnalysisFilter(thread_position="original", min_delta_impressions=10),
            "engagement",
            rng=5,
        )
        assert result.diff_pct_of_cg == pytest.approx(-23.12, abs=0.5)
        assert result.p_bootstrap < 0.01
        assert result.bootstrap_tail == "lower"

    def test_scale_equivariance(self):
        all_obs = self.random_observations(3)
        f = AnalysisFilter(thread_position="original", min_delta_impressions=10)
        base = compare_groups(all_obs, f, "engagement", rng=7, resamples=800)
        scaled_obs = [
            obs(
                post_id=o.post_id,
                arm=o.arm,
                is_reply=o.is_reply,
                dl=o.delta_likes * 8,
                di=o.delta_impressions * 8,
                dr=o.delta_replies * 8,
            )
            for o in all_obs
        ]
        scaled = compare_groups(scaled_obs, f, "engagement", rng=7, resamples=800)
        # deltas scale by 8 but the ratios are unchanged, so everything matches
        assert scaled.cg_mean == base.cg_mean
        assert scaled.eg_mean == base.eg_mean
        assert scaled.p_bootstrap == base.p_bootstrap
        assert scaled.p_t_test == pytest.approx(base.p_t_test, rel=1e-12)


class TestPercentileTable:
    def test_single_observation(self):
        table = percentile_table([obs(dl=4, di=44)])
        summary = table["control"]["likes_change"]
        assert set(summary.values()) == {4}

    def test_min_row_respects_impression_filter(self):
        pool = [obs(post_id=f"o{i}", di=10 + i, dl=i) for i in range(20)]
        f = AnalysisFilter(thread_position="original", min_delta_impressions=10)
        table = percentile_table(filter_observations(pool, f))
        assert table["control"]["impressions_change"]["min"] >= 10

    def test_empty_rejected(self):
        with pytest.raises(InsufficientDataError):
            percentile_table([])


class TestLinkImpact:
    def test_all_links_is_insufficient(self):
        pool = observations_from_ratios([0.01, 0.02, 0.03], "experimental", has_link=True)
        with pytest.raises(InsufficientDataError):
            link_impact(pool, AnalysisFilter(thread_position="original"))

    def test_constructed_24_percent_lift_recovered(self):
        rng = np.random.default_rng(4)
        base = 0.01 + rng.normal(0, 0.001, 30)
        base = base - base.mean() + 0.01
        lifted = base * 1.24
        pool = observations_from_ratios(
            base, "experimental", has_link=False
        ) + [
            obs(
                post_id=f"link-{i}",
                arm="experimental",
                dr=round(r * 10_000),
                di=10_000,
                has_link=True,
            )
            for i, r in enumerate(lifted)
        ]
        result = link_impact(
            pool, AnalysisFilter(thread_position="original", min_delta_impressions=10), rng=2
        )
        assert result.diff_pct_of_cg == pytest.approx(24.0, abs=1.0)
        assert result.bootstrap_tail == "upper"

    def test_identical_strata_give_zero_diff(self):
        ratios = [0.01, 0.02, 0.03]
        pool = observations_from_ratios(
            ratios, "experimental", has_link=False
        ) + [
            obs(
                post_id=f"link-{i}",
                arm="experimental",
                dr=round(r * 10_000),
                di=10_000,
                has_link=True,
            )
            for i, r in enumerate(ratios)
        ]
        result = link_impact(pool, AnalysisFilter(thread_position="original"), rng=0, resamples=100)
        assert result.diff_pct_of_cg == 0.0


class TestFirstReplyShare:
    def test_all_first(self):
        pool = observations_from_ratios([0.01, 0.02], "experimental", first=True)
        assert first_reply_share(pool, AnalysisFilter(thread_position="original")) == 1.0

    def test_none_first(self):
        pool = observations_from_ratios([0.01, 0.02], "experimental")
        assert first_reply_share(pool, AnalysisFilter(thread_position="original")) == 0.0

    def test_planted_39_percent_exact(self):
        pool = [
            obs(post_id=f"e{i}", arm="experimental", di=100, first=(i < 39))
            for i in range(100)
        ]
        assert first_reply_share(pool, AnalysisFilter(thread_position="original")) == 0.39

    def test_empty_stratum_rejected(self):
        with pytest.raises(InsufficientDataError):
            first_reply_share([], AnalysisFilter(thread_position="original"))


class TestBootstrapDirectionInContext:
    def test_reply_ratio_footnote_property(self):
        # When the experimental mean exceeds every control resample mean, the
        # upper-tail resampling p-value is exactly zero.
        control = [0.001, 0.002, 0.003, 0.004]
        assert bootstrap_p(control, 0.02, resamples=2000, rng=3, tail="upper") == 0.0
