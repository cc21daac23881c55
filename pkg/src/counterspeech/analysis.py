"""Engagement and reply-ratio analysis over assignment snapshots.

Observations are per-post deltas between the initial (15 minutes after
intervention) and final (end of monitoring) snapshots. Group comparisons
report both Welch's t-test and a resampling p-value; anomalous posts (counter
decreases, i.e. unlikes or deleted replies) are excluded before filtering by
stratum.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ExcludedObservationError, InsufficientDataError, InvalidInputError
from .models import AnalysisFilter, Observation, TestResult
from .stats import Tail, bootstrap_p, nearest_rank_percentiles, welch_t
from .store import Store

METRICS = ("engagement", "reply_ratio")

# Hypothesized direction per metric: interventions should push engagement
# down and the reply ratio up, so those are the tails the resampling test
# reports. Recorded on every TestResult.
METRIC_TAILS: dict[str, Tail] = {"engagement": "lower", "reply_ratio": "upper"}


def engagement(obs: Observation) -> float:
    """Likes change per impression change."""
    if obs.delta_impressions < 1:
        raise ExcludedObservationError(
            f"post {obs.post_id}: no impression change to normalize by"
        )
    if obs.delta_likes < 0:
        raise ExcludedObservationError(
            f"post {obs.post_id}: negative like change (unliked during monitoring)"
        )
    return obs.delta_likes / obs.delta_impressions


def reply_ratio(obs: Observation) -> float:
    """Third-party reply change per impression change (bot reply excluded
    by snapshot timing)."""
    if obs.delta_impressions < 1:
        raise ExcludedObservationError(
            f"post {obs.post_id}: no impression change to normalize by"
        )
    if obs.delta_replies < 0:
        raise ExcludedObservationError(
            f"post {obs.post_id}: negative reply change (replies deleted)"
        )
    return obs.delta_replies / obs.delta_impressions


def metric_fn(metric: str):
    if metric == "engagement":
        return engagement
    if metric == "reply_ratio":
        return reply_ratio
    raise InvalidInputError(f"metric must be one of {METRICS}, got {metric!r}")


def filter_observations(
    all_obs: list[Observation],
    f: AnalysisFilter,
    anomaly_rule: str | None = "engagement",
) -> list[Observation]:
    """Stratum selection: thread position, minimum impression change
    (inclusive), and the metric's anomaly exclusion.

    Anomalies are dropped regardless of the impression filter: negative like
    changes for engagement analyses, negative reply changes for reply
    analyses, None for share-style analyses.
    """
    want_reply = f.thread_position == "reply"
    out = []
    for obs in all_obs:
        if obs.is_reply != want_reply:
            continue
        if anomaly_rule == "engagement" and obs.delta_likes < 0:
            continue
        if anomaly_rule == "replies" and obs.delta_replies < 0:
            continue
        if obs.delta_impressions < f.min_delta_impressions:
            continue
        out.append(obs)
    return out


_ANOMALY_RULE = {"engagement": "engagement", "reply_ratio": "replies"}


def compare_groups(
    all_obs: list[Observation],
    f: AnalysisFilter,
    metric: str,
    rng: np.random.Generator | int | None = None,
    resamples: int = 10_000,
    tail: Tail | None = None,
) -> TestResult:
    """Control vs experimental means with Welch and resampling p-values."""
    fn = metric_fn(metric)
    tail = tail or METRIC_TAILS[metric]
    filtered = filter_observations(all_obs, f, anomaly_rule=_ANOMALY_RULE[metric])
    cg = [fn(o) for o in filtered if o.arm == "control"]
    eg = [fn(o) for o in filtered if o.arm == "experimental"]
    if len(cg) < 2 or len(eg) < 2:
        raise InsufficientDataError(
            f"need at least 2 observations per arm, got cg={len(cg)} eg={len(eg)}"
        )
    cg_mean = float(np.mean(cg))
    eg_mean = float(np.mean(eg))
    diff_pct = (
        (eg_mean - cg_mean) / cg_mean * 100.0 if cg_mean != 0.0 else math.nan
    )
    p_t = welch_t(cg, eg).p
    p_b = bootstrap_p(cg, eg_mean, resamples=resamples, rng=rng, tail=tail)
    return TestResult(
        cg_mean=cg_mean,
        eg_mean=eg_mean,
        diff_pct_of_cg=diff_pct,
        p_t_test=p_t,
        p_bootstrap=p_b,
        n_cg=len(cg),
        n_eg=len(eg),
        bootstrap_tail=tail,
        metric=metric,
        label=f"{f.thread_position}, min {f.min_delta_impressions} dImpr",
    )


def percentile_table(obs: list[Observation]) -> dict[str, dict[str, dict[str, float]]]:
    """Nearest-rank min/25/50/75/max of likes and impressions changes, per arm."""
    if not obs:
        raise InsufficientDataError("no observations to summarize")
    table: dict[str, dict[str, dict[str, float]]] = {}
    for arm in ("experimental", "control"):
        arm_obs = [o for o in obs if o.arm == arm]
        if not arm_obs:
            continue
        table[arm] = {
            "likes_change": nearest_rank_percentiles([o.delta_likes for o in arm_obs]),
            "impressions_change": nearest_rank_percentiles(
                [o.delta_impressions for o in arm_obs]
            ),
        }
    return table


def link_impact(
    obs_exp: list[Observation],
    f: AnalysisFilter,
    rng: np.random.Generator | int | None = None,
    resamples: int = 10_000,
) -> TestResult:
    """Reply ratio of link-backed replies vs link-free ones, within the
    experimental arm.

    Reuses the group-comparison machinery with the link-free stratum in the
    control slot, so diff_pct reads "linked vs unlinked".
    """
    filtered = filter_observations(
        [o for o in obs_exp if o.arm == "experimental"], f, anomaly_rule="replies"
    )
    linked = [reply_ratio(o) for o in filtered if o.has_link]
    unlinked = [reply_ratio(o) for o in filtered if not o.has_link]
    if len(linked) < 2 or len(unlinked) < 2:
        raise InsufficientDataError(
            f"need both link strata, got linked={len(linked)} unlinked={len(unlinked)}"
        )
    base_mean = float(np.mean(unlinked))
    link_mean = float(np.mean(linked))
    diff_pct = (
        (link_mean - base_mean) / base_mean * 100.0 if base_mean != 0.0 else math.nan
    )
    return TestResult(
        cg_mean=base_mean,
        eg_mean=link_mean,
        diff_pct_of_cg=diff_pct,
        p_t_test=welch_t(unlinked, linked).p,
        p_bootstrap=bootstrap_p(
            unlinked, link_mean, resamples=resamples, rng=rng, tail="upper"
        ),
        n_cg=len(unlinked),
        n_eg=len(linked),
        bootstrap_tail="upper",
        metric="reply_ratio",
        label=f"link impact ({f.thread_position}, min {f.min_delta_impressions} dImpr)",
    )


def first_reply_share(obs_exp: list[Observation], f: AnalysisFilter) -> float:
    """Fraction of experimental interventions that opened the discussion."""
    filtered = filter_observations(
        [o for o in obs_exp if o.arm == "experimental"], f, anomaly_rule=None
    )
    if not filtered:
        raise InsufficientDataError("no experimental observations in this stratum")
    return sum(1 for o in filtered if o.was_first_reply) / len(filtered)


# -- building observations from the store ------------------------------------


def build_observations(store: Store) -> list[Observation]:
    """Turn completed assignments into observations.

    Skips assignments that were removed in review (false positives and other
    rejections), flagged unposted, deleted on the platform, or that lack
    either snapshot. `was_first_reply` uses the detection-time snapshot,
    which predates the bot's reply.
    """
    reply_by_target: dict[str, str] = {}
    for posting in store.list_postings():
        reply_by_target[posting.target_post_id] = posting.reply_id

    out: list[Observation] = []
    for a in store.list_assignments():
        if a.removed_at is not None or a.deleted or a.unposted:
            continue
        if a.initial_snapshot_at is None or a.final_snapshot_at is None:
            continue
        if a.arm == "experimental" and a.posted_reply_id is None:
            continue
        initial = store.snapshot_at(a.post_id, a.initial_snapshot_at)
        final = store.snapshot_at(a.post_id, a.final_snapshot_at)
        post = store.get_post(a.post_id)
        if initial is None or final is None or post is None:
            continue
        has_link = False
        was_first = False
        if a.arm == "experimental":
            reply_id = reply_by_target.get(a.post_id)
            if reply_id is not None:
                reply = store.get_reply(reply_id)
                has_link = bool(reply and reply.cited_urls)
            detection = store.snapshots_for(a.post_id)[0]
            was_first = detection.replies == 0
        out.append(
            Observation(
                post_id=a.post_id,
                arm=a.arm,
                is_reply=post.is_reply,
                delta_likes=final.likes - initial.likes,
                delta_impressions=final.impressions - initial.impressions,
                delta_replies=final.replies - initial.replies,
                has_link=has_link,
                was_first_reply=was_first,
            )
        )
    return out


# -- report rendering -------------------------------------------------------------


def result_to_dict(result: TestResult, seed: int | None, resamples: int) -> dict:
    return {
        "label": result.label,
        "metric": result.metric,
        "cg_mean": result.cg_mean,
        "eg_mean": result.eg_mean,
        "diff_pct_of_cg": None
        if math.isnan(result.diff_pct_of_cg)
        else result.diff_pct_of_cg,
        "p_t_test": result.p_t_test,
        "p_bootstrap": result.p_bootstrap,
        "n_cg": result.n_cg,
        "n_eg": result.n_eg,
        "bootstrap": {
            "tail": result.bootstrap_tail,
            "resamples": resamples,
            "seed": seed,
        },
    }


def render_results_text(results: list[TestResult]) -> str:
    headers = ["set", "CG mean", "EG mean", "diff (%CG)", "p (t-test)", "p (bstr)", "n CG", "n EG"]
    rows = []
    for r in results:
        diff = "n/a" if math.isnan(r.diff_pct_of_cg) else f"{r.diff_pct_of_cg:+.1f}%"
        rows.append(
            [
                r.label,
                f"{r.cg_mean:.4f}",
                f"{r.eg_mean:.4f}",
                diff,
                f"{r.p_t_test:.4g}",
                f"{r.p_bootstrap:.4g}",
                str(r.n_cg),
                str(r.n_eg),
            ]
        )
    widths = [max(len(h), *(len(row[i]) for row in rows)) if rows else len(h) for i, h in enumerate(headers)]
    lines = [
        "  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)),
        "  ".join("-" * widths[i] for i in range(len(headers))),
    ]
    for row in rows:
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)))
    return "\n".join(lines)


def render_percentiles_text(table: dict[str, dict[str, dict[str, float]]]) -> str:
    lines = ["percentile  EG likes  CG likes  EG impr   CG impr"]
    for key, label in (("min", "min"), ("p25", "25%"), ("p50", "50%"), ("p75", "75%"), ("max", "max")):
        cells = [label.ljust(10)]
        for field in ("likes_change", "impressions_change"):
            for arm in ("experimental", "control"):
                value = table.get(arm, {}).get(field, {}).get(key)
                cells.append(("-" if value is None else f"{value:g}").ljust(9))
        lines.append(" ".join(cells).rstrip())
    return "\n".join(lines)
