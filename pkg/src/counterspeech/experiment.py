"""A/B protocol orchestration: scheduled classification windows, recency and
night-time rules, fair-coin arm assignment, and the snapshot lifecycle around
the 6-day monitoring period.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from dataclasses import replace as dc_replace
from datetime import datetime, time, timedelta
from pathlib import Path
from zoneinfo import ZoneInfo

import numpy as np

from .classifier import HateSpeechClassifier
from .clock import ensure_utc
from .embeddings import EmbeddingProvider, embed
from .errors import (
    DuplicateAssignmentError,
    InvalidInputError,
    InvariantViolationError,
    LengthViolationError,
    NotYetDueError,
    ScheduleError,
    TransientGenerationError,
)
from .models import (
    Article,
    ExperimentAssignment,
    MetricsSnapshot,
    PostRecord,
    QuerySpec,
)
from .ingest import fetch_recent
from .responder import ResponderConfig, assemble_prompt, generate_reply, rank_articles
from .review import INITIAL_SNAPSHOT_DELAY, ReviewQueue
from .store import Store


@dataclass(frozen=True)
class ScheduleConfig:
    """When the pipeline runs and how long posts are monitored."""

    window_times: tuple[time, ...] = (
        time(10, 0),
        time(14, 0),
        time(18, 0),
        time(22, 0),
    )
    max_age: timedelta = timedelta(hours=4)
    quiet_start: time = time(0, 0)
    quiet_end: time = time(6, 0)
    monitoring_period: timedelta = timedelta(days=6)
    initial_snapshot_delay: timedelta = INITIAL_SNAPSHOT_DELAY
    timezone: str = "Europe/Warsaw"
    window_grace: timedelta = timedelta(minutes=15)
    global_end: datetime | None = None  # fixed end-of-monitoring moment, optional

    def __post_init__(self) -> None:
        if not self.window_times:
            raise InvariantViolationError("at least one window time is required")
        for bad in (self.max_age, self.monitoring_period, self.initial_snapshot_delay):
            if bad <= timedelta(0):
                raise InvariantViolationError("durations must be positive")
        for wt in self.window_times:
            if _in_quiet_hours(wt, self.quiet_start, self.quiet_end):
                raise InvariantViolationError(
                    f"window {wt} falls inside quiet hours"
                )

    @property
    def tz(self) -> ZoneInfo:
        return ZoneInfo(self.timezone)


def _in_quiet_hours(t: time, start: time, end: time) -> bool:
    if start <= end:
        return start <= t < end
    return t >= start or t < end  # interval wraps midnight


def parse_schedule_config(path: str | Path) -> tuple[ScheduleConfig, dict[str, str]]:
    """Read the simple `key = value` config file.

    Returns the schedule plus the remaining raw entries (paths etc.) so the
    CLI can wire stores and clients from the same file.
    """
    entries: dict[str, str] = {}
    for i, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise InvalidInputError(f"{path}:{i}: expected 'key = value'")
        key, _, value = line.partition("=")
        entries[key.strip()] = value.strip()

    def _time(v: str) -> time:
        h, _, m = v.partition(":")
        return time(int(h), int(m or 0))

    kwargs: dict = {}
    if "window_times" in entries:
        kwargs["window_times"] = tuple(
            _time(v) for v in entries.pop("window_times").split(",")
        )
    if "max_age_hours" in entries:
        kwargs["max_age"] = timedelta(hours=float(entries.pop("max_age_hours")))
    if "quiet_start" in entries:
        kwargs["quiet_start"] = _time(entries.pop("quiet_start"))
    if "quiet_end" in entries:
        kwargs["quiet_end"] = _time(entries.pop("quiet_end"))
    if "monitoring_days" in entries:
        kwargs["monitoring_period"] = timedelta(
            days=float(entries.pop("monitoring_days"))
        )
    if "initial_snapshot_delay_minutes" in entries:
        kwargs["initial_snapshot_delay"] = timedelta(
            minutes=float(entries.pop("initial_snapshot_delay_minutes"))
        )
    if "timezone" in entries:
        kwargs["timezone"] = entries.pop("timezone")
    if "window_grace_minutes" in entries:
        kwargs["window_grace"] = timedelta(
            minutes=float(entries.pop("window_grace_minutes"))
        )
    if "global_end" in entries:
        raw = entries.pop("global_end")
        if raw:
            kwargs["global_end"] = ensure_utc(datetime.fromisoformat(raw))
    return ScheduleConfig(**kwargs), entries


class ArmAssigner:
    """Seeded fair coin whose draw sequence is reproducible from the seed.

    The seed and each assignment's sequence number are persisted, so the full
    arm sequence can be audited by replaying the generator.
    """

    def __init__(self, store: Store, seed: int) -> None:
        self._store = store
        self._seed = seed
        stored = store.get_meta("assignment_seed")
        if stored is None:
            store.set_meta("assignment_seed", str(seed))
        elif int(stored) != seed:
            raise InvalidInputError(
                f"store was seeded with {stored}, cannot reseed with {seed}"
            )
        self._rng = random.Random(seed)
        self._seq = len(store.list_assignments())
        for _ in range(self._seq):  # restore generator position after a restart
            self._rng.random()

    @staticmethod
    def arm_sequence(seed: int, n: int) -> list[str]:
        """The first n arms the seed produces; used for the randomization audit."""
        rng = random.Random(seed)
        return ["experimental" if rng.random() < 0.5 else "control" for _ in range(n)]

    def assign(self, post_id: str, now: datetime) -> ExperimentAssignment:
        if self._store.get_assignment(post_id) is not None:
            raise DuplicateAssignmentError(f"post {post_id} is already assigned")
        arm = "experimental" if self._rng.random() < 0.5 else "control"
        assignment = ExperimentAssignment(
            post_id=post_id, arm=arm, assigned_at=ensure_utc(now), seq=self._seq
        )
        self._store.save_assignment(assignment)
        self._seq += 1
        return assignment


def assign_group(store: Store, post_id: str, rng: random.Random, now: datetime) -> str:
    """One-off fair-coin assignment with the caller's generator.

    Prefer ArmAssigner for runs; this exists for scripted/manual flows.
    """
    if store.get_assignment(post_id) is not None:
        raise DuplicateAssignmentError(f"post {post_id} is already assigned")
    arm = "experimental" if rng.random() < 0.5 else "control"
    seq = len(store.list_assignments())
    store.save_assignment(
        ExperimentAssignment(post_id=post_id, arm=arm, assigned_at=ensure_utc(now), seq=seq)
    )
    return arm


@dataclass
class WindowSummary:
    fetched: int = 0
    classified_harmful: int = 0
    assigned_exp: int = 0
    assigned_ctrl: int = 0
    generation_failures: int = 0
    skipped_already_assigned: int = 0
    failure_posts: list[str] = field(default_factory=list)


class ExperimentRunner:
    """Drives one experiment: fetch, classify, assign, generate, review,
    snapshot. All state lives in the store, so runs can stop and resume."""

    def __init__(
        self,
        store: Store,
        source,
        classifier: HateSpeechClassifier,
        provider: EmbeddingProvider,
        articles: list[Article],
        responder_config: ResponderConfig,
        generation_client,
        query_spec: QuerySpec,
        schedule: ScheduleConfig,
        seed: int,
    ) -> None:
        self.store = store
        self.source = source
        self.classifier = classifier
        self.provider = provider
        self.articles = articles
        self.responder_config = responder_config
        self.generation_client = generation_client
        self.query_spec = query_spec
        self.schedule = schedule
        self.assigner = ArmAssigner(store, seed)
        self.queue = ReviewQueue(store, article_urls={a.url for a in articles})

    # -- schedule gates -----------------------------------------------------

    def _check_schedule(self, now: datetime) -> None:
        local = ensure_utc(now).astimezone(self.schedule.tz)
        if _in_quiet_hours(local.time(), self.schedule.quiet_start, self.schedule.quiet_end):
            raise ScheduleError(
                f"{local.time()} local is inside quiet hours"
                f" ({self.schedule.quiet_start}-{self.schedule.quiet_end})"
            )
        for wt in self.schedule.window_times:
            window_start = local.replace(
                hour=wt.hour, minute=wt.minute, second=0, microsecond=0
            )
            if window_start <= local < window_start + self.schedule.window_grace:
                return
        raise ScheduleError(
            f"{local.time()} local is not within any configured window"
        )

    # -- main pipeline ----------------------------------------------------------

    def run_window(self, now: datetime) -> WindowSummary:
        """One scheduled window end-to-end.

        Posts already assigned in an earlier window are skipped before
        classification counting, so per-window counts always satisfy
        assigned_exp + assigned_ctrl = classified_harmful.
        """
        now = ensure_utc(now)
        self._check_schedule(now)
        summary = WindowSummary()

        fetched = fetch_recent(self.source, self.query_spec, now, self.schedule.max_age)
        summary.fetched = len(fetched)
        self.store.persist(
            [p for p, _ in fetched], [s for _, s in fetched]
        )

        for post, _snap in fetched:
            if self.store.get_assignment(post.post_id) is not None:
                summary.skipped_already_assigned += 1
                continue
            vector = embed(post.text, self.provider)
            prob = float(self.classifier.predict_proba(vector.reshape(1, -1))[0])
            if prob < self.classifier.threshold_:
                continue
            summary.classified_harmful += 1
            assignment = self.assigner.assign(post.post_id, now)
            if assignment.arm == "experimental":
                summary.assigned_exp += 1
                if not self._generate_and_enqueue(post, vector, now):
                    summary.generation_failures += 1
                    summary.failure_posts.append(post.post_id)
            else:
                summary.assigned_ctrl += 1
                self.queue.enqueue_control(post, now)
                self.store.schedule_snapshot(
                    post.post_id, now + self.schedule.initial_snapshot_delay, "initial"
                )
        return summary

    def _generate_and_enqueue(
        self, post: PostRecord, vector: np.ndarray, now: datetime
    ) -> bool:
        """Returns False when generation failed; the assignment then stays
        flagged unposted so the audit trail keeps the randomization intact."""
        try:
            ranked = rank_articles(vector, self.articles)
            prompt = assemble_prompt(post.text, ranked, self.responder_config)
            reply = generate_reply(
                prompt,
                self.generation_client,
                post.post_id,
                self.responder_config,
                now,
                {a.url for a in self.articles},
            )
            self.queue.enqueue(reply, post, now)
            return True
        except (TransientGenerationError, LengthViolationError):
            assignment = self.store.get_assignment(post.post_id)
            if assignment is not None:
                self.store.update_assignment(dc_replace(assignment, unposted=True))
            return False

    # -- snapshots ------------------------------------------------------------------

    def process_due_snapshots(self, now: datetime) -> int:
        """Fetch metrics for every snapshot task that has come due."""
        now = ensure_utc(now)
        processed = 0
        for task in self.store.due_snapshot_tasks(now):
            metrics = self.source.metrics_at(task.post_id, now)
            if metrics is not None:
                self.store.append_snapshot(metrics)
                assignment = self.store.get_assignment(task.post_id)
                if (
                    assignment is not None
                    and task.kind == "initial"
                    and assignment.initial_snapshot_at is None
                ):
                    self.store.update_assignment(
                        dc_replace(assignment, initial_snapshot_at=metrics.taken_at)
                    )
            self.store.complete_snapshot_task(task.task_id)
            processed += 1
        return processed

    def final_snapshot_due_at(self, assignment: ExperimentAssignment) -> datetime:
        if self.schedule.global_end is not None:
            return self.schedule.global_end
        baseline = assignment.initial_snapshot_at or assignment.assigned_at
        return baseline + self.schedule.monitoring_period

    def snapshot_final(
        self, assignment: ExperimentAssignment, now: datetime
    ) -> ExperimentAssignment:
        """Freeze end-of-monitoring metrics for one assignment.

        A post that disappeared from the platform is flagged deleted and gets
        no final snapshot; downstream analysis drops it.
        """
        now = ensure_utc(now)
        due = self.final_snapshot_due_at(assignment)
        if now < due:
            raise NotYetDueError(
                f"final snapshot for {assignment.post_id} is due at {due.isoformat()}"
            )
        if assignment.final_snapshot_at is not None:
            return assignment
        metrics = self.source.metrics_at(assignment.post_id, now)
        if metrics is None:
            updated = dc_replace(assignment, deleted=True)
            self.store.update_assignment(updated)
            return updated
        self.store.append_snapshot(metrics)
        if assignment.posted_reply_id is not None:
            reply_metrics = self.source.metrics_at(assignment.posted_reply_id, now)
            if reply_metrics is not None:
                self.store.append_snapshot(reply_metrics)
        updated = dc_replace(assignment, final_snapshot_at=metrics.taken_at)
        self.store.update_assignment(updated)
        return updated

    def snapshot_all_due_finals(self, now: datetime) -> int:
        count = 0
        for assignment in self.store.list_assignments():
            if assignment.final_snapshot_at is not None or assignment.deleted:
                continue
            try:
                self.snapshot_final(assignment, now)
                count += 1
            except NotYetDueError:
                continue
        return count

    def status(self) -> dict:
        assignments = self.store.list_assignments()
        pending = self.store.list_review_items(state="pending")
        return {
            "assignments_total": len(assignments),
            "experimental": sum(1 for a in assignments if a.arm == "experimental"),
            "control": sum(1 for a in assignments if a.arm == "control"),
            "posted": sum(1 for a in assignments if a.posted_reply_id is not None),
            "unposted_flagged": sum(1 for a in assignments if a.unposted),
            "removed": sum(1 for a in assignments if a.removed_at is not None),
            "deleted": sum(1 for a in assignments if a.deleted),
            "final_snapshots": sum(
                1 for a in assignments if a.final_snapshot_at is not None
            ),
            "pending_reviews": len(pending),
        }


def saturation_check(
    history: list[MetricsSnapshot], threshold_fraction: float
) -> bool:
    """Diagnostic behind the 4-hour recency rule.

    `history` must end with the end-of-monitoring snapshot; the check asks
    whether the most recent earlier observation had already accumulated
    `threshold_fraction` of those final impressions. With a single snapshot
    the latest observation *is* the final one, so the post counts as
    saturated trivially.
    """
    if not history:
        raise InvalidInputError("history must be nonempty")
    ordered = list(history)
    for a, b in zip(ordered, ordered[1:]):
        if a.taken_at > b.taken_at:
            raise InvalidInputError("history must be ordered by taken_at")
    final = ordered[-1].impressions
    latest = ordered[-2].impressions if len(ordered) >= 2 else ordered[-1].impressions
    return latest >= threshold_fraction * final

