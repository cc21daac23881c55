"""Domain records shared across the pipeline and persisted by the store."""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timedelta

from .clock import ensure_utc
from .errors import InvariantViolationError

REPLY_CHAR_LIMIT = 200
REVIEW_DEADLINE = timedelta(minutes=45)

REJECTION_CODES = (
    "not_harmful_false_positive",
    "low_quality",
    "off_topic",
    "hallucination",
    "article_mismatch",
    "controversial",
)

ARMS = ("experimental", "control")

REVIEW_STATES = ("pending", "approved", "rejected", "expired")


def to_iso(ts: datetime) -> str:
    return ensure_utc(ts).isoformat(timespec="microseconds")


def from_iso(raw: str) -> datetime:
    return ensure_utc(datetime.fromisoformat(raw))


@dataclass(frozen=True)
class PostRecord:
    """A platform post: thread root or reply, with its author and text."""

    post_id: str
    author_id: str
    text: str
    created_at: datetime
    is_reply: bool
    parent_id: str | None = None
    language_tag: str = "pl"

    def __post_init__(self) -> None:
        object.__setattr__(self, "created_at", ensure_utc(self.created_at))
        if self.is_reply != (self.parent_id is not None):
            raise InvariantViolationError(
                f"post {self.post_id}: is_reply must match presence of parent_id"
            )


@dataclass(frozen=True)
class MetricsSnapshot:
    """Public-metric counters for one post at one instant."""

    post_id: str
    taken_at: datetime
    likes: int
    impressions: int
    replies: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "taken_at", ensure_utc(self.taken_at))
        for name in ("likes", "impressions", "replies"):
            if getattr(self, name) < 0:
                raise InvariantViolationError(f"snapshot counter {name} is negative")


@dataclass(frozen=True)
class CandidateReply:
    """A generated counter-speech reply awaiting review.

    `retrieval_scores` is (article title, cosine similarity), best first;
    `cited_urls` are article-store URLs found verbatim in the text.
    """

    reply_id: str
    target_post_id: str
    text: str
    cited_urls: tuple[str, ...]
    retrieval_scores: tuple[tuple[str, float], ...]
    generation_cost_usd: float
    created_at: datetime

    def __post_init__(self) -> None:
        object.__setattr__(self, "created_at", ensure_utc(self.created_at))
        object.__setattr__(self, "cited_urls", tuple(self.cited_urls))
        object.__setattr__(
            self, "retrieval_scores", tuple((t, float(s)) for t, s in self.retrieval_scores)
        )
        validate_reply_invariants(self)


def validate_reply_invariants(
    reply: CandidateReply, valid_urls: set[str] | None = None
) -> None:
    """Raise unless the reply honors the character, cost and ordering rules.

    URL membership is only checkable against an article store, so it runs
    when `valid_urls` is supplied (always the case on the persistence path).
    """
    if len(reply.text) > REPLY_CHAR_LIMIT:
        raise InvariantViolationError(
            f"reply {reply.reply_id} has {len(reply.text)} characters,"
            f" limit is {REPLY_CHAR_LIMIT}"
        )
    if reply.generation_cost_usd < 0:
        raise InvariantViolationError("generation cost cannot be negative")
    scores = [s for _, s in reply.retrieval_scores]
    if any(a < b for a, b in zip(scores, scores[1:])):
        raise InvariantViolationError("retrieval scores must be sorted descending")
    if valid_urls is not None:
        unknown = [u for u in reply.cited_urls if u not in valid_urls]
        if unknown:
            raise InvariantViolationError(f"cited urls not in article store: {unknown}")


@dataclass(frozen=True)
class ReviewItem:
    """One entry in the human review queue.

    Experimental items carry the generated reply; control items only ask the
    reviewer to confirm the target really is harmful (`reply_id` is None) and
    are never posted.
    """

    item_id: str
    target_post_id: str
    kind: str  # "experimental" | "control"
    enqueued_at: datetime
    deadline: datetime
    state: str
    reply_id: str | None = None
    decided_at: datetime | None = None
    reviewer: str | None = None
    reason_code: str | None = None
    reason_note: str | None = None

    def __post_init__(self) -> None:
        if self.state not in REVIEW_STATES:
            raise InvariantViolationError(f"unknown review state {self.state!r}")
        if self.kind not in ("experimental", "control"):
            raise InvariantViolationError(f"unknown review kind {self.kind!r}")
        if self.deadline - self.enqueued_at != REVIEW_DEADLINE:
            raise InvariantViolationError("deadline must be enqueue time + 45 minutes")
        if self.reason_code is not None and self.reason_code not in REJECTION_CODES:
            raise InvariantViolationError(f"unknown rejection code {self.reason_code!r}")


@dataclass(frozen=True)
class ExperimentAssignment:
    """Arm assignment and lifecycle flags for one detected harmful post."""

    post_id: str
    arm: str
    assigned_at: datetime
    seq: int  # position in the seeded assignment sequence, for the audit trail
    initial_snapshot_at: datetime | None = None
    final_snapshot_at: datetime | None = None
    posted_reply_id: str | None = None
    unposted: bool = False
    deleted: bool = False
    removed_at: datetime | None = None
    removal_code: str | None = None

    def __post_init__(self) -> None:
        if self.arm not in ARMS:
            raise InvariantViolationError(f"unknown arm {self.arm!r}")
        if self.arm == "control" and self.posted_reply_id is not None:
            raise InvariantViolationError("control-arm posts never carry a posted reply")


@dataclass(frozen=True)
class Posting:
    """Record of the single time an approved reply was sent to the platform."""

    item_id: str
    reply_id: str
    target_post_id: str
    posted_reply_id: str
    posted_at: datetime


@dataclass
class SnapshotTask:
    """A metrics fetch scheduled for a fixed time (initial or final)."""

    task_id: int
    post_id: str
    due_at: datetime
    kind: str  # "initial" | "final"
    done: bool = False


@dataclass(frozen=True)
class QuerySpec:
    """Search terms plus retweet/language markers for the platform query."""

    terms: tuple[str, ...]
    exclude_retweets: bool = True
    language: str = "pl"

    def __post_init__(self) -> None:
        object.__setattr__(self, "terms", tuple(self.terms))


@dataclass(frozen=True)
class Article:
    """A verified source article with its cached embedding."""

    title: str
    last_update: str  # ISO date
    category: str
    url: str
    text: str
    summary: str
    embedding: tuple[float, ...] | None = None

    categories = (
        "Benefits and Allowances",
        "Expenditures and Costs",
        "Statistical Data",
        "Military Activities",
        "Opinions and Analysis",
        "Current News",
        "Others",
    )

    def __post_init__(self) -> None:
        if not self.url:
            raise InvariantViolationError("article url must be nonempty")
        if self.category not in self.categories:
            raise InvariantViolationError(f"unknown article category {self.category!r}")
        if self.embedding is not None:
            object.__setattr__(self, "embedding", tuple(float(v) for v in self.embedding))


@dataclass(frozen=True)
class Observation:
    """Per-post metric deltas between the initial and final snapshots.

    The initial snapshot is taken 15 minutes after the intervention (or
    assignment, for control posts), so a posted bot reply is already counted
    in both endpoints and cancels out of `delta_replies`.
    """

    post_id: str
    arm: str
    is_reply: bool
    delta_likes: int
    delta_impressions: int
    delta_replies: int
    has_link: bool = False
    was_first_reply: bool = False

    def __post_init__(self) -> None:
        if self.arm not in ARMS:
            raise InvariantViolationError(f"unknown arm {self.arm!r}")


@dataclass(frozen=True)
class AnalysisFilter:
    """Stratum selector: thread position and minimum impression change."""

    thread_position: str  # "original" | "reply"
    min_delta_impressions: int = 10

    def __post_init__(self) -> None:
        if self.thread_position not in ("original", "reply"):
            raise InvariantViolationError(
                f"thread_position must be 'original' or 'reply', got {self.thread_position!r}"
            )
        if self.min_delta_impressions < 1:
            raise InvariantViolationError("min_delta_impressions must be >= 1")


@dataclass(frozen=True)
class TestResult:
    """Group comparison: means, relative difference and both p-values."""

    cg_mean: float
    eg_mean: float
    diff_pct_of_cg: float
    p_t_test: float
    p_bootstrap: float
    n_cg: int
    n_eg: int
    bootstrap_tail: str = "lower"
    metric: str = ""
    label: str = ""
