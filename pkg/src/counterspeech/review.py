"""Mandatory human review gate.

Every generated reply waits here for an approve/reject decision under a
45-minute deadline; control-arm targets get a lighter item that only asks
"is this actually harmful?". Nothing is ever posted without a recorded
approval, and expired items are dead forever.
"""

from __future__ import annotations

from dataclasses import dataclass
from dataclasses import replace as dc_replace
from datetime import datetime, timedelta
from typing import Callable, Collection

from .clock import ensure_utc
from .errors import (
    AlreadyDecidedError,
    ExpiredItemError,
    InvalidInputError,
    InvalidStateError,
    StoreIntegrityError,
)
from .models import (
    REJECTION_CODES,
    REVIEW_DEADLINE,
    CandidateReply,
    Posting,
    PostRecord,
    ReviewItem,
    validate_reply_invariants,
)
from .store import Store

INITIAL_SNAPSHOT_DELAY = timedelta(minutes=15)

CONTROL_ALLOWED_CODES = ("not_harmful_false_positive",)


@dataclass(frozen=True)
class RejectionReason:
    code: str
    note: str | None = None

    def __post_init__(self) -> None:
        if self.code not in REJECTION_CODES:
            raise InvalidInputError(
                f"rejection code must be one of {REJECTION_CODES}, got {self.code!r}"
            )


class ReviewQueue:
    """Queue operations over the shared store.

    `on_event` (optional) receives a dict for every state change so a live
    API can stream updates; it is called after the store write commits.
    """

    def __init__(
        self,
        store: Store,
        article_urls: Collection[str] | None = None,
        on_event: Callable[[dict], None] | None = None,
    ) -> None:
        self._store = store
        self._article_urls = set(article_urls) if article_urls is not None else None
        self._on_event = on_event

    def _emit(self, event: dict) -> None:
        if self._on_event is not None:
            self._on_event(event)

    # -- enqueue -------------------------------------------------------------

    def enqueue(
        self, reply: CandidateReply, target: PostRecord, now: datetime
    ) -> ReviewItem:
        """Queue an experimental-arm reply; deadline is now + 45 minutes."""
        validate_reply_invariants(reply, self._article_urls)
        now = ensure_utc(now)
        self._store.persist([target])
        self._store.save_reply(reply, self._article_urls)
        item = ReviewItem(
            item_id=f"item-{reply.reply_id}",
            target_post_id=target.post_id,
            kind="experimental",
            enqueued_at=now,
            deadline=now + REVIEW_DEADLINE,
            state="pending",
            reply_id=reply.reply_id,
        )
        self._store.save_review_item(item)
        self._emit({"type": "enqueued", "item_id": item.item_id, "state": "pending"})
        return item

    def enqueue_control(self, target: PostRecord, now: datetime) -> ReviewItem:
        """Queue a control-arm check (false-positive screening only)."""
        now = ensure_utc(now)
        self._store.persist([target])
        item = ReviewItem(
            item_id=f"item-ctrl-{target.post_id}",
            target_post_id=target.post_id,
            kind="control",
            enqueued_at=now,
            deadline=now + REVIEW_DEADLINE,
            state="pending",
            reply_id=None,
        )
        self._store.save_review_item(item)
        self._emit({"type": "enqueued", "item_id": item.item_id, "state": "pending"})
        return item

    # -- decisions --------------------------------------------------------------

    def decide(
        self,
        item_id: str,
        decision: str,
        reviewer: str,
        now: datetime,
        reason: RejectionReason | None = None,
    ) -> ReviewItem:
        """Record an approve/reject decision; immutable once made.

        A decision attempted after the deadline expires the item instead and
        raises. Control items accept only approve ("keep") or rejection as a
        classifier false positive.
        """
        now = ensure_utc(now)
        item = self._store.get_review_item(item_id)
        if item is None:
            raise StoreIntegrityError(f"no review item {item_id}")
        if item.state != "pending":
            raise AlreadyDecidedError(f"review item {item_id} is already {item.state}")
        if now > item.deadline:
            self._expire_item(item_id)
            raise ExpiredItemError(
                f"decision for {item_id} arrived after the 45-minute deadline"
            )
        if decision == "approve":
            updated = self._store.transition_review_item(
                item_id, "approved", now, reviewer, None, None
            )
        elif decision == "reject":
            if reason is None:
                raise InvalidInputError("a rejection needs a RejectionReason")
            if item.kind == "control" and reason.code not in CONTROL_ALLOWED_CODES:
                raise InvalidInputError(
                    "control items can only be rejected as false positives"
                )
            updated = self._store.transition_review_item(
                item_id, "rejected", now, reviewer, reason.code, reason.note
            )
            self._mark_removed(item.target_post_id, reason.code, now)
        else:
            raise InvalidInputError(f"decision must be approve or reject, got {decision!r}")
        self._emit({"type": "decided", "item_id": item_id, "state": updated.state})
        return updated

    def _mark_removed(self, post_id: str, code: str, now: datetime) -> None:
        assignment = self._store.get_assignment(post_id)
        if assignment is not None and assignment.removed_at is None:
            self._store.update_assignment(
                dc_replace(assignment, removed_at=now, removal_code=code)
            )

    def _expire_item(self, item_id: str) -> ReviewItem | None:
        try:
            item = self._store.transition_review_item(
                item_id, "expired", None, None, None, None
            )
        except AlreadyDecidedError:
            return None
        if item.kind == "experimental":
            assignment = self._store.get_assignment(item.target_post_id)
            if assignment is not None and not assignment.unposted:
                self._store.update_assignment(dc_replace(assignment, unposted=True))
        self._emit({"type": "expired", "item_id": item_id, "state": "expired"})
        return item

    def expire_overdue(self, now: datetime) -> int:
        """Expire every pending item whose deadline has passed; idempotent."""
        now = ensure_utc(now)
        expired = 0
        for item in self._store.list_review_items(state="pending"):
            if now > item.deadline and self._expire_item(item.item_id) is not None:
                expired += 1
        return expired

    # -- posting ------------------------------------------------------------------

    def post_approved(self, item: ReviewItem, poster, now: datetime) -> Posting:
        """Post an approved reply exactly once and schedule the first metric
        snapshots (target and bot reply) for 15 minutes later."""
        now = ensure_utc(now)
        current = self._store.get_review_item(item.item_id)
        if current is None:
            raise StoreIntegrityError(f"no review item {item.item_id}")
        if current.kind != "experimental":
            raise InvalidStateError("control items are never posted")
        if current.state != "approved":
            raise InvalidStateError(
                f"cannot post item {item.item_id} in state {current.state!r}"
            )
        existing = self._store.get_posting(item.item_id)
        if existing is not None:
            return existing
        assert current.reply_id is not None
        reply = self._store.get_reply(current.reply_id)
        if reply is None:
            raise StoreIntegrityError(f"reply {current.reply_id} missing from store")
        posted_id = poster.post_reply(reply.target_post_id, reply.text, now)
        posting = self._store.record_posting(
            Posting(
                item_id=item.item_id,
                reply_id=reply.reply_id,
                target_post_id=reply.target_post_id,
                posted_reply_id=posted_id,
                posted_at=now,
            )
        )
        assignment = self._store.get_assignment(reply.target_post_id)
        if assignment is not None and assignment.posted_reply_id is None:
            self._store.update_assignment(
                dc_replace(assignment, posted_reply_id=posted_id)
            )
        due = now + INITIAL_SNAPSHOT_DELAY
        self._store.schedule_snapshot(reply.target_post_id, due, "initial")
        self._store.schedule_snapshot(posted_id, due, "initial")
        self._emit(
            {"type": "posted", "item_id": item.item_id, "posted_reply_id": posted_id}
        )
        return posting


def audit_postings(store: Store) -> list[str]:
    """Safety audit: posting log entries whose item lacks an approve decision.

    Returns offending item ids; an empty list means the review gate held.
    """
    violations = []
    for posting in store.list_postings():
        item = store.get_review_item(posting.item_id)
        if item is None or item.state != "approved":
            violations.append(posting.item_id)
    return violations
