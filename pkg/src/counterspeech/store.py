"""Single-file sqlite store shared by every pipeline stage.

All state transitions (assignments, review decisions, postings, snapshots)
go through this store, which makes it the serialization point for
concurrent tasks: writes take an in-process lock, review decisions are
first-writer-wins conditional updates, and snapshot appends per post are
ordered by construction.
"""

from __future__ import annotations

import json
import sqlite3
import threading
from collections.abc import Collection, Iterable
from datetime import datetime
from pathlib import Path

from .errors import (
    AlreadyDecidedError,
    DuplicateAssignmentError,
    DuplicateItemError,
    StorageError,
    StoreIntegrityError,
)
from .models import (
    CandidateReply,
    ExperimentAssignment,
    MetricsSnapshot,
    Posting,
    PostRecord,
    ReviewItem,
    SnapshotTask,
    from_iso,
    to_iso,
    validate_reply_invariants,
)

_SCHEMA = """
CREATE TABLE IF NOT EXISTS posts (
    post_id TEXT PRIMARY KEY,
    author_id TEXT NOT NULL,
    text TEXT NOT NULL,
    created_at TEXT NOT NULL,
    is_reply INTEGER NOT NULL,
    parent_id TEXT,
    language_tag TEXT NOT NULL
);

CREATE TABLE IF NOT EXISTS snapshots (
    post_id TEXT NOT NULL,
    taken_at TEXT NOT NULL,
    likes INTEGER NOT NULL,
    impressions INTEGER NOT NULL,
    replies INTEGER NOT NULL,
    PRIMARY KEY (post_id, taken_at)
);

CREATE TABLE IF NOT EXISTS assignments (
    post_id TEXT PRIMARY KEY,
    arm TEXT NOT NULL,
    assigned_at TEXT NOT NULL,
    seq INTEGER NOT NULL,
    initial_snapshot_at TEXT,
    final_snapshot_at TEXT,
    posted_reply_id TEXT,
    unposted INTEGER NOT NULL DEFAULT 0,
    deleted INTEGER NOT NULL DEFAULT 0,
    removed_at TEXT,
    removal_code TEXT
);

CREATE TABLE IF NOT EXISTS replies (
    reply_id TEXT PRIMARY KEY,
    target_post_id TEXT NOT NULL,
    text TEXT NOT NULL,
    cited_urls TEXT NOT NULL,
    retrieval_scores TEXT NOT NULL,
    generation_cost_usd REAL NOT NULL,
    created_at TEXT NOT NULL
);

CREATE TABLE IF NOT EXISTS review_items (
    item_id TEXT PRIMARY KEY,
    target_post_id TEXT NOT NULL,
    kind TEXT NOT NULL,
    enqueued_at TEXT NOT NULL,
    deadline TEXT NOT NULL,
    state TEXT NOT NULL,
    reply_id TEXT UNIQUE,
    decided_at TEXT,
    reviewer TEXT,
    reason_code TEXT,
    reason_note TEXT
);

CREATE TABLE IF NOT EXISTS postings (
    item_id TEXT PRIMARY KEY,
    reply_id TEXT NOT NULL,
    target_post_id TEXT NOT NULL,
    posted_reply_id TEXT NOT NULL,
    posted_at TEXT NOT NULL
);

CREATE TABLE IF NOT EXISTS snapshot_tasks (
    task_id INTEGER PRIMARY KEY AUTOINCREMENT,
    post_id TEXT NOT NULL,
    due_at TEXT NOT NULL,
    kind TEXT NOT NULL,
    done INTEGER NOT NULL DEFAULT 0
);

CREATE TABLE IF NOT EXISTS meta (
    key TEXT PRIMARY KEY,
    value TEXT NOT NULL
);
"""


class Store:
    """Durable store over a single sqlite file (or in-memory for tests)."""

    def __init__(self, path: str | Path = ":memory:") -> None:
        self.path = str(path)
        try:
            self._conn = sqlite3.connect(self.path, check_same_thread=False)
        except sqlite3.Error as exc:
            raise StorageError(f"cannot open store at {self.path}: {exc}") from exc
        self._conn.row_factory = sqlite3.Row
        self._lock = threading.RLock()
        with self._lock, self._conn:
            if self.path != ":memory:":
                self._conn.execute("PRAGMA journal_mode=WAL")
            self._conn.executescript(_SCHEMA)

    def close(self) -> None:
        self._conn.close()

    # -- posts and snapshots ------------------------------------------------

    def persist(
        self,
        records: Iterable[PostRecord],
        snapshots: Iterable[MetricsSnapshot] = (),
    ) -> int:
        """Write posts and snapshots, returning the number of new rows.

        Idempotent on (post_id) and (post_id, taken_at): byte-identical
        duplicates are no-ops, conflicting duplicates raise.
        """
        written = 0
        with self._lock, self._conn:
            for rec in records:
                row = self._conn.execute(
                    "SELECT * FROM posts WHERE post_id = ?", (rec.post_id,)
                ).fetchone()
                if row is not None:
                    if row["text"] != rec.text:
                        raise StoreIntegrityError(
                            f"post {rec.post_id} already stored with different text"
                        )
                    continue
                self._conn.execute(
                    "INSERT INTO posts VALUES (?, ?, ?, ?, ?, ?, ?)",
                    (
                        rec.post_id,
                        rec.author_id,
                        rec.text,
                        to_iso(rec.created_at),
                        int(rec.is_reply),
                        rec.parent_id,
                        rec.language_tag,
                    ),
                )
                written += 1
            for snap in snapshots:
                written += self._append_snapshot(snap)
        return written

    def _append_snapshot(self, snap: MetricsSnapshot) -> int:
        taken = to_iso(snap.taken_at)
        existing = self._conn.execute(
            "SELECT * FROM snapshots WHERE post_id = ? AND taken_at = ?",
            (snap.post_id, taken),
        ).fetchone()
        if existing is not None:
            same = (
                existing["likes"] == snap.likes
                and existing["impressions"] == snap.impressions
                and existing["replies"] == snap.replies
            )
            if not same:
                raise StoreIntegrityError(
                    f"snapshot for {snap.post_id} at {taken} already stored"
                    " with different counters"
                )
            return 0
        latest = self._conn.execute(
            "SELECT MAX(taken_at) AS t FROM snapshots WHERE post_id = ?",
            (snap.post_id,),
        ).fetchone()["t"]
        if latest is not None and taken < latest:
            raise StoreIntegrityError(
                f"snapshot for {snap.post_id} at {taken} is older than"
                f" the latest stored snapshot ({latest})"
            )
        self._conn.execute(
            "INSERT INTO snapshots VALUES (?, ?, ?, ?, ?)",
            (snap.post_id, taken, snap.likes, snap.impressions, snap.replies),
        )
        return 1

    def append_snapshot(self, snap: MetricsSnapshot) -> int:
        with self._lock, self._conn:
            return self._append_snapshot(snap)

    def get_post(self, post_id: str) -> PostRecord | None:
        row = self._conn.execute(
            "SELECT * FROM posts WHERE post_id = ?", (post_id,)
        ).fetchone()
        return _post_from_row(row) if row else None

    def list_posts(self) -> list[PostRecord]:
        rows = self._conn.execute("SELECT * FROM posts ORDER BY post_id").fetchall()
        return [_post_from_row(r) for r in rows]

    def snapshots_for(self, post_id: str) -> list[MetricsSnapshot]:
        rows = self._conn.execute(
            "SELECT * FROM snapshots WHERE post_id = ? ORDER BY taken_at",
            (post_id,),
        ).fetchall()
        return [_snapshot_from_row(r) for r in rows]

    def snapshot_at(self, post_id: str, taken_at: datetime) -> MetricsSnapshot | None:
        row = self._conn.execute(
            "SELECT * FROM snapshots WHERE post_id = ? AND taken_at = ?",
            (post_id, to_iso(taken_at)),
        ).fetchone()
        return _snapshot_from_row(row) if row else None

    # -- experiment assignments ----------------------------------------------

    def save_assignment(self, assignment: ExperimentAssignment) -> None:
        with self._lock, self._conn:
            try:
                self._conn.execute(
                    "INSERT INTO assignments"
                    " (post_id, arm, assigned_at, seq, initial_snapshot_at,"
                    "  final_snapshot_at, posted_reply_id, unposted, deleted,"
                    "  removed_at, removal_code)"
                    " VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?)",
                    _assignment_params(assignment),
                )
            except sqlite3.IntegrityError as exc:
                raise DuplicateAssignmentError(
                    f"post {assignment.post_id} is already assigned"
                ) from exc

    def update_assignment(self, assignment: ExperimentAssignment) -> None:
        with self._lock, self._conn:
            cur = self._conn.execute(
                "UPDATE assignments SET arm=?, assigned_at=?, seq=?,"
                " initial_snapshot_at=?, final_snapshot_at=?, posted_reply_id=?,"
                " unposted=?, deleted=?, removed_at=?, removal_code=?"
                " WHERE post_id=?",
                _assignment_params(assignment)[1:] + (assignment.post_id,),
            )
            if cur.rowcount == 0:
                raise StoreIntegrityError(
                    f"no assignment for post {assignment.post_id} to update"
                )

    def get_assignment(self, post_id: str) -> ExperimentAssignment | None:
        row = self._conn.execute(
            "SELECT * FROM assignments WHERE post_id = ?", (post_id,)
        ).fetchone()
        return _assignment_from_row(row) if row else None

    def list_assignments(self) -> list[ExperimentAssignment]:
        rows = self._conn.execute("SELECT * FROM assignments ORDER BY seq").fetchall()
        return [_assignment_from_row(r) for r in rows]

    # -- candidate replies ----------------------------------------------------

    def save_reply(
        self, reply: CandidateReply, valid_urls: Collection[str] | None = None
    ) -> None:
        validate_reply_invariants(
            reply, set(valid_urls) if valid_urls is not None else None
        )
        with self._lock, self._conn:
            existing = self._conn.execute(
                "SELECT text FROM replies WHERE reply_id = ?", (reply.reply_id,)
            ).fetchone()
            if existing is not None:
                if existing["text"] != reply.text:
                    raise StoreIntegrityError(
                        f"reply {reply.reply_id} already stored with different text"
                    )
                return
            self._conn.execute(
                "INSERT INTO replies VALUES (?, ?, ?, ?, ?, ?, ?)",
                (
                    reply.reply_id,
                    reply.target_post_id,
                    reply.text,
                    json.dumps(list(reply.cited_urls)),
                    json.dumps([[t, s] for t, s in reply.retrieval_scores]),
                    reply.generation_cost_usd,
                    to_iso(reply.created_at),
                ),
            )

    def get_reply(self, reply_id: str) -> CandidateReply | None:
        row = self._conn.execute(
            "SELECT * FROM replies WHERE reply_id = ?", (reply_id,)
        ).fetchone()
        return _reply_from_row(row) if row else None

    # -- review queue ----------------------------------------------------------

    def save_review_item(self, item: ReviewItem) -> None:
        with self._lock, self._conn:
            try:
                self._conn.execute(
                    "INSERT INTO review_items VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?)",
                    (
                        item.item_id,
                        item.target_post_id,
                        item.kind,
                        to_iso(item.enqueued_at),
                        to_iso(item.deadline),
                        item.state,
                        item.reply_id,
                        to_iso(item.decided_at) if item.decided_at else None,
                        item.reviewer,
                        item.reason_code,
                        item.reason_note,
                    ),
                )
            except sqlite3.IntegrityError as exc:
                raise DuplicateItemError(
                    f"review item {item.item_id} (reply {item.reply_id}) already queued"
                ) from exc

    def get_review_item(self, item_id: str) -> ReviewItem | None:
        row = self._conn.execute(
            "SELECT * FROM review_items WHERE item_id = ?", (item_id,)
        ).fetchone()
        return _review_from_row(row) if row else None

    def list_review_items(self, state: str | None = None) -> list[ReviewItem]:
        if state is None:
            rows = self._conn.execute(
                "SELECT * FROM review_items ORDER BY deadline, item_id"
            ).fetchall()
        else:
            rows = self._conn.execute(
                "SELECT * FROM review_items WHERE state = ? ORDER BY deadline, item_id",
                (state,),
            ).fetchall()
        return [_review_from_row(r) for r in rows]

    def transition_review_item(
        self,
        item_id: str,
        new_state: str,
        decided_at: datetime | None,
        reviewer: str | None,
        reason_code: str | None,
        reason_note: str | None,
    ) -> ReviewItem:
        """Atomically move a pending item to a terminal state.

        First writer wins: the UPDATE only matches rows still pending, so a
        losing concurrent decision surfaces as AlreadyDecidedError.
        """
        with self._lock, self._conn:
            cur = self._conn.execute(
                "UPDATE review_items SET state=?, decided_at=?, reviewer=?,"
                " reason_code=?, reason_note=? WHERE item_id=? AND state='pending'",
                (
                    new_state,
                    to_iso(decided_at) if decided_at else None,
                    reviewer,
                    reason_code,
                    reason_note,
                    item_id,
                ),
            )
            if cur.rowcount == 0:
                row = self._conn.execute(
                    "SELECT * FROM review_items WHERE item_id = ?", (item_id,)
                ).fetchone()
                if row is None:
                    raise StoreIntegrityError(f"no review item {item_id}")
                raise AlreadyDecidedError(
                    f"review item {item_id} is already {row['state']}"
                )
        item = self.get_review_item(item_id)
        assert item is not None
        return item

    def rejection_histogram(self) -> dict[str, int]:
        rows = self._conn.execute(
            "SELECT reason_code, COUNT(*) AS n FROM review_items"
            " WHERE state = 'rejected' GROUP BY reason_code"
        ).fetchall()
        return {r["reason_code"]: r["n"] for r in rows}

    # -- postings ----------------------------------------------------------------

    def record_posting(self, posting: Posting) -> Posting:
        """Record a posting exactly once; a repeat returns the original row."""
        with self._lock, self._conn:
            row = self._conn.execute(
                "SELECT * FROM postings WHERE item_id = ?", (posting.item_id,)
            ).fetchone()
            if row is not None:
                return _posting_from_row(row)
            self._conn.execute(
                "INSERT INTO postings VALUES (?, ?, ?, ?, ?)",
                (
                    posting.item_id,
                    posting.reply_id,
                    posting.target_post_id,
                    posting.posted_reply_id,
                    to_iso(posting.posted_at),
                ),
            )
            return posting

    def get_posting(self, item_id: str) -> Posting | None:
        row = self._conn.execute(
            "SELECT * FROM postings WHERE item_id = ?", (item_id,)
        ).fetchone()
        return _posting_from_row(row) if row else None

    def list_postings(self) -> list[Posting]:
        rows = self._conn.execute(
            "SELECT * FROM postings ORDER BY posted_at, item_id"
        ).fetchall()
        return [_posting_from_row(r) for r in rows]

    # -- snapshot tasks -------------------------------------------------------------

    def schedule_snapshot(self, post_id: str, due_at: datetime, kind: str) -> int:
        with self._lock, self._conn:
            cur = self._conn.execute(
                "INSERT INTO snapshot_tasks (post_id, due_at, kind) VALUES (?, ?, ?)",
                (post_id, to_iso(due_at), kind),
            )
            return int(cur.lastrowid or 0)

    def due_snapshot_tasks(self, now: datetime) -> list[SnapshotTask]:
        rows = self._conn.execute(
            "SELECT * FROM snapshot_tasks WHERE done = 0 AND due_at <= ?"
            " ORDER BY due_at, task_id",
            (to_iso(now),),
        ).fetchall()
        return [
            SnapshotTask(
                task_id=r["task_id"],
                post_id=r["post_id"],
                due_at=from_iso(r["due_at"]),
                kind=r["kind"],
                done=bool(r["done"]),
            )
            for r in rows
        ]

    def complete_snapshot_task(self, task_id: int) -> None:
        with self._lock, self._conn:
            self._conn.execute(
                "UPDATE snapshot_tasks SET done = 1 WHERE task_id = ?", (task_id,)
            )

    # -- metadata ----------------------------------------------------------------------

    def set_meta(self, key: str, value: str) -> None:
        with self._lock, self._conn:
            self._conn.execute(
                "INSERT INTO meta VALUES (?, ?)"
                " ON CONFLICT(key) DO UPDATE SET value=excluded.value",
                (key, value),
            )

    def get_meta(self, key: str) -> str | None:
        row = self._conn.execute("SELECT value FROM meta WHERE key = ?", (key,)).fetchone()
        return row["value"] if row else None

    # -- determinism / audit ---------------------------------------------------------------

    def export_state(self) -> str:
        """Canonical JSON dump of every table, for replay-determinism checks."""
        out: dict[str, list] = {}
        for table in (
            "posts",
            "snapshots",
            "assignments",
            "replies",
            "review_items",
            "postings",
            "snapshot_tasks",
            "meta",
        ):
            rows = self._conn.execute(f"SELECT * FROM {table}").fetchall()
            out[table] = sorted(
                [dict(r) for r in rows], key=lambda d: json.dumps(d, sort_keys=True)
            )
        return json.dumps(out, sort_keys=True, ensure_ascii=False, indent=1)


def _post_from_row(row: sqlite3.Row) -> PostRecord:
    return PostRecord(
        post_id=row["post_id"],
        author_id=row["author_id"],
        text=row["text"],
        created_at=from_iso(row["created_at"]),
        is_reply=bool(row["is_reply"]),
        parent_id=row["parent_id"],
        language_tag=row["language_tag"],
    )


def _snapshot_from_row(row: sqlite3.Row) -> MetricsSnapshot:
    return MetricsSnapshot(
        post_id=row["post_id"],
        taken_at=from_iso(row["taken_at"]),
        likes=row["likes"],
        impressions=row["impressions"],
        replies=row["replies"],
    )


def _assignment_params(a: ExperimentAssignment) -> tuple:
    return (
        a.post_id,
        a.arm,
        to_iso(a.assigned_at),
        a.seq,
        to_iso(a.initial_snapshot_at) if a.initial_snapshot_at else None,
        to_iso(a.final_snapshot_at) if a.final_snapshot_at else None,
        a.posted_reply_id,
        int(a.unposted),
        int(a.deleted),
        to_iso(a.removed_at) if a.removed_at else None,
        a.removal_code,
    )


def _assignment_from_row(row: sqlite3.Row) -> ExperimentAssignment:
    return ExperimentAssignment(
        post_id=row["post_id"],
        arm=row["arm"],
        assigned_at=from_iso(row["assigned_at"]),
        seq=row["seq"],
        initial_snapshot_at=(
            from_iso(row["initial_snapshot_at"]) if row["initial_snapshot_at"] else None
        ),
        final_snapshot_at=(
            from_iso(row["final_snapshot_at"]) if row["final_snapshot_at"] else None
        ),
        posted_reply_id=row["posted_reply_id"],
        unposted=bool(row["unposted"]),
        deleted=bool(row["deleted"]),
        removed_at=from_iso(row["removed_at"]) if row["removed_at"] else None,
        removal_code=row["removal_code"],
    )


def _reply_from_row(row: sqlite3.Row) -> CandidateReply:
    return CandidateReply(
        reply_id=row["reply_id"],
        target_post_id=row["target_post_id"],
        text=row["text"],
        cited_urls=tuple(json.loads(row["cited_urls"])),
        retrieval_scores=tuple(
            (t, s) for t, s in json.loads(row["retrieval_scores"])
        ),
        generation_cost_usd=row["generation_cost_usd"],
        created_at=from_iso(row["created_at"]),
    )


def _review_from_row(row: sqlite3.Row) -> ReviewItem:
    return ReviewItem(
        item_id=row["item_id"],
        target_post_id=row["target_post_id"],
        kind=row["kind"],
        enqueued_at=from_iso(row["enqueued_at"]),
        deadline=from_iso(row["deadline"]),
        state=row["state"],
        reply_id=row["reply_id"],
        decided_at=from_iso(row["decided_at"]) if row["decided_at"] else None,
        reviewer=row["reviewer"],
        reason_code=row["reason_code"],
        reason_note=row["reason_note"],
    )


def _posting_from_row(row: sqlite3.Row) -> Posting:
    return Posting(
        item_id=row["item_id"],
        reply_id=row["reply_id"],
        target_post_id=row["target_post_id"],
        posted_reply_id=row["posted_reply_id"],
        posted_at=from_iso(row["posted_at"]),
    )
