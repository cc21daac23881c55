"""Post acquisition: query construction, recency filtering, persistence.

Both the live client and the deterministic replay source return
(post, snapshot-at-fetch-time) pairs; `fetch_recent` enforces the recency
window on top of whatever the source already filtered.
"""

from __future__ import annotations

import json
import re
from datetime import datetime, timedelta
from pathlib import Path
from typing import Protocol

from .clock import ensure_utc
from .errors import CorpusFormatError, InvalidInputError
from .errors import InvariantViolationError
from .models import MetricsSnapshot, PostRecord, QuerySpec
from .store import Store

_TOKEN_RE = re.compile(r"#?\w+", re.UNICODE)


def build_query(spec: QuerySpec) -> str:
    """Render the platform search string: OR-joined terms, retweet and
    language markers. Byte-identical for equal specs."""
    if not spec.terms:
        raise InvalidInputError("query spec needs at least one term")
    parts = [f"({' OR '.join(spec.terms)})"]
    if spec.exclude_retweets:
        parts.append("-is:retweet")
    parts.append(f"lang:{spec.language}")
    return " ".join(parts)


def load_query_spec(path: str | Path) -> QuerySpec:
    """Read a QuerySpec from a JSON file with terms/exclude_retweets/language."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    try:
        return QuerySpec(
            terms=tuple(raw["terms"]),
            exclude_retweets=bool(raw.get("exclude_retweets", True)),
            language=raw.get("language", "pl"),
        )
    except KeyError as exc:
        raise InvalidInputError(f"query file {path} is missing {exc}") from exc


def matches_query(spec: QuerySpec, post: PostRecord) -> bool:
    """Local stand-in for server-side query matching, used in replay mode.

    A post matches when its language tag equals the spec's and any term
    (keyword or hashtag) appears as a whole token in the text.
    """
    if post.language_tag != spec.language:
        return False
    tokens = {t.lower() for t in _TOKEN_RE.findall(post.text)}
    # '#tag' tokenizes to both '#tag' and is matched bare as well.
    tokens |= {t.lstrip("#") for t in tokens}
    return any(term.lower().lstrip("#") in tokens for term in spec.terms)


class PostSource(Protocol):
    """Anything that can serve recent posts with their current metrics."""

    def search_recent(
        self, spec: QuerySpec, window_end: datetime, max_age: timedelta
    ) -> list[tuple[PostRecord, MetricsSnapshot]]: ...


def fetch_recent(
    source: PostSource,
    spec: QuerySpec,
    window_end: datetime,
    max_age: timedelta,
) -> list[tuple[PostRecord, MetricsSnapshot]]:
    """Fetch posts no older than `max_age` at `window_end`.

    The age bound is inclusive; every returned snapshot is stamped with the
    fetch time. Source order (corpus order in replay mode) is preserved.
    """
    if max_age <= timedelta(0):
        raise InvalidInputError("max_age must be positive")
    window_end = ensure_utc(window_end)
    out: list[tuple[PostRecord, MetricsSnapshot]] = []
    for post, snap in source.search_recent(spec, window_end, max_age):
        age = window_end - post.created_at
        if age < timedelta(0) or age > max_age:
            continue
        out.append((post, snap))
    return out


def persist(
    store: Store,
    records: list[PostRecord],
    snapshots: list[MetricsSnapshot],
) -> int:
    """Write fetched posts and snapshots; returns the number of new rows."""
    return store.persist(records, snapshots)


# -- replay corpus -----------------------------------------------------------

_REQUIRED_CORPUS_FIELDS = ("post_id", "author_id", "text", "created_at", "is_reply")


def parse_corpus_line(line: str, line_number: int) -> tuple[PostRecord, list[dict]]:
    try:
        raw = json.loads(line)
    except json.JSONDecodeError as exc:
        raise CorpusFormatError(line_number, f"invalid JSON: {exc.msg}") from exc
    missing = [f for f in _REQUIRED_CORPUS_FIELDS if f not in raw]
    if missing:
        raise CorpusFormatError(line_number, f"missing fields {missing}")
    try:
        post = PostRecord(
            post_id=str(raw["post_id"]),
            author_id=str(raw["author_id"]),
            text=raw["text"],
            created_at=ensure_utc(datetime.fromisoformat(raw["created_at"])),
            is_reply=bool(raw["is_reply"]),
            parent_id=raw.get("parent_id"),
            language_tag=raw.get("language_tag", "pl"),
        )
    except (ValueError, TypeError, InvariantViolationError) as exc:
        raise CorpusFormatError(line_number, str(exc)) from exc
    return post, list(raw.get("snapshots", []))


def read_corpus(path: str | Path) -> list[tuple[PostRecord, list[dict]]]:
    """Parse a line-delimited JSON corpus, keeping file order."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for i, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            out.append(parse_corpus_line(line, i))
    return out
