"""Platform clients: a live recent-search HTTP client and a deterministic
replay source backed by a corpus file.

The replay source serves each post's metrics from its embedded snapshot
trajectory (step function over time), so an experiment driven by a simulated
clock reproduces byte-identical state on every run.
"""

from __future__ import annotations

import hashlib
import os
import random
import time
from datetime import datetime, timedelta
from pathlib import Path

import httpx

from .clock import ensure_utc
from .errors import ConfigurationError, TransientPostError, TransientSourceError
from .ingest import matches_query, read_corpus
from .models import MetricsSnapshot, PostRecord, QuerySpec

BEARER_TOKEN_ENV = "COUNTERSPEECH_PLATFORM_TOKEN"

_SELF_ID_MIN_LENGTH = 10


class ReplaySource:
    """Replay a recorded corpus as if it were the live platform.

    Posting replies is simulated: posted ids are content hashes so reruns
    with the same inputs produce the same ids.
    """

    def __init__(self, corpus_path: str | Path) -> None:
        self._entries = read_corpus(corpus_path)
        self._trajectories: dict[str, list[MetricsSnapshot]] = {}
        self._deleted_at: dict[str, datetime] = {}
        self._posted: dict[str, tuple[str, str]] = {}
        for post, snaps in self._entries:
            track = [
                MetricsSnapshot(
                    post_id=post.post_id,
                    taken_at=ensure_utc(datetime.fromisoformat(s["taken_at"])),
                    likes=int(s["likes"]),
                    impressions=int(s["impressions"]),
                    replies=int(s["replies"]),
                )
                for s in snaps
                if "deleted_at" not in s
            ]
            track.sort(key=lambda s: s.taken_at)
            self._trajectories[post.post_id] = track
            for s in snaps:
                if "deleted_at" in s:
                    self._deleted_at[post.post_id] = ensure_utc(
                        datetime.fromisoformat(s["deleted_at"])
                    )

    def search_recent(
        self, spec: QuerySpec, window_end: datetime, max_age: timedelta
    ) -> list[tuple[PostRecord, MetricsSnapshot]]:
        window_end = ensure_utc(window_end)
        out = []
        for post, _ in self._entries:
            age = window_end - post.created_at
            if age < timedelta(0) or age > max_age:
                continue
            if not matches_query(spec, post):
                continue
            snap = self.metrics_at(post.post_id, window_end)
            if snap is None:
                continue
            out.append((post, snap))
        return out

    def metrics_at(self, post_id: str, at: datetime) -> MetricsSnapshot | None:
        """Metrics as of `at`: the latest trajectory point not after it.

        Returns None once the post's recorded deletion time has passed.
        """
        at = ensure_utc(at)
        deleted = self._deleted_at.get(post_id)
        if deleted is not None and at >= deleted:
            return None
        track = self._trajectories.get(post_id)
        if track is None:
            return None
        current = None
        for snap in track:
            if snap.taken_at <= at:
                current = snap
            else:
                break
        if current is None:
            return MetricsSnapshot(post_id=post_id, taken_at=at, likes=0, impressions=0, replies=0)
        return MetricsSnapshot(
            post_id=post_id,
            taken_at=at,
            likes=current.likes,
            impressions=current.impressions,
            replies=current.replies,
        )

    def post_reply(self, target_post_id: str, text: str, now: datetime) -> str:
        digest = hashlib.sha1(f"{target_post_id}\n{text}".encode()).hexdigest()[:12]
        posted_id = f"posted-{digest}"
        self._posted[posted_id] = (target_post_id, text)
        return posted_id

    @property
    def posted(self) -> dict[str, tuple[str, str]]:
        return dict(self._posted)


class LivePlatformClient:
    """Recent-search style HTTP client with capped, jittered backoff.

    Credentials come from the environment; posting additionally requires a
    configured bot self-identification string so the account is transparent
    about being automated.
    """

    def __init__(
        self,
        base_url: str,
        *,
        self_identification: str | None = None,
        max_retries: int = 5,
        backoff_base: float = 1.0,
        backoff_cap: float = 60.0,
        transport: httpx.BaseTransport | None = None,
        sleep=time.sleep,
        rng: random.Random | None = None,
    ) -> None:
        token = os.environ.get(BEARER_TOKEN_ENV)
        if not token:
            raise ConfigurationError(
                f"set {BEARER_TOKEN_ENV} to use the live platform client"
            )
        self._client = httpx.Client(
            base_url=base_url,
            headers={"Authorization": f"Bearer {token}"},
            transport=transport,
        )
        self.self_identification = self_identification
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        self.backoff_cap = backoff_cap
        self._sleep = sleep
        self._rng = rng or random.Random()

    def _request_json(self, method: str, url: str, **kwargs) -> dict:
        last_error: Exception | None = None
        for attempt in range(self.max_retries + 1):
            try:
                resp = self._client.request(method, url, **kwargs)
            except httpx.HTTPError as exc:
                last_error = exc
            else:
                if resp.status_code == 429 or resp.status_code >= 500:
                    last_error = TransientSourceError(
                        f"{url} returned {resp.status_code}"
                    )
                else:
                    resp.raise_for_status()
                    return resp.json()
            if attempt < self.max_retries:
                delay = min(self.backoff_cap, self.backoff_base * 2**attempt)
                self._sleep(delay * (0.5 + self._rng.random() / 2))
        raise TransientSourceError(f"{url} unreachable after retries: {last_error}")

    def search_recent(
        self, spec: QuerySpec, window_end: datetime, max_age: timedelta
    ) -> list[tuple[PostRecord, MetricsSnapshot]]:
        from .ingest import build_query

        window_end = ensure_utc(window_end)
        results: list[tuple[PostRecord, MetricsSnapshot]] = []
        params: dict[str, str] = {
            "query": build_query(spec),
            "start_time": (window_end - max_age).isoformat(),
            "end_time": window_end.isoformat(),
        }
        while True:
            payload = self._request_json("GET", "/2/tweets/search/recent", params=params)
            for item in payload.get("data", []):
                parent = item.get("parent_id")
                post = PostRecord(
                    post_id=str(item["id"]),
                    author_id=str(item["author_id"]),
                    text=item["text"],
                    created_at=ensure_utc(datetime.fromisoformat(item["created_at"])),
                    is_reply=parent is not None,
                    parent_id=parent,
                    language_tag=item.get("lang", spec.language),
                )
                metrics = item.get("public_metrics", {})
                snap = MetricsSnapshot(
                    post_id=post.post_id,
                    taken_at=window_end,
                    likes=int(metrics.get("like_count", 0)),
                    impressions=int(metrics.get("impression_count", 0)),
                    replies=int(metrics.get("reply_count", 0)),
                )
                results.append((post, snap))
            next_token = payload.get("meta", {}).get("next_token")
            if not next_token:
                break
            params["next_token"] = next_token
        return results

    def metrics_at(self, post_id: str, at: datetime) -> MetricsSnapshot | None:
        payload = self._request_json("GET", "/2/tweets", params={"ids": post_id})
        data = payload.get("data", [])
        if not data:
            return None
        metrics = data[0].get("public_metrics", {})
        return MetricsSnapshot(
            post_id=post_id,
            taken_at=ensure_utc(at),
            likes=int(metrics.get("like_count", 0)),
            impressions=int(metrics.get("impression_count", 0)),
            replies=int(metrics.get("reply_count", 0)),
        )

    def post_reply(self, target_post_id: str, text: str, now: datetime) -> str:
        if not self.self_identification or len(self.self_identification) < _SELF_ID_MIN_LENGTH:
            raise ConfigurationError(
                "live posting requires a bot self-identification string"
                " (account profile text declaring the account automated)"
            )
        try:
            payload = self._request_json(
                "POST",
                "/2/tweets",
                json={"text": text, "reply": {"in_reply_to_tweet_id": target_post_id}},
            )
        except TransientSourceError as exc:
            raise TransientPostError(str(exc)) from exc
        return str(payload["data"]["id"])
