"""HTTP surface of the review queue: decisions, stats, auth, SSE, clock.

Plain endpoints run through the in-process test client; the SSE stream needs
real chunked responses, so that test boots an actual uvicorn server on an
ephemeral port.
"""

import json
import socket
import threading
import time
from datetime import datetime, timedelta, timezone

import httpx
import pytest
import uvicorn
from fastapi.testclient import TestClient

from counterspeech.clock import SimulatedClock
from counterspeech.models import CandidateReply, PostRecord
from counterspeech.review import ReviewQueue
from counterspeech.review_api import API_TOKEN_ENV, create_app

T0 = datetime(2023, 8, 24, 10, 0, tzinfo=timezone.utc)


class FakePoster:
    def __init__(self):
        self.posted = []

    def post_reply(self, target_post_id, text, now):
        self.posted.append(target_post_id)
        return f"posted-{len(self.posted)}"


def seed_queue(store, n=3):
    queue = ReviewQueue(store)
    items = []
    for i in range(n):
        target = PostRecord(
            post_id=f"t{i}", author_id="a", text=f"zły tweet {i}", created_at=T0, is_reply=False
        )
        reply = CandidateReply(
            reply_id=f"r{i}",
            target_post_id=f"t{i}",
            text=f"odpowiedź {i}",
            cited_urls=(),
            retrieval_scores=(),
            generation_cost_usd=0.048,
            created_at=T0,
        )
        items.append(queue.enqueue(reply, target, T0 + timedelta(minutes=i)))
    return items


@pytest.fixture
def api(store):
    clock = SimulatedClock(T0 + timedelta(minutes=5))
    poster = FakePoster()
    app = create_app(store, clock, poster=poster, allow_clock_control=True)
    client = TestClient(app)
    yield client, clock, poster
    client.close()


class TestQueueEndpoints:
    def test_pending_sorted_by_deadline(self, store, api):
        client, _, _ = api
        seed_queue(store)
        body = client.get("/queue").json()
        deadlines = [i["deadline"] for i in body["items"]]
        assert deadlines == sorted(deadlines)
        assert all(i["state"] == "pending" for i in body["items"])
        assert all(i["seconds_remaining"] > 0 for i in body["items"])

    def test_item_detail(self, store, api):
        client, _, _ = api
        items = seed_queue(store)
        body = client.get(f"/items/{items[0].item_id}").json()
        assert body["target_text"] == "zły tweet 0"
        assert body["reply_text"] == "odpowiedź 0"

    def test_unknown_item_404(self, api):
        client, _, _ = api
        assert client.get("/items/nope").status_code == 404

    def test_unknown_state_422(self, api):
        client, _, _ = api
        assert client.get("/queue", params={"state": "weird"}).status_code == 422


class TestDecisions:
    def test_approve_posts_via_configured_poster(self, store, api):
        client, _, poster = api
        items = seed_queue(store)
        resp = client.post(
            f"/items/{items[0].item_id}/decision",
            json={"decision": "approve", "reviewer": "rev1"},
        )
        assert resp.status_code == 200
        assert resp.json()["state"] == "approved"
        assert poster.posted == ["t0"]

    def test_reject_requires_taxonomy_code(self, store, api):
        client, _, _ = api
        items = seed_queue(store)
        bad = client.post(
            f"/items/{items[0].item_id}/decision",
            json={"decision": "reject", "reason_code": "vibes"},
        )
        assert bad.status_code == 422
        ok = client.post(
            f"/items/{items[0].item_id}/decision",
            json={"decision": "reject", "reason_code": "hallucination"},
        )
        assert ok.status_code == 200

    def test_second_decision_conflicts(self, store, api):
        client, _, _ = api
        items = seed_queue(store)
        url = f"/items/{items[0].item_id}/decision"
        assert client.post(url, json={"decision": "approve"}).status_code == 200
        assert client.post(url, json={"decision": "approve"}).status_code == 409

    def test_decision_after_deadline_is_410_and_expires(self, store, api):
        client, clock, _ = api
        items = seed_queue(store)
        clock.advance(timedelta(hours=2))
        resp = client.post(
            f"/items/{items[0].item_id}/decision", json={"decision": "approve"}
        )
        assert resp.status_code in (409, 410)  # expired directly or via lazy sweep
        assert store.get_review_item(items[0].item_id).state == "expired"


class TestStats:
    def test_rejection_histogram_includes_all_codes(self, store, api):
        client, _, _ = api
        items = seed_queue(store)
        client.post(
            f"/items/{items[0].item_id}/decision",
            json={"decision": "reject", "reason_code": "hallucination"},
        )
        body = client.get("/stats/rejections").json()
        assert body["total_rejected"] == 1
        assert body["by_code"]["hallucination"] == 1
        assert len(body["by_code"]) == 6

    def test_experiment_stats_shape(self, store, api):
        client, _, _ = api
        body = client.get("/stats/experiment").json()
        assert {"assignments_total", "experimental", "control", "pending_reviews"} <= set(body)


class TestClockAndExpiry:
    def test_clock_advance_expires_pending(self, store, api):
        client, _, _ = api
        seed_queue(store, n=2)
        before = client.get("/queue").json()
        assert len(before["items"]) == 2
        client.post("/clock/advance", json={"seconds": 3 * 3600})
        pending = client.get("/queue").json()["items"]
        expired = client.get("/queue", params={"state": "expired"}).json()["items"]
        assert pending == []
        assert len(expired) == 2


class TestAuth:
    def test_token_enforced_when_configured(self, store, monkeypatch):
        monkeypatch.setenv(API_TOKEN_ENV, "sekret")
        clock = SimulatedClock(T0)
        app = create_app(store, clock)
        with TestClient(app) as client:
            assert client.get("/queue").status_code == 401
            ok = client.get("/queue", headers={"Authorization": "Bearer sekret"})
            assert ok.status_code == 200


def run_uvicorn(app):
    """Start uvicorn on an ephemeral port; returns (base_url, stop)."""
    with socket.socket() as probe:
        probe.bind(("127.0.0.1", 0))
        port = probe.getsockname()[1]
    config = uvicorn.Config(app, host="127.0.0.1", port=port, log_level="error")
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.time() + 10
    while not server.started:
        if time.time() > deadline:
            raise RuntimeError("uvicorn did not start")
        time.sleep(0.02)

    def stop():
        server.should_exit = True
        thread.join(timeout=5)

    return f"http://127.0.0.1:{port}", stop


class TestEventStream:
    def test_stream_delivers_decision_events(self, store):
        clock = SimulatedClock(T0 + timedelta(minutes=5))
        items = seed_queue(store, n=1)
        base_url, stop = run_uvicorn(create_app(store, clock, allow_clock_control=True))
        try:
            with httpx.Client(base_url=base_url, timeout=10) as client:
                with client.stream("GET", "/queue/events") as stream:
                    iterator = stream.iter_lines()
                    first = _read_event(iterator)
                    assert first["event"] == "hello"
                    assert "now" in first["data"]
                    client.post(
                        f"/items/{items[0].item_id}/decision",
                        json={"decision": "approve"},
                    )
                    event = _read_event(iterator)
                    while event["event"] == "heartbeat":
                        event = _read_event(iterator)
                    assert event["event"] == "decided"
                    assert event["data"]["item_id"] == items[0].item_id
        finally:
            stop()


def _read_event(lines) -> dict:
    event = {}
    for line in lines:
        if line.startswith("event:"):
            event["event"] = line.split(":", 1)[1].strip()
        elif line.startswith("data:"):
            event["data"] = json.loads(line.split(":", 1)[1])
        elif not line and event:
            return event
    raise AssertionError("stream ended before a full event")
