"""HTTP surface of the review queue, consumed by the reviewer console.

JSON endpoints for the pending queue, decisions, and rejection stats, plus a
server-sent-event stream for live updates. Authentication is a bearer token
taken from the environment; without the variable the API is open (local
development and replay demos).

When built with a simulated clock the app also exposes /clock endpoints so a
scripted session can advance time and watch items expire.
"""

from __future__ import annotations

import asyncio
import json
import os
from datetime import datetime, timedelta

from fastapi import Depends, FastAPI, HTTPException, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import StreamingResponse
from pydantic import BaseModel

from .errors import (
    AlreadyDecidedError,
    ExpiredItemError,
    InvalidInputError,
    InvalidStateError,
    StoreIntegrityError,
)
from .models import REJECTION_CODES, ReviewItem, to_iso
from .review import RejectionReason, ReviewQueue
from .store import Store

API_TOKEN_ENV = "COUNTERSPEECH_REVIEW_TOKEN"

HEARTBEAT_SECONDS = 1.0


class EventHub:
    """Fan-out of queue events to SSE subscribers (single-process)."""

    def __init__(self) -> None:
        self._subscribers: list[asyncio.Queue] = []

    def publish(self, event: dict) -> None:
        for q in list(self._subscribers):
            q.put_nowait(event)

    def subscribe(self) -> asyncio.Queue:
        q: asyncio.Queue = asyncio.Queue()
        self._subscribers.append(q)
        return q

    def unsubscribe(self, q: asyncio.Queue) -> None:
        if q in self._subscribers:
            self._subscribers.remove(q)


class DecisionBody(BaseModel):
    decision: str
    reason_code: str | None = None
    note: str | None = None
    reviewer: str = "anonymous"


class ClockAdvanceBody(BaseModel):
    seconds: float


def _item_view(item: ReviewItem, store: Store, now: datetime) -> dict:
    reply = store.get_reply(item.reply_id) if item.reply_id else None
    target = store.get_post(item.target_post_id)
    remaining = max(0.0, (item.deadline - now).total_seconds())
    return {
        "item_id": item.item_id,
        "kind": item.kind,
        "state": item.state,
        "target_post_id": item.target_post_id,
        "target_text": target.text if target else None,
        "reply_text": reply.text if reply else None,
        "cited_urls": list(reply.cited_urls) if reply else [],
        "retrieval_scores": [[t, s] for t, s in reply.retrieval_scores] if reply else [],
        "enqueued_at": to_iso(item.enqueued_at),
        "deadline": to_iso(item.deadline),
        "seconds_remaining": remaining if item.state == "pending" else 0.0,
        "decided_at": to_iso(item.decided_at) if item.decided_at else None,
        "reviewer": item.reviewer,
        "reason_code": item.reason_code,
        "reason_note": item.reason_note,
    }


def create_app(
    store: Store,
    clock,
    poster=None,
    article_urls=None,
    allow_clock_control: bool = False,
) -> FastAPI:
    app = FastAPI(title="counterspeech review API")
    # The reviewer console is served from its own origin (static files or a
    # dev server), so browsers need CORS on every endpoint including SSE.
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    hub = EventHub()
    queue = ReviewQueue(store, article_urls=article_urls, on_event=hub.publish)
    app.state.queue = queue
    app.state.hub = hub
    app.state.clock = clock

    token = os.environ.get(API_TOKEN_ENV)

    def check_auth(request: Request) -> None:
        if not token:
            return
        header = request.headers.get("authorization", "")
        if header != f"Bearer {token}":
            raise HTTPException(status_code=401, detail="missing or invalid bearer token")

    def expire_now() -> datetime:
        now = clock.now()
        queue.expire_overdue(now)
        return now

    @app.get("/queue", dependencies=[Depends(check_auth)])
    async def get_queue(state: str = "pending") -> dict:
        if state not in ("pending", "approved", "rejected", "expired", "all"):
            raise HTTPException(status_code=422, detail=f"unknown state {state!r}")
        now = expire_now()
        items = store.list_review_items(None if state == "all" else state)
        return {
            "now": to_iso(now),
            "items": [_item_view(i, store, now) for i in items],
        }

    @app.get("/items/{item_id}", dependencies=[Depends(check_auth)])
    async def get_item(item_id: str) -> dict:
        now = expire_now()
        item = store.get_review_item(item_id)
        if item is None:
            raise HTTPException(status_code=404, detail=f"no review item {item_id}")
        return _item_view(item, store, now)

    @app.post("/items/{item_id}/decision", dependencies=[Depends(check_auth)])
    async def post_decision(item_id: str, body: DecisionBody) -> dict:
        now = clock.now()
        reason = None
        if body.decision == "reject":
            if body.reason_code not in REJECTION_CODES:
                raise HTTPException(
                    status_code=422,
                    detail=f"reason_code must be one of {list(REJECTION_CODES)}",
                )
            reason = RejectionReason(code=body.reason_code, note=body.note)
        try:
            item = queue.decide(item_id, body.decision, body.reviewer, now, reason)
        except ExpiredItemError as exc:
            raise HTTPException(status_code=410, detail=str(exc)) from exc
        except AlreadyDecidedError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        except StoreIntegrityError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        except InvalidInputError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        if item.state == "approved" and item.kind == "experimental" and poster is not None:
            try:
                queue.post_approved(item, poster, now)
            except InvalidStateError as exc:
                raise HTTPException(status_code=409, detail=str(exc)) from exc
        return _item_view(item, store, clock.now())

    @app.get("/stats/rejections", dependencies=[Depends(check_auth)])
    async def rejection_stats() -> dict:
        histogram = store.rejection_histogram()
        by_code = {code: histogram.get(code, 0) for code in REJECTION_CODES}
        return {"total_rejected": sum(by_code.values()), "by_code": by_code}

    @app.get("/stats/experiment", dependencies=[Depends(check_auth)])
    async def experiment_stats() -> dict:
        now = clock.now()
        assignments = store.list_assignments()
        return {
            "now": to_iso(now),
            "assignments_total": len(assignments),
            "experimental": sum(1 for a in assignments if a.arm == "experimental"),
            "control": sum(1 for a in assignments if a.arm == "control"),
            "posted": sum(1 for a in assignments if a.posted_reply_id is not None),
            "pending_reviews": len(store.list_review_items(state="pending")),
            "snapshots_due": len(store.due_snapshot_tasks(now)),
        }

    @app.get("/queue/events", dependencies=[Depends(check_auth)])
    async def queue_events() -> StreamingResponse:
        subscription = hub.subscribe()

        async def stream():
            try:
                yield _sse("hello", {"now": to_iso(clock.now())})
                while True:
                    try:
                        event = await asyncio.wait_for(
                            subscription.get(), timeout=HEARTBEAT_SECONDS
                        )
                    except asyncio.TimeoutError:
                        expire_now()
                        yield _sse("heartbeat", {"now": to_iso(clock.now())})
                        continue
                    event = dict(event)
                    event["now"] = to_iso(clock.now())
                    yield _sse(event.pop("type"), event)
            finally:
                hub.unsubscribe(subscription)

        return StreamingResponse(
            stream(),
            media_type="text/event-stream",
            headers={"Cache-Control": "no-cache", "X-Accel-Buffering": "no"},
        )

    if allow_clock_control:

        @app.get("/clock", dependencies=[Depends(check_auth)])
        async def get_clock() -> dict:
            return {"now": to_iso(clock.now())}

        @app.post("/clock/advance", dependencies=[Depends(check_auth)])
        async def advance_clock(body: ClockAdvanceBody) -> dict:
            clock.advance(timedelta(seconds=body.seconds))
            expire_now()
            return {"now": to_iso(clock.now())}

    return app


def _sse(event_type: str, payload: dict) -> str:
    return f"event: {event_type}\ndata: {json.dumps(payload)}\n\n"
