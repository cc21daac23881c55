"""Injectable clocks so schedule rules and deadlines are testable."""

from __future__ import annotations

from datetime import datetime, timedelta, timezone


def ensure_utc(ts: datetime) -> datetime:
    """Normalize a timestamp to tz-aware UTC; naive input is rejected."""
    if ts.tzinfo is None:
        raise ValueError("naive datetime; all engine timestamps are tz-aware")
    return ts.astimezone(timezone.utc)


class SystemClock:
    """Wall clock."""

    def now(self) -> datetime:
        return datetime.now(timezone.utc)


class SimulatedClock:
    """Settable clock for replay runs and tests."""

    def __init__(self, start: datetime) -> None:
        self._now = ensure_utc(start)

    def now(self) -> datetime:
        return self._now

    def set(self, ts: datetime) -> None:
        ts = ensure_utc(ts)
        if ts < self._now:
            raise ValueError("simulated clock cannot move backwards")
        self._now = ts

    def advance(self, delta: timedelta) -> datetime:
        if delta < timedelta(0):
            raise ValueError("simulated clock cannot move backwards")
        self._now += delta
        return self._now
