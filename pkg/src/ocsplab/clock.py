"""Injected clocks with millisecond resolution.

Every component that needs time takes a clock, so tests and the in-process
demo run on a manual clock whose sleeps cost nothing, while live HTTP use
runs on the system clock.
"""

from __future__ import annotations

import threading
import time
from datetime import datetime, timedelta, timezone
from typing import Protocol, runtime_checkable


def truncate_ms(instant: datetime) -> datetime:
    return instant.replace(microsecond=instant.microsecond // 1000 * 1000)


@runtime_checkable
class Clock(Protocol):
    def now(self) -> datetime: ...

    def sleep(self, duration: timedelta) -> None: ...


class SystemClock:
    """Wall-clock time, truncated to milliseconds."""

    def now(self) -> datetime:
        return truncate_ms(datetime.now(timezone.utc))

    def sleep(self, duration: timedelta) -> None:
        seconds = duration.total_seconds()
        if seconds > 0:
            time.sleep(seconds)


class ManualClock:
    """A settable clock; sleeping advances it instantly.

    Thread-safe so an HTTP responder thread and a test can share one.
    Sub-millisecond advances accumulate internally but ``now`` always
    reports whole milliseconds.
    """

    def __init__(self, start: datetime):
        if start.tzinfo is None:
            start = start.replace(tzinfo=timezone.utc)
        self._now = start
        self._lock = threading.Lock()

    def now(self) -> datetime:
        with self._lock:
            return truncate_ms(self._now)

    def sleep(self, duration: timedelta) -> None:
        if duration > timedelta(0):
            self.advance(duration)

    def advance(self, duration: timedelta) -> None:
        with self._lock:
            self._now += duration

    def set(self, instant: datetime) -> None:
        if instant.tzinfo is None:
            instant = instant.replace(tzinfo=timezone.utc)
        with self._lock:
            self._now = instant


def sleep_until(clock: Clock, instant: datetime) -> None:
    clock.sleep(instant - clock.now())
