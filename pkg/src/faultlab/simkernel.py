"""Deterministic discrete-event kernel with a millisecond virtual clock."""

from __future__ import annotations

import enum
import heapq
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np


class TimeTravel(ValueError):
    pass


class EventKind(enum.Enum):
    INJECT = "Inject"
    FAILURE_REPORT = "FailureReport"
    RECOVERY_PHASE = "RecoveryPhase"
    TELEMETRY_TICK = "TelemetryTick"
    LOG_EMIT = "LogEmit"
    RESTORE = "Restore"


# Telemetry ticks observe the state at the end of their millisecond, after
# every other event scheduled for that instant.
_PRIORITY = {EventKind.TELEMETRY_TICK: 1}


@dataclass(order=True)
class Event:
    time: int
    priority: int
    seq: int
    kind: EventKind = field(compare=False)
    action: Callable[..., Any] = field(compare=False, repr=False)
    payload: tuple = field(compare=False, default=())


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 stream for a 64-bit seed."""
    return np.random.Generator(np.random.PCG64(seed & 0xFFFF_FFFF_FFFF_FFFF))


class Kernel:
    def __init__(self, seed: int = 0):
        self.now = 0
        self.seed = seed
        self.rng = make_rng(seed)
        self._queue: list[Event] = []
        self._seq = 0
        self.scheduled = 0
        self.dispatched = 0

    def schedule(self, time: int, kind: EventKind, action: Callable[..., Any], *payload) -> Event:
        time = int(time)
        if time < self.now:
            raise TimeTravel(f"event at {time} ms scheduled while clock is at {self.now} ms")
        ev = Event(time, _PRIORITY.get(kind, 0), self._seq, kind, action, payload)
        self._seq += 1
        self.scheduled += 1
        heapq.heappush(self._queue, ev)
        return ev

    def after(self, delay: int, kind: EventKind, action: Callable[..., Any], *payload) -> Event:
        return self.schedule(self.now + int(delay), kind, action, *payload)

    @property
    def pending(self) -> int:
        return len(self._queue)

    def peek_time(self) -> int | None:
        return self._queue[0].time if self._queue else None

    def run_until(self, t_end: int) -> int:
        """Dispatch every event with time <= t_end, then park the clock at t_end."""
        count = 0
        while self._queue and self._queue[0].time <= t_end:
            ev = heapq.heappop(self._queue)
            self.now = ev.time
            ev.action(*ev.payload)
            count += 1
        self.dispatched += count
        self.now = max(self.now, int(t_end))
        return count
