"""Deterministic virtual-time kernel.

Time is kept as integer nanoseconds so that every run of the simulator is
bit-reproducible; float seconds only appear at the reporting boundary.
Events fire in (timestamp, insertion-sequence) order, which pins down
tie-breaking.
"""

from __future__ import annotations

import heapq
from typing import Callable

NS_PER_S = 1_000_000_000


def s_to_ns(seconds: float) -> int:
    return round(seconds * NS_PER_S)


def ns_to_s(ns: int) -> float:
    return ns / NS_PER_S


class ClockError(RuntimeError):
    pass


class EventHandle:
    __slots__ = ("at_ns", "seq", "fn", "cancelled")

    def __init__(self, at_ns: int, seq: int, fn: Callable[[], None]):
        self.at_ns = at_ns
        self.seq = seq
        self.fn = fn
        self.cancelled = False

    def cancel(self) -> None:
        self.cancelled = True


class VirtualClock:
    """Event queue over virtual nanoseconds.

    Exactly one logical activity (the migration driver) advances time;
    everything else runs as instantaneous callbacks fired while advancing.
    Callbacks may schedule new events but must not re-enter advance().
    """

    def __init__(self, start_ns: int = 0):
        self._now_ns = start_ns
        self._heap: list[tuple[int, int, EventHandle]] = []
        self._seq = 0
        self._advancing = False

    @property
    def now_ns(self) -> int:
        return self._now_ns

    @property
    def now_s(self) -> float:
        return ns_to_s(self._now_ns)

    def schedule_at(self, at_ns: int, fn: Callable[[], None]) -> EventHandle:
        if at_ns < self._now_ns:
            raise ClockError(f"cannot schedule at {at_ns} ns, now is {self._now_ns} ns")
        self._seq += 1
        handle = EventHandle(at_ns, self._seq, fn)
        heapq.heappush(self._heap, (at_ns, self._seq, handle))
        return handle

    def schedule(self, delay_ns: int, fn: Callable[[], None]) -> EventHandle:
        if delay_ns < 0:
            raise ClockError("negative delay")
        return self.schedule_at(self._now_ns + delay_ns, fn)

    def advance_to(self, at_ns: int) -> None:
        """Move time forward to at_ns, firing every due event in order."""
        if at_ns < self._now_ns:
            raise ClockError(f"time cannot move backward ({at_ns} < {self._now_ns})")
        if self._advancing:
            raise ClockError("advance_to re-entered from an event callback")
        self._advancing = True
        try:
            while self._heap and self._heap[0][0] <= at_ns:
                _, _, handle = heapq.heappop(self._heap)
                if handle.cancelled:
                    continue
                self._now_ns = handle.at_ns
                handle.fn()
            self._now_ns = at_ns
        finally:
            self._advancing = False

    def advance(self, delay_ns: int) -> None:
        if delay_ns < 0:
            raise ClockError("negative delay")
        self.advance_to(self._now_ns + delay_ns)

    def run_until_idle(self) -> None:
        """Drain the queue (skipping cancelled entries), advancing as needed."""
        while self._heap:
            at_ns = self._heap[0][0]
            if self._heap[0][2].cancelled:
                heapq.heappop(self._heap)
                continue
            self.advance_to(at_ns)

    def pending(self) -> int:
        return sum(1 for _, _, h in self._heap if not h.cancelled)
