"""Fault injection hooks for protocol-safety testing.

Components call `check(point)` at instrumented points; an armed injector
raises exactly once per armed point, which lets a harness fail any single
protocol step in an otherwise healthy run.
"""

from __future__ import annotations


class InjectedFault(RuntimeError):
    def __init__(self, point: str):
        self.point = point
        super().__init__(f"injected fault at {point}")


class FaultInjector:
    def __init__(self, points: set[str] | None = None, *, once: bool = True):
        self._armed = set(points or ())
        self._once = once
        self.fired: list[str] = []

    def arm(self, point: str) -> None:
        self._armed.add(point)

    def armed(self, point: str) -> bool:
        return point in self._armed

    def check(self, point: str) -> None:
        if point in self._armed:
            if self._once:
                self._armed.discard(point)
            self.fired.append(point)
            raise InjectedFault(point)

    def consume(self, point: str) -> bool:
        """Non-raising variant for hooks that corrupt rather than abort."""
        if point in self._armed:
            if self._once:
                self._armed.discard(point)
            self.fired.append(point)
            return True
        return False


NO_FAULTS = FaultInjector()

__all__ = ["InjectedFault", "FaultInjector", "NO_FAULTS"]
