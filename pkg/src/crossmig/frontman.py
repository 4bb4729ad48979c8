"""Temporary data-plane delegate deployed for the migration window.

While the service is in flight the frontman answers its traffic with
retry-later hints; once the service runs at the destination it redirects;
after the name registry has propagated it is disposed. Reply semantics mirror
HTTP 503+Retry-After and 307 in the simulator's own encoding.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .clock import VirtualClock, ns_to_s
from .model import Endpoint


class FrontmanError(RuntimeError):
    pass


class FrontmanMode(str, Enum):
    UNAVAILABLE = "unavailable"
    REDIRECT = "redirect"
    DISPOSED = "disposed"


class ReplyKind(str, Enum):
    RETRY_LATER = "retry_later"
    REDIRECT = "redirect"
    REFUSED = "refused"


@dataclass(frozen=True)
class Reply:
    kind: ReplyKind
    retry_after_s: float = 0.0
    target: Endpoint | None = None


class Frontman:
    def __init__(self, clock: VirtualClock, service_endpoint: Endpoint,
                 estimated_done_ns: int):
        self.clock = clock
        self.service_endpoint = service_endpoint
        self.mode = FrontmanMode.UNAVAILABLE
        self.redirect_target: Endpoint | None = None
        self.estimated_done_ns = estimated_done_ns
        self.cancelled = False
        self.served_log: list[tuple[int, ReplyKind]] = []

    def handle(self, _request: object = None) -> Reply:
        """Answer one data-plane request according to the current mode."""
        now = self.clock.now_ns
        if self.mode is FrontmanMode.DISPOSED:
            return Reply(ReplyKind.REFUSED)
        if self.mode is FrontmanMode.UNAVAILABLE:
            hint = max(0.0, ns_to_s(self.estimated_done_ns - now))
            self.served_log.append((now, ReplyKind.RETRY_LATER))
            return Reply(ReplyKind.RETRY_LATER, retry_after_s=hint)
        self.served_log.append((now, ReplyKind.REDIRECT))
        return Reply(ReplyKind.REDIRECT, target=self.redirect_target)

    def switch_redirect(self, target: Endpoint) -> None:
        if self.mode is not FrontmanMode.UNAVAILABLE:
            raise FrontmanError(f"cannot redirect from {self.mode.value}")
        self.redirect_target = target
        self.mode = FrontmanMode.REDIRECT
        self.redirect_since_ns = self.clock.now_ns

    def dispose(self, dns_ttl_ns: int) -> None:
        """Normal teardown: only once redirecting and the registry update has
        had its TTL to propagate."""
        if self.mode is FrontmanMode.UNAVAILABLE:
            raise FrontmanError("cannot dispose while still unavailable")
        if self.mode is FrontmanMode.DISPOSED:
            return
        if self.clock.now_ns - self.redirect_since_ns < dns_ttl_ns:
            raise FrontmanError("registry TTL has not elapsed")
        self.mode = FrontmanMode.DISPOSED

    def cancel(self) -> None:
        """Rollback teardown: the service resumes at the source, so the
        delegate releases the endpoint immediately. Log is retained."""
        self.mode = FrontmanMode.DISPOSED
        self.cancelled = True


def log_partitions_cleanly(served_log: list[tuple[int, ReplyKind]]) -> bool:
    """True when every retry-later entry precedes every redirect entry."""
    seen_redirect = False
    for _, kind in served_log:
        if kind is ReplyKind.REDIRECT:
            seen_redirect = True
        elif kind is ReplyKind.RETRY_LATER and seen_redirect:
            return False
    return True


__all__ = [
    "FrontmanError", "FrontmanMode", "ReplyKind", "Reply", "Frontman",
    "log_partitions_cleanly",
]
