"""Wire protocol: tagged messages in canonical JSON, length-prefixed on TCP.

Two planes share the coordinator port: the inter-coordinator migration
protocol (ping/create/restore/abort) and the client plane the CLI uses
(deploy/migrate/status). Every inter-coordinator message carries the session
id except a bare liveness ping. Messages also carry the sender's virtual
timestamp so node clocks stay consistent across processes.
"""

from __future__ import annotations

import json
import socket
import struct
from dataclasses import dataclass, field, fields as dc_fields
from typing import Any, ClassVar

from .model import ContainerSpec, Endpoint, MigrationApproach, canonical_json

_U32 = struct.Struct("<I")
MAX_FRAME = 16 * 1024 * 1024


class WireError(RuntimeError):
    pass


_REGISTRY: dict[str, type] = {}


def _wire(tag: str, *, needs_session: bool = False):
    def deco(cls):
        cls.TAG = tag
        cls.NEEDS_SESSION = needs_session
        _REGISTRY[tag] = cls
        return cls
    return deco


@dataclass
class Message:
    TAG: ClassVar[str] = ""
    NEEDS_SESSION: ClassVar[bool] = False
    vtime_ns: int = 0

    def _body(self) -> dict[str, Any]:
        out = {}
        for f in dc_fields(self):
            v = getattr(self, f.name)
            if isinstance(v, Endpoint):
                v = v.to_dict()
            elif isinstance(v, ContainerSpec):
                v = v.to_dict()
            elif isinstance(v, MigrationApproach):
                v = v.value
            out[f.name] = v
        return out

    def encode(self) -> bytes:
        body = self._body()
        body["type"] = self.TAG
        return canonical_json(body).encode()

    def frame(self) -> bytes:
        raw = self.encode()
        return _U32.pack(len(raw)) + raw


def decode_message(raw: bytes) -> Message:
    try:
        body = json.loads(raw.decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise WireError(f"undecodable message: {exc}") from exc
    if not isinstance(body, dict) or "type" not in body:
        raise WireError("message must be an object with a type tag")
    tag = body.pop("type")
    cls = _REGISTRY.get(tag)
    if cls is None:
        raise WireError(f"unknown message tag {tag!r}")
    kwargs = {}
    try:
        for f in dc_fields(cls):
            if f.name not in body:
                continue
            v = body[f.name]
            if f.name in ("destination", "requester", "receiver_endpoint",
                          "service_endpoint", "endpoint") and isinstance(v, dict):
                v = Endpoint.from_dict(v)
            elif f.name == "spec" and isinstance(v, dict):
                v = ContainerSpec.from_dict(v)
            elif f.name in ("approach", "approach_override") and v:
                v = MigrationApproach(v)
            kwargs[f.name] = v
        msg = cls(**kwargs)
    except (TypeError, KeyError, ValueError) as exc:
        raise WireError(f"malformed {tag} message: {exc}") from exc
    if cls.NEEDS_SESSION and not getattr(msg, "session_id", ""):
        raise WireError(f"{tag} message requires a session_id")
    return msg


# -- inter-coordinator plane -------------------------------------------------

@_wire("ping")
@dataclass
class Ping(Message):
    session_id: str = ""  # empty for a bare liveness probe


@_wire("ping_ack")
@dataclass
class PingAck(Message):
    session_id: str = ""
    flavor: str = ""  # responder's orchestrator flavor, for feasibility checks


@_wire("create_container", needs_session=True)
@dataclass
class CreateContainer(Message):
    session_id: str = ""
    spec: ContainerSpec | None = None
    approach: MigrationApproach | None = None


@_wire("created", needs_session=True)
@dataclass
class Created(Message):
    session_id: str = ""
    receiver_endpoint: Endpoint | None = None
    create_s: float = 0.0


@_wire("restore", needs_session=True)
@dataclass
class RestoreCmd(Message):
    session_id: str = ""


@_wire("restored", needs_session=True)
@dataclass
class Restored(Message):
    session_id: str = ""
    service_endpoint: Endpoint | None = None
    restore_s: float = 0.0


@_wire("restore_failed", needs_session=True)
@dataclass
class RestoreFailed(Message):
    session_id: str = ""
    reason: str = ""


@_wire("abort", needs_session=True)
@dataclass
class Abort(Message):
    session_id: str = ""


@_wire("error")
@dataclass
class ErrorReply(Message):
    reason: str = ""
    session_id: str = ""


@_wire("notify_endpoint", needs_session=True)
@dataclass
class NotifyEndpoint(Message):
    """Tells the migration requester where the service now lives."""
    session_id: str = ""
    service_endpoint: Endpoint | None = None


# -- client plane --------------------------------------------------------------

@_wire("deploy")
@dataclass
class DeployCmd(Message):
    spec: ContainerSpec | None = None
    workload: dict | None = None


@_wire("deployed")
@dataclass
class Deployed(Message):
    container_id: str = ""


@_wire("migrate")
@dataclass
class MigrateCmd(Message):
    container_id: str = ""
    destination: Endpoint | None = None
    approach_override: MigrationApproach | None = None
    requester: Endpoint | None = None


@_wire("migrate_result")
@dataclass
class MigrateResult(Message):
    ok: bool = False
    session: dict | None = None
    error: str = ""


@_wire("status")
@dataclass
class StatusQuery(Message):
    session_id: str = ""


@_wire("status_reply")
@dataclass
class StatusReply(Message):
    sessions: list = field(default_factory=list)


@_wire("node_info")
@dataclass
class NodeInfoQuery(Message):
    pass


@_wire("node_info_reply")
@dataclass
class NodeInfoReply(Message):
    flavor: str = ""
    containers: list = field(default_factory=list)
    capacity_mib: int = 0


@_wire("shutdown")
@dataclass
class Shutdown(Message):
    pass


# -- framing over sockets -------------------------------------------------------

def send_frame(conn: socket.socket, msg: Message) -> None:
    conn.sendall(msg.frame())


def recv_frame(conn: socket.socket) -> Message:
    header = _recv_exact(conn, 4)
    length = _U32.unpack(header)[0]
    if length > MAX_FRAME:
        raise WireError(f"frame of {length} bytes exceeds limit")
    return decode_message(_recv_exact(conn, length))


def _recv_exact(conn: socket.socket, n: int) -> bytes:
    buf = b""
    while len(buf) < n:
        chunk = conn.recv(n - len(buf))
        if not chunk:
            raise WireError("connection closed")
        buf += chunk
    return buf


__all__ = [
    "WireError", "Message", "decode_message", "Ping", "PingAck",
    "CreateContainer", "Created", "RestoreCmd", "Restored", "RestoreFailed",
    "Abort", "ErrorReply", "NotifyEndpoint", "DeployCmd", "Deployed",
    "MigrateCmd", "MigrateResult", "StatusQuery", "StatusReply",
    "NodeInfoQuery", "NodeInfoReply", "Shutdown", "send_frame", "recv_frame",
    "MAX_FRAME",
]
