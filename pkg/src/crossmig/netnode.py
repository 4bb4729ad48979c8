"""Multi-process node hosting: one TCP server per node, carrying both the
inter-coordinator protocol and the client plane on the well-known port.

Each node keeps its own virtual clock; wire messages carry the sender's
virtual timestamp and the receiver advances to sender-time plus one link
latency, so the reconstructed session timeline matches the single-process
world exactly (all nodes must share the cost-model config).
"""

from __future__ import annotations

import socket
import threading

from . import wire
from .clock import VirtualClock, s_to_ns
from .config import CostModelConfig
from .coordinator import (Coordinator, DestinationUnavailable, DnsRegistry,
                          RpcTimeout)
from .model import Endpoint, OrchestratorFlavor
from .orchestrator import SimOrchestrator
from .runtime import SimRuntime, TraceLog
from .sync import ConnectionRefused, TcpImageReceiver, ship_tcp

WALL_TIMEOUT_S = 60.0


class TcpTransport:
    def __init__(self, node: "TcpNode"):
        self.node = node

    def request(self, dest: Endpoint, msg: wire.Message, *, timeout_s: float,
                drop_request: str | None = None,
                drop_reply: str | None = None) -> wire.Message:
        clock = self.node.clock
        msg.vtime_ns = clock.now_ns
        try:
            with socket.create_connection((dest.host, dest.port),
                                          timeout=WALL_TIMEOUT_S) as conn:
                conn.settimeout(WALL_TIMEOUT_S)
                wire.send_frame(conn, msg)
                reply = wire.recv_frame(conn)
        except (OSError, wire.WireError) as exc:
            clock.advance(s_to_ns(timeout_s))
            raise DestinationUnavailable(f"{dest}: {exc}") from exc
        lat = s_to_ns(self.node.config.per_message_latency_s)
        clock.advance_to(max(clock.now_ns, reply.vtime_ns + lat))
        return reply

    def notify(self, dest: Endpoint, msg: wire.Message) -> None:
        self.request(dest, msg, timeout_s=self.node.config.rpc_timeout_s)


class RemoteShipper:
    """Source-side stand-in for the destination receiver: buffers the encoded
    frames the coupled scheduler produces, ships them over TCP when the
    stream is complete, and reports the receiver's verdict."""

    def __init__(self, endpoint: Endpoint):
        self.endpoint = endpoint
        self.listening = True
        self._frames: list[bytes] = []
        self._verdict: bool | None = None
        self.error: str | None = None

    def reset(self) -> None:
        self._frames = []
        self._verdict = None
        self.error = None

    def feed_frame(self, frame: bytes) -> None:
        self._frames.append(frame)

    def feed_entry(self, entry) -> None:
        self._frames.append(entry.encode())

    def ok(self) -> bool:
        if self._verdict is None:
            try:
                self._verdict = self._ship()
            except (ConnectionRefused, OSError) as exc:
                self.error = str(exc)
                self._verdict = False
        if not self._verdict and self.error is None:
            self.error = "destination reported a corrupt stream"
        return self._verdict

    def _ship(self) -> bool:
        try:
            conn = socket.create_connection(
                (self.endpoint.host, self.endpoint.port), timeout=WALL_TIMEOUT_S)
        except OSError as exc:
            raise ConnectionRefused(str(exc)) from exc
        with conn:
            conn.settimeout(WALL_TIMEOUT_S)
            for frame in self._frames:
                conn.sendall(len(frame).to_bytes(4, "little") + frame)
            verdict = b""
            while len(verdict) < 1:
                chunk = conn.recv(1)
                if not chunk:
                    return False
                verdict += chunk
        return verdict == b"\x01"


class TcpNode:
    """One orchestrator + runtime + coordinator served over TCP."""

    def __init__(self, name: str, flavor: OrchestratorFlavor, endpoint: Endpoint,
                 config: CostModelConfig, *, capacity_mib: int = 16 * 1024):
        self.name = name
        self.flavor = flavor
        self.endpoint = endpoint
        self.config = config
        self.clock = VirtualClock()
        self.trace = TraceLog()
        self.dns = DnsRegistry(self.clock)
        self.runtime = SimRuntime(name, self.clock, config, self.trace,
                                  inline_pages=True)
        self.orchestrator = SimOrchestrator(flavor, self.runtime, config,
                                            capacity_mib=capacity_mib)
        self._receivers: list[TcpImageReceiver] = []
        self._service_port = 9100
        self._lock = threading.Lock()
        self._sock: socket.socket | None = None
        self._stopping = threading.Event()
        self.coordinator = Coordinator(
            node_id=name, flavor=flavor, endpoint=endpoint, clock=self.clock,
            config=config, orchestrator=self.orchestrator, runtime=self.runtime,
            transport=TcpTransport(self), dns=self.dns,
            receiver_factory=self._make_receiver,
            resolve_receiver=lambda ep: RemoteShipper(ep),
            service_endpoint_allocator=self._alloc_service_endpoint,
            exercise_codec=True)

    def _make_receiver(self):
        receiver = TcpImageReceiver(self.endpoint.host)
        self._receivers.append(receiver)
        return receiver, receiver.core, receiver.endpoint

    def _alloc_service_endpoint(self) -> Endpoint:
        self._service_port += 1
        return Endpoint(self.endpoint.host, self._service_port)

    # -- serving ------------------------------------------------------------
    def bind(self) -> None:
        self._sock = socket.create_server(
            (self.endpoint.host, self.endpoint.port), reuse_port=False)

    def serve_forever(self) -> None:
        if self._sock is None:
            self.bind()
        while not self._stopping.is_set():
            try:
                conn, _ = self._sock.accept()
            except OSError:
                break
            threading.Thread(target=self._handle_conn, args=(conn,),
                             daemon=True).start()

    def start(self) -> threading.Thread:
        self.bind()
        thread = threading.Thread(target=self.serve_forever, daemon=True)
        thread.start()
        return thread

    def _handle_conn(self, conn: socket.socket) -> None:
        with conn:
            try:
                conn.settimeout(WALL_TIMEOUT_S)
                msg = wire.recv_frame(conn)
            except wire.WireError as exc:
                reply = wire.ErrorReply(reason=f"protocol error: {exc}")
                try:
                    wire.send_frame(conn, reply)
                except OSError:
                    pass
                return
            except OSError:
                return
            if isinstance(msg, wire.Shutdown):
                wire.send_frame(conn, wire.PingAck())
                self.stop()
                return
            with self._lock:
                lat = s_to_ns(self.config.per_message_latency_s)
                self.clock.advance_to(max(self.clock.now_ns, msg.vtime_ns + lat))
                reply = self.coordinator.handle_message(msg)
                reply.vtime_ns = self.clock.now_ns
            try:
                wire.send_frame(conn, reply)
            except OSError:
                pass

    def stop(self) -> None:
        self._stopping.set()
        for receiver in self._receivers:
            receiver.close()
        if self._sock is not None:
            try:
                self._sock.close()
            except OSError:
                pass


def client_request(endpoint: Endpoint, msg: wire.Message,
                   timeout_s: float = WALL_TIMEOUT_S) -> wire.Message:
    """One-shot client call to a node's coordinator port."""
    with socket.create_connection((endpoint.host, endpoint.port),
                                  timeout=timeout_s) as conn:
        conn.settimeout(timeout_s)
        wire.send_frame(conn, msg)
        return wire.recv_frame(conn)


__all__ = ["TcpTransport", "RemoteShipper", "TcpNode", "client_request",
           "WALL_TIMEOUT_S"]
