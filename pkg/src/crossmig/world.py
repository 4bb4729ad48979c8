"""Single-process hosting of simulated nodes on one shared virtual clock.

This is the deterministic substrate used by tests, experiments, and the CLI's
single-process mode: wire messages still pass through the codec, but delivery
is an in-memory hop charged with the link latency. Multi-process TCP hosting
lives in netnode.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import wire
from .clock import VirtualClock, s_to_ns
from .config import CostModelConfig
from .coordinator import (Coordinator, DestinationUnavailable, DnsRegistry,
                          MigrationRequest, RpcTimeout)
from .faults import NO_FAULTS, FaultInjector
from .frontman import Frontman, ReplyKind
from .model import ContainerSpec, Endpoint, MigrationApproach, OrchestratorFlavor
from .orchestrator import SimOrchestrator
from .runtime import SimRuntime, TraceLog
from .sync import ImageReceiver


class InProcTransport:
    """Synchronous request/reply between coordinators sharing one clock."""

    def __init__(self, world: "World"):
        self.world = world

    def _lat_ns(self) -> int:
        return s_to_ns(self.world.config.per_message_latency_s)

    def request(self, dest: Endpoint, msg: wire.Message, *, timeout_s: float,
                drop_request: str | None = None,
                drop_reply: str | None = None) -> wire.Message:
        world = self.world
        clock = world.clock
        msg.vtime_ns = clock.now_ns
        raw = msg.encode()
        if drop_request and world.faults.consume(drop_request):
            clock.advance(s_to_ns(timeout_s))
            raise RpcTimeout(f"no reply to {msg.TAG}")
        node = world.node_at(dest)
        if node is None or not node.alive:
            clock.advance(s_to_ns(timeout_s))
            raise DestinationUnavailable(f"nothing listening at {dest}")
        clock.advance(self._lat_ns())
        reply = node.coordinator.handle_message(wire.decode_message(raw))
        reply.vtime_ns = clock.now_ns
        raw_reply = reply.encode()
        if drop_reply and world.faults.consume(drop_reply):
            clock.advance(s_to_ns(timeout_s))
            raise RpcTimeout(f"reply to {msg.TAG} lost")
        clock.advance(self._lat_ns())
        return wire.decode_message(raw_reply)

    def notify(self, dest: Endpoint, msg: wire.Message) -> None:
        world = self.world
        msg.vtime_ns = world.clock.now_ns
        raw = msg.encode()
        node = world.node_at(dest)
        if node is None or not node.alive:
            raise DestinationUnavailable(f"nothing listening at {dest}")
        world.clock.advance(self._lat_ns())
        node.coordinator.handle_message(wire.decode_message(raw))


class Node:
    def __init__(self, world: "World", name: str, flavor: OrchestratorFlavor,
                 capacity_mib: int = 16 * 1024, capacity_millicores: int = 8000):
        self.world = world
        self.name = name
        self.flavor = flavor
        self.endpoint = Endpoint(name, 7000)
        self.alive = True
        self._next_service_port = 9100
        self._next_receiver_port = 9600
        self.runtime = SimRuntime(name, world.clock, world.config, world.trace,
                                  inline_pages=world.inline_pages,
                                  faults=world.faults)
        self.orchestrator = SimOrchestrator(
            flavor, self.runtime, world.config, capacity_mib=capacity_mib,
            capacity_millicores=capacity_millicores, faults=world.faults)
        self.coordinator = Coordinator(
            node_id=name, flavor=flavor, endpoint=self.endpoint,
            clock=world.clock, config=world.config,
            orchestrator=self.orchestrator, runtime=self.runtime,
            transport=InProcTransport(world), dns=world.dns,
            receiver_factory=self._make_receiver,
            resolve_receiver=world.resolve_receiver,
            service_endpoint_allocator=self._alloc_service_endpoint,
            register_service=world.register_service,
            release_endpoint=world.release_endpoint,
            exercise_codec=world.exercise_codec,
            faults=world.faults)

    def _alloc_service_endpoint(self) -> Endpoint:
        ep = Endpoint(self.name, self._next_service_port)
        self._next_service_port += 1
        return ep

    def _make_receiver(self):
        ep = Endpoint(self.name, self._next_receiver_port)
        self._next_receiver_port += 1
        receiver = ImageReceiver(ep)
        self.world.receivers[str(ep)] = receiver
        return receiver, receiver, ep


class World:
    """All nodes of one deterministic scenario plus shared observability."""

    def __init__(self, config: CostModelConfig | None = None, *,
                 inline_pages: bool = True, exercise_codec: bool = True,
                 faults: FaultInjector | None = None):
        self.config = config or CostModelConfig()
        self.clock = VirtualClock()
        self.trace = TraceLog()
        self.dns = DnsRegistry(self.clock)
        self.faults = faults or FaultInjector()
        self.inline_pages = inline_pages
        self.exercise_codec = exercise_codec
        self.nodes: dict[str, Node] = {}
        self.receivers: dict[str, ImageReceiver] = {}
        self.service_owners: dict[str, list[object]] = {}

    # -- topology -----------------------------------------------------------
    def add_node(self, name: str, flavor: OrchestratorFlavor,
                 capacity_mib: int = 16 * 1024) -> Node:
        if name in self.nodes:
            raise ValueError(f"node {name} already exists")
        node = Node(self, name, flavor, capacity_mib=capacity_mib)
        self.nodes[name] = node
        return node

    def node_at(self, endpoint: Endpoint) -> Node | None:
        node = self.nodes.get(endpoint.host)
        if node is not None and node.endpoint.port == endpoint.port:
            return node
        return None

    def resolve_receiver(self, endpoint: Endpoint) -> ImageReceiver | None:
        return self.receivers.get(str(endpoint))

    # -- service routing (data plane) ----------------------------------------
    def register_service(self, endpoint: Endpoint, owner: object) -> None:
        stack = self.service_owners.setdefault(str(endpoint), [])
        if isinstance(owner, Frontman):
            stack.append(owner)  # takeover; released on disposal
        else:
            if stack:
                stack[0] = owner
            else:
                stack.append(owner)

    def release_endpoint(self, endpoint: Endpoint) -> None:
        stack = self.service_owners.get(str(endpoint))
        if stack and isinstance(stack[-1], Frontman):
            stack.pop()

    def data_plane_request(self, service_name: str) -> str:
        """One client request addressed by name; returns the reply kind and
        logs it in the trace. Redirects are followed once."""
        t = self.clock.now_ns
        kind = self._route(service_name)
        self.trace.request(t, service_name, kind)
        return kind

    def _route(self, service_name: str) -> str:
        ep = self.dns.resolve(service_name)
        if ep is None:
            return "dropped"
        owner = self._owner(ep)
        if owner is None:
            return "dropped"
        if isinstance(owner, Frontman):
            reply = owner.handle()
            if reply.kind is ReplyKind.RETRY_LATER:
                return "retry_later"
            if reply.kind is ReplyKind.REDIRECT:
                target = self._owner(reply.target)
                if target is not None and getattr(target, "service_active", False):
                    return "redirect"
                return "redirect_dangling"
            return "refused"
        if getattr(owner, "service_active", False):
            return "ok"
        return "unavailable"

    def _owner(self, endpoint: Endpoint) -> object | None:
        stack = self.service_owners.get(str(endpoint))
        return stack[-1] if stack else None

    # -- convenience ----------------------------------------------------------
    def deploy(self, node: Node, spec: ContainerSpec,
               workload: dict | None = None) -> str:
        reply = node.coordinator.handle_message(
            wire.DeployCmd(spec=spec, workload=workload))
        if isinstance(reply, wire.ErrorReply):
            raise RuntimeError(f"deploy failed: {reply.reason}")
        return reply.container_id

    def migrate(self, src: Node, container_id: str, dst: Node, *,
                approach_override: MigrationApproach | None = None,
                requester: Endpoint | None = None):
        req = MigrationRequest(container_id=container_id,
                               destination=dst.endpoint,
                               approach_override=approach_override,
                               requester=requester)
        return src.coordinator.handle_migration_request(req)

    def run_for(self, seconds: float) -> None:
        self.clock.advance(s_to_ns(seconds))


def two_node_world(src_flavor: OrchestratorFlavor,
                   dst_flavor: OrchestratorFlavor,
                   config: CostModelConfig | None = None, *,
                   inline_pages: bool = True,
                   exercise_codec: bool = True,
                   faults: FaultInjector | None = None) -> tuple[World, Node, Node]:
    world = World(config, inline_pages=inline_pages,
                  exercise_codec=exercise_codec, faults=faults)
    return world, world.add_node("src", src_flavor), world.add_node("dst", dst_flavor)


__all__ = ["InProcTransport", "Node", "World", "two_node_world"]
