"""Per-system migration coordinator.

Serves the inter-system wire protocol, detects the feasible migration
approach, drives the fifteen-step/three-phase session state machine from the
source side, answers the destination-side handlers (create, restore, abort),
and rolls a failed session back so the service keeps running at the source.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol

from . import wire
from .checkpoint import WriteEventJournal
from .clock import VirtualClock, ns_to_s, s_to_ns
from .config import CostModelConfig
from .faults import NO_FAULTS, FaultInjector, InjectedFault
from .frontman import Frontman
from .model import (ContainerSpec, Endpoint, MigrationApproach,
                    MigrationReport, MigrationSession, Phase, Structure)
from .orchestrator import (OrchestratorError, ResourceUnavailable,
                           SimOrchestrator, native_migrate_supported)
from .runtime import (CheckpointScope, ContainerState, InvalidState,
                      RuntimeSimError, SimContainer, SimRuntime)
from .sync import (ConnectionRefused, CorruptedStream, ImageReceiver,
                   LinkModel, coupled_checkpoint_transfer)


class CoordinatorError(RuntimeError):
    pass


class Infeasible(CoordinatorError):
    pass


class DestinationUnavailable(CoordinatorError):
    pass


class CreateFailed(CoordinatorError):
    pass


class RestoreFailedError(CoordinatorError):
    pass


class RpcTimeout(CoordinatorError):
    pass


@dataclass(frozen=True)
class MigrationRequest:
    container_id: str
    destination: Endpoint
    approach_override: Optional[MigrationApproach] = None
    requester: Optional[Endpoint] = None


class PeerTransport(Protocol):
    def request(self, dest: Endpoint, msg: wire.Message, *, timeout_s: float,
                drop_request: str | None = None,
                drop_reply: str | None = None) -> wire.Message: ...

    def notify(self, dest: Endpoint, msg: wire.Message) -> None: ...


class DnsRegistry:
    """Process-local name registry standing in for DNS; updates become
    visible after a TTL."""

    def __init__(self, clock: VirtualClock):
        self.clock = clock
        self._names: dict[str, Endpoint] = {}

    def publish(self, name: str, endpoint: Endpoint) -> None:
        self._names[name] = endpoint

    def resolve(self, name: str) -> Endpoint | None:
        return self._names.get(name)

    def request_update(self, name: str, endpoint: Endpoint, ttl_ns: int) -> None:
        self.clock.schedule(ttl_ns, lambda: self.publish(name, endpoint))


def feasible_approaches(structure: Structure, src, dst) -> set[MigrationApproach]:
    out: set[MigrationApproach] = set()
    if structure is Structure.NESTED:
        out.add(MigrationApproach.CONTAINER_LEVEL)
    if structure is Structure.MIGRATABLE_IMAGE:
        out.add(MigrationApproach.SERVICE_LEVEL)
    if structure is Structure.PLAIN and native_migrate_supported(src, dst):
        out.add(MigrationApproach.ORCHESTRATOR_LEVEL)
    return out


def determine_approach(spec: ContainerSpec, src_flavor, dst_flavor,
                       override: MigrationApproach | None = None) -> MigrationApproach:
    """Pure feasibility rule: the container structure dictates the approach;
    a plain container can only move between mutually modified orchestrators."""
    feasible = feasible_approaches(spec.structure, src_flavor, dst_flavor)
    if override is not None:
        if override in feasible:
            return override
        raise Infeasible(
            f"override {override.value} infeasible for structure "
            f"{spec.structure.value} across {src_flavor.value}->{dst_flavor.value}")
    for approach in (MigrationApproach.CONTAINER_LEVEL,
                     MigrationApproach.SERVICE_LEVEL,
                     MigrationApproach.ORCHESTRATOR_LEVEL):
        if approach in feasible:
            return approach
    raise Infeasible(
        f"structure {spec.structure.value} cannot migrate across "
        f"{src_flavor.value}->{dst_flavor.value}")


@dataclass
class _DestSession:
    """Destination-side bookkeeping for one incoming migration."""
    spec: ContainerSpec
    approach: MigrationApproach
    container: SimContainer
    receiver: ImageReceiver
    receiver_handle: object = None


class Coordinator:
    """One coordinator per node; the same object serves as protocol source
    and destination. In-process sessions run one at a time (experiment worlds
    are single-driver); the TCP node server serializes handlers per node."""

    def __init__(self, node_id: str, flavor, endpoint: Endpoint,
                 clock: VirtualClock, config: CostModelConfig,
                 orchestrator: SimOrchestrator, runtime: SimRuntime,
                 transport: PeerTransport, dns: DnsRegistry, *,
                 receiver_factory: Callable[[], tuple[object, ImageReceiver, Endpoint]],
                 resolve_receiver: Callable[[Endpoint], object],
                 service_endpoint_allocator: Callable[[], Endpoint],
                 register_service: Callable[[Endpoint, object], None] = lambda e, o: None,
                 release_endpoint: Callable[[Endpoint], None] = lambda e: None,
                 exercise_codec: bool = True,
                 faults: FaultInjector = NO_FAULTS):
        self.node_id = node_id
        self.flavor = flavor
        self.endpoint = endpoint
        self.clock = clock
        self.config = config
        self.orchestrator = orchestrator
        self.runtime = runtime
        self.transport = transport
        self.dns = dns
        self.receiver_factory = receiver_factory
        self.resolve_receiver = resolve_receiver
        self.allocate_service_endpoint = service_endpoint_allocator
        self.register_service = register_service
        self.release_endpoint = release_endpoint
        self.exercise_codec = exercise_codec
        self.faults = faults
        self.sessions: dict[str, MigrationSession] = {}
        self.dest_sessions: dict[str, _DestSession] = {}
        self.service_endpoints: dict[str, Endpoint] = {}
        self.frontmen: dict[str, Frontman] = {}
        self.notifications: list[wire.NotifyEndpoint] = []
        self._session_seq = 0
        self._driving = False

    # ------------------------------------------------------------------
    # destination-side protocol handlers
    # ------------------------------------------------------------------
    def handle_message(self, msg: wire.Message) -> wire.Message:
        try:
            if isinstance(msg, wire.Ping):
                return wire.PingAck(session_id=msg.session_id,
                                    flavor=self.flavor.value)
            if isinstance(msg, wire.CreateContainer):
                return self._handle_create(msg)
            if isinstance(msg, wire.RestoreCmd):
                return self._handle_restore(msg)
            if isinstance(msg, wire.Abort):
                return self._handle_abort(msg)
            if isinstance(msg, wire.NotifyEndpoint):
                self.notifications.append(msg)
                return wire.PingAck(session_id=msg.session_id)
            if isinstance(msg, wire.DeployCmd):
                return self._handle_deploy(msg)
            if isinstance(msg, wire.MigrateCmd):
                return self._handle_migrate_cmd(msg)
            if isinstance(msg, wire.StatusQuery):
                return self._handle_status(msg)
            if isinstance(msg, wire.NodeInfoQuery):
                return wire.NodeInfoReply(
                    flavor=self.flavor.value,
                    containers=sorted(self.orchestrator.registry),
                    capacity_mib=self.orchestrator.capacity_mib)
            return wire.ErrorReply(reason=f"unhandled message {msg.TAG}")
        except CoordinatorError as exc:
            return wire.ErrorReply(reason=str(exc),
                                   session_id=getattr(msg, "session_id", ""))

    def _handle_create(self, msg: wire.CreateContainer) -> wire.Message:
        if msg.session_id in self.dest_sessions:
            return wire.ErrorReply(reason="session already created",
                                   session_id=msg.session_id)
        try:
            container, duration_ns = self.orchestrator.create(
                msg.spec, migration_target=True)
        except (ResourceUnavailable, OrchestratorError, RuntimeSimError,
                InjectedFault) as exc:
            return wire.ErrorReply(reason=f"create failed: {exc}",
                                   session_id=msg.session_id)
        self.clock.advance(duration_ns)
        try:
            self.faults.check("receiver_bind")
            handle, receiver, receiver_ep = self.receiver_factory()
        except InjectedFault as exc:
            self.orchestrator.delete(msg.spec.container_id)
            return wire.ErrorReply(reason=f"receiver bind failed: {exc}",
                                   session_id=msg.session_id)
        self.dest_sessions[msg.session_id] = _DestSession(
            spec=msg.spec, approach=msg.approach, container=container,
            receiver=receiver, receiver_handle=handle)
        return wire.Created(session_id=msg.session_id,
                            receiver_endpoint=receiver_ep,
                            create_s=ns_to_s(duration_ns))

    def _handle_restore(self, msg: wire.RestoreCmd) -> wire.Message:
        ds = self.dest_sessions.get(msg.session_id)
        if ds is None:
            return wire.RestoreFailed(session_id=msg.session_id,
                                      reason="unknown session")
        if not ds.receiver.complete.is_set():
            return wire.RestoreFailed(session_id=msg.session_id,
                                      reason="IncompleteJournal: transfer not finished")
        if ds.receiver.error:
            return wire.RestoreFailed(session_id=msg.session_id,
                                      reason=f"DigestMismatch: {ds.receiver.error}")
        from .checkpoint import CheckpointError
        try:
            image = ds.receiver.take_image()
            duration_ns = self.runtime.restore(image, ds.container, ds.approach)
        except (RuntimeSimError, CheckpointError, InjectedFault) as exc:
            return wire.RestoreFailed(session_id=msg.session_id,
                                      reason=f"restore failed: {exc}")
        self.clock.advance(duration_ns)
        service_ep = self.allocate_service_endpoint()
        self.service_endpoints[ds.spec.container_id] = service_ep
        self.register_service(service_ep, ds.container)
        return wire.Restored(session_id=msg.session_id,
                             service_endpoint=service_ep,
                             restore_s=ns_to_s(duration_ns))

    def _handle_abort(self, msg: wire.Abort) -> wire.Message:
        ds = self.dest_sessions.pop(msg.session_id, None)
        if ds is not None:
            ds.receiver.close()
            if ds.spec.container_id in self.orchestrator.registry:
                self.orchestrator.delete(ds.spec.container_id)
        return wire.PingAck(session_id=msg.session_id)

    # ------------------------------------------------------------------
    # client plane
    # ------------------------------------------------------------------
    def _handle_deploy(self, msg: wire.DeployCmd) -> wire.Message:
        from .runtime import DynamicLinear, Memhog  # local to avoid cycle noise
        try:
            container, duration_ns = self.orchestrator.create(msg.spec)
        except (OrchestratorError, RuntimeSimError, ValueError) as exc:
            return wire.ErrorReply(reason=str(exc))
        self.clock.advance(duration_ns)
        if msg.workload:
            kind = msg.workload.get("kind")
            if kind == "memhog":
                wl = Memhog(msg.workload["footprint_mib"],
                            msg.workload.get("child_count", 0))
            elif kind == "dynamic_linear":
                wl = DynamicLinear(msg.workload["start_mib"],
                                   msg.workload["rate_mib_per_s"],
                                   msg.workload["cap_mib"])
            else:
                return wire.ErrorReply(reason=f"unknown workload {kind!r}")
            self.runtime.run_workload(container, wl)
        ep = self.allocate_service_endpoint()
        self.service_endpoints[msg.spec.container_id] = ep
        self.register_service(ep, container)
        self.dns.publish(msg.spec.name, ep)
        return wire.Deployed(container_id=msg.spec.container_id)

    def _handle_migrate_cmd(self, msg: wire.MigrateCmd) -> wire.Message:
        req = MigrationRequest(container_id=msg.container_id,
                               destination=msg.destination,
                               approach_override=msg.approach_override,
                               requester=msg.requester)
        session = self.handle_migration_request(req)
        ok = session.phase is Phase.COMPLETED
        return wire.MigrateResult(ok=ok, session=session.to_dict(),
                                  error="" if ok else session.failure_reason)

    def _handle_status(self, msg: wire.StatusQuery) -> wire.Message:
        if msg.session_id:
            s = self.sessions.get(msg.session_id) or self.dest_sessions.get(msg.session_id)
            if isinstance(s, MigrationSession):
                return wire.StatusReply(sessions=[s.to_dict()])
            return wire.StatusReply(sessions=[])
        return wire.StatusReply(
            sessions=[s.to_dict() for _, s in sorted(self.sessions.items())])

    # ------------------------------------------------------------------
    # source-side protocol driver
    # ------------------------------------------------------------------
    def handle_migration_request(self, req: MigrationRequest) -> MigrationSession:
        """Drive one full migration; returns the session, Completed with a
        report on success, RolledBack otherwise."""
        if self._driving:
            raise CoordinatorError("coordinator already driving a session")
        if req.destination == self.endpoint:
            raise CoordinatorError("destination must differ from the source")
        self._session_seq += 1
        session = MigrationSession(
            session_id=f"{self.node_id}-{self._session_seq:04d}",
            container_id=req.container_id,
            approach=MigrationApproach.SERVICE_LEVEL,  # refined at step 2
            source=self.endpoint, destination=req.destination)
        self.sessions[session.session_id] = session
        self._driving = True
        ctx = _SourceContext(session=session, request=req)
        try:
            self._drive(ctx)
        except _SessionAborted:
            self._rollback(ctx)
        finally:
            self._driving = False
        return session

    def _fail(self, ctx: "_SourceContext", reason: str) -> None:
        ctx.session.fail(reason)
        raise _SessionAborted()

    def _drive(self, ctx: "_SourceContext") -> None:
        session, req = ctx.session, ctx.request
        cfg = self.config
        clock = self.clock
        ctx.t_request_ns = clock.now_ns

        # Step 1: fetch the spec, detect the structure
        clock.advance(s_to_ns(cfg.t_spec_fetch_s))
        try:
            spec = self.orchestrator.get_spec(req.container_id)
            container = self.orchestrator.get_container(req.container_id)
        except (OrchestratorError, InjectedFault) as exc:
            self._fail(ctx, f"spec fetch failed: {exc}")
        if not container.service_active:
            self._fail(ctx, f"container {req.container_id} is not running a service")
        ctx.spec, ctx.container = spec, container
        session.record_step(1, clock.now_ns)

        # Step 2: destination availability (and identity for feasibility)
        try:
            ack = self.transport.request(
                req.destination, wire.Ping(session_id=session.session_id),
                timeout_s=cfg.ping_timeout_s, drop_request="ping")
        except (DestinationUnavailable, RpcTimeout) as exc:
            self._fail(ctx, f"destination unavailable: {exc}")
        dst_flavor = ctx.dst_flavor = self._flavor_of(ack, req.destination)
        try:
            session.approach = determine_approach(
                spec, self.flavor, dst_flavor, req.approach_override)
        except Infeasible as exc:
            self._fail(ctx, f"infeasible: {exc}")
        session.record_step(2, clock.now_ns)

        # Step 3: ship the spec so the destination pre-creates the container
        session.record_step(3, clock.now_ns)
        ctx.abort_needed = True
        try:
            reply = self.transport.request(
                req.destination,
                wire.CreateContainer(session_id=session.session_id, spec=spec,
                                     approach=session.approach),
                timeout_s=cfg.rpc_timeout_s,
                drop_request="create_rpc", drop_reply="created_reply")
        except (DestinationUnavailable, RpcTimeout) as exc:
            self._fail(ctx, f"create failed: {exc}")
        if isinstance(reply, wire.ErrorReply):
            self._fail(ctx, f"create failed: {reply.reason}")
        # Steps 4-6 happen at the destination; stamp them from the reply
        arrive = session.step_timestamps_ns[3] + s_to_ns(cfg.per_message_latency_s)
        session.record_step(4, arrive)
        session.record_step(5, arrive + s_to_ns(reply.create_s))
        session.record_step(6, arrive + s_to_ns(reply.create_s))
        session.record_step(7, clock.now_ns)
        ctx.receiver_endpoint = reply.receiver_endpoint

        # Step 8: block control plane, deploy the frontman, freeze
        unit = container.migration_unit()
        ctx.unit = unit
        self.orchestrator.block(req.container_id)
        ctx.blocked = True
        ctx.frontman = self._deploy_frontman(ctx)
        try:
            clock.advance(s_to_ns(cfg.flavor_delta(self.flavor) + cfg.t_control_s))
            self.runtime_for(unit).freeze(unit)
        except (InvalidState, InjectedFault) as exc:
            self._fail(ctx, f"freeze failed: {exc}")
        ctx.frozen = True
        session.record_step(8, clock.now_ns)
        ctx.downtime_start_ns = clock.now_ns

        # Steps 9-10: checkpoint into the journal, transfer, acknowledgment
        scope = (CheckpointScope.SERVICE_PROCESSES_ONLY
                 if session.approach is MigrationApproach.SERVICE_LEVEL
                 else CheckpointScope.WHOLE_CONTAINER)
        extra = (cfg.whole_container_extra_mib * 1024 * 1024
                 if scope is CheckpointScope.WHOLE_CONTAINER else 0)
        cp_rate, _ = cfg.cr_rates(session.approach)
        rt = self.runtime_for(unit)
        plan = rt.plan_checkpoint(
            unit, scope, session.session_id, checkpoint_rate_bps=cp_rate,
            setup_s=cfg.approach_setup(session.approach), extra_state_bytes=extra)
        session.record_step(9, clock.now_ns)
        journal = WriteEventJournal()
        link = LinkModel(cfg.bandwidth_bps, cfg.per_message_latency_s)
        if self.faults.consume("corrupt_stream_twice"):
            link.corrupt_attempts = {1, 2}
        elif self.faults.consume("corrupt_stream_once"):
            link.corrupt_attempts = {1}
        stream = session.approach is MigrationApproach.SERVICE_LEVEL
        try:
            receiver = self.resolve_receiver(ctx.receiver_endpoint)
            ctx.window = coupled_checkpoint_transfer(
                plan, journal, receiver, link, clock,
                overlap=True,
                capacity=cfg.stream_journal_capacity if stream else None,
                exercise_codec=self.exercise_codec,
                on_checkpoint_done=lambda: rt.finish_checkpoint(unit))
        except (ConnectionRefused, CorruptedStream) as exc:
            if unit.state is ContainerState.FROZEN:
                rt.finish_checkpoint(unit)
            self._fail(ctx, f"transfer failed: {exc}")
        clock.advance(link.latency_ns)  # receiver acknowledges the stream
        try:
            self.faults.check("transfer_ack")
        except InjectedFault:
            clock.advance(s_to_ns(cfg.rpc_timeout_s))
            self._fail(ctx, "transfer acknowledgment lost")
        session.record_step(10, clock.now_ns)

        # Step 11: instruct the destination to restore
        session.record_step(11, clock.now_ns)
        try:
            reply = self.transport.request(
                req.destination, wire.RestoreCmd(session_id=session.session_id),
                timeout_s=cfg.rpc_timeout_s, drop_request="restore_rpc")
        except (DestinationUnavailable, RpcTimeout) as exc:
            self._fail(ctx, f"restore failed: {exc}")
        if isinstance(reply, wire.RestoreFailed):
            self._fail(ctx, f"restore failed: {reply.reason}")
        if not isinstance(reply, wire.Restored):
            self._fail(ctx, f"restore failed: unexpected reply {reply.TAG}")

        # Step 12: service confirmed running at the destination
        restored_at = max(reply.vtime_ns, session.step_timestamps_ns[11])
        session.record_step(12, restored_at)
        ctx.restored_at_ns = restored_at
        ctx.new_service_endpoint = reply.service_endpoint
        ctx.restore_s = reply.restore_s

        # Step 13: tell the requester where the service now lives
        session.record_step(13, clock.now_ns)
        ctx.total_end_ns = clock.now_ns
        if req.requester is not None:
            try:
                self.faults.check("notify")
                self.transport.notify(
                    req.requester,
                    wire.NotifyEndpoint(session_id=session.session_id,
                                        service_endpoint=ctx.new_service_endpoint))
            except (InjectedFault, DestinationUnavailable, RpcTimeout) as exc:
                session.notes.append(f"requester notification undelivered: {exc}")

        # Step 14: frontman redirects while the name registry catches up
        ctx.frontman.switch_redirect(ctx.new_service_endpoint)
        try:
            self.faults.check("dns_update")
            self.dns.request_update(spec.name, ctx.new_service_endpoint,
                                    s_to_ns(cfg.dns_ttl_s))
        except InjectedFault as exc:
            session.notes.append(f"dns update failed: {exc}")
        session.record_step(14, clock.now_ns)
        clock.advance(s_to_ns(cfg.dns_ttl_s))
        ctx.frontman.dispose(s_to_ns(cfg.dns_ttl_s))
        self.release_endpoint(ctx.frontman.service_endpoint)

        # Step 15: drop the retained source container
        self.orchestrator.unblock(req.container_id)
        ctx.blocked = False
        try:
            self.faults.check("delete")
            self.orchestrator.delete(req.container_id)
        except (InjectedFault, OrchestratorError) as exc:
            session.notes.append(f"source delete failed: {exc}")
        session.record_step(15, clock.now_ns)
        session.report = self._build_report(ctx)
        session.set_phase(Phase.COMPLETED)

    def _deploy_frontman(self, ctx: "_SourceContext") -> Frontman:
        spec = ctx.spec
        service_ep = self.service_endpoints.get(
            spec.container_id) or self.allocate_service_endpoint()
        self.service_endpoints[spec.container_id] = service_ep
        estimate_ns = self.clock.now_ns + self._window_estimate_ns(ctx)
        frontman = Frontman(self.clock, service_ep, estimate_ns)
        self.frontmen[ctx.session.session_id] = frontman
        self.register_service(service_ep, frontman)
        return frontman

    def _window_estimate_ns(self, ctx: "_SourceContext") -> int:
        """Remaining-migration estimate for the retry-after hint."""
        cfg = self.config
        bytes_total = ctx.spec.total_template_footprint_mib() * 1024 * 1024
        cp_rate, re_rate = cfg.cr_rates(ctx.session.approach)
        window = (cfg.approach_setup(ctx.session.approach)
                  + max(bytes_total / cp_rate, bytes_total * 8 / cfg.bandwidth_bps)
                  + cfg.t_restore_base_s + bytes_total / re_rate)
        return s_to_ns(window + cfg.t_control_s)

    def _flavor_of(self, ack: wire.Message, dest: Endpoint):
        from .model import OrchestratorFlavor
        flavor = getattr(ack, "flavor", "")
        if not flavor:
            raise DestinationUnavailable(f"{dest} did not identify its flavor")
        return OrchestratorFlavor(flavor)

    def _build_report(self, ctx: "_SourceContext") -> MigrationReport:
        session = ctx.session
        ts = session.step_timestamps_ns
        w = ctx.window
        return MigrationReport(
            spec_fetch_s=ns_to_s(ts[1] - ctx.t_request_ns),
            dest_create_s=ns_to_s(ts[7] - ts[1]),
            control_block_s=ns_to_s(ts[8] - ts[7]),
            checkpoint_s=ns_to_s(w.checkpoint_end_ns - w.checkpoint_start_ns),
            transfer_s=ns_to_s(w.transfer_end_ns - w.transfer_start_ns),
            restore_s=ns_to_s(ts[12] - ts[11]),
            cleanup_s=ns_to_s(ts[15] - ts[13]),
            total_s=ns_to_s(ctx.total_end_ns - ctx.t_request_ns),
            downtime_s=ns_to_s(ctx.restored_at_ns - ctx.downtime_start_ns),
            bytes_transferred=w.result.bytes,
        )

    # ------------------------------------------------------------------
    # rollback
    # ------------------------------------------------------------------
    def _rollback(self, ctx: "_SourceContext") -> None:
        """Cope with a failed session: reactivate the retained source, undo
        the control block, tear the frontman down, and ask the destination to
        drop its half of the migration (best effort)."""
        session = ctx.session
        if ctx.abort_needed:
            try:
                self.transport.notify(ctx.request.destination,
                                      wire.Abort(session_id=session.session_id))
            except (DestinationUnavailable, RpcTimeout, CoordinatorError) as exc:
                session.notes.append(f"abort undelivered: {exc}")
        if ctx.unit is not None:
            rt = self.runtime_for(ctx.unit)
            if ctx.unit.state is ContainerState.FROZEN:
                rt.unfreeze(ctx.unit)
            elif ctx.unit.state is ContainerState.CHECKPOINTED_INACTIVE:
                rt.reactivate(ctx.unit)
        frontman = self.frontmen.get(session.session_id)
        if frontman is not None and not frontman.cancelled:
            from .frontman import FrontmanMode
            if frontman.mode is not FrontmanMode.DISPOSED:
                frontman.cancel()
                self.release_endpoint(frontman.service_endpoint)
        if ctx.blocked:
            self.orchestrator.unblock(ctx.request.container_id)
        session.set_phase(Phase.ROLLED_BACK)

    def runtime_for(self, container: SimContainer) -> SimRuntime:
        return container.runtime


@dataclass
class _SourceContext:
    session: MigrationSession
    request: MigrationRequest
    spec: ContainerSpec | None = None
    container: SimContainer | None = None
    unit: SimContainer | None = None
    dst_flavor: object = None
    receiver_endpoint: Endpoint | None = None
    frontman: Frontman | None = None
    window: object = None
    new_service_endpoint: Endpoint | None = None
    restore_s: float = 0.0
    t_request_ns: int = 0
    downtime_start_ns: int = 0
    restored_at_ns: int = 0
    total_end_ns: int = 0
    blocked: bool = False
    frozen: bool = False
    abort_needed: bool = False


class _SessionAborted(Exception):
    pass


__all__ = [
    "CoordinatorError", "Infeasible", "DestinationUnavailable", "CreateFailed",
    "RestoreFailedError", "RpcTimeout", "MigrationRequest", "PeerTransport",
    "DnsRegistry", "feasible_approaches", "determine_approach", "Coordinator",
]
