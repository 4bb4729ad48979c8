"""Deterministic simulated container runtime.

One SimRuntime per node: creates containers, runs workload processes in
virtual time, freezes/checkpoints/restores them, and hosts a nested inner
runtime when a container's structure requires it. Page contents are
pseudo-random bytes seeded by (container_id, pid, page_index), so a restored
page can always be verified against its digest without golden files.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Optional

from .checkpoint import (CheckpointImage, EntryKind, PageRecord, ProcessMeta,
                         WriteEventJournal, build_image, encode_meta,
                         procedural_payload)
from .clock import NS_PER_S, VirtualClock, s_to_ns
from .config import CostModelConfig
from .faults import NO_FAULTS, FaultInjector
from .model import (MIB, ContainerSpec, MigrationApproach, ProcessRole,
                    Structure, validate_spec)

TICK_PERIOD_NS = NS_PER_S  # counters print once per virtual second


class RuntimeSimError(RuntimeError):
    pass


class InvalidState(RuntimeSimError):
    pass


class DuplicateId(RuntimeSimError):
    pass


class ContainerState(str, Enum):
    CREATING = "creating"
    RUNNING = "running"
    FROZEN = "frozen"
    CHECKPOINTED_INACTIVE = "checkpointed_inactive"
    TERMINATED = "terminated"


class CheckpointScope(str, Enum):
    WHOLE_CONTAINER = "whole_container"
    SERVICE_PROCESSES_ONLY = "service_processes_only"


@dataclass(frozen=True)
class Memhog:
    footprint_mib: int
    child_count: int = 0


@dataclass(frozen=True)
class DynamicLinear:
    start_mib: float
    rate_mib_per_s: float
    cap_mib: float


class TraceLog:
    """Shared observation log: counter emissions, state changes, and served
    data-plane requests, all stamped in virtual time."""

    def __init__(self):
        self.counters: list[tuple[int, str, str, int, int]] = []
        self.states: list[tuple[int, str, str, str, bool]] = []
        self.requests: list[tuple[int, str, str]] = []

    def counter(self, t_ns: int, node: str, container_id: str, pid: int, value: int):
        self.counters.append((t_ns, node, container_id, pid, value))

    def state(self, t_ns: int, node: str, container_id: str, state: str,
              service_active: bool):
        self.states.append((t_ns, node, container_id, state, service_active))

    def request(self, t_ns: int, service: str, reply_kind: str):
        self.requests.append((t_ns, service, reply_kind))

    def counter_series(self, container_name_or_id: str) -> list[tuple[float, int]]:
        """(seconds, value) ticks across all container instances sharing an id."""
        out = [(t / NS_PER_S, v) for t, _, cid, _, v in self.counters
               if cid == container_name_or_id or cid.startswith(container_name_or_id + "::")]
        out.sort()
        return out


class SimProcess:
    def __init__(self, pid: int, role: ProcessRole, emits_counter: bool,
                 container: "SimContainer", parent_pid: int = 0):
        self.pid = pid
        self.role = role
        self.emits_counter = emits_counter
        self.parent_pid = parent_pid
        self.counter = 0
        self.container = container
        self.pages: list[PageRecord] = []
        self.growth: Optional[DynamicLinear] = None
        self.growth_started_ns = 0
        self._tick_handle = None

    def seed_key(self, page_index: int) -> str:
        return f"{self.container.spec.container_id}/{self.pid}/{page_index}"

    def allocate(self, footprint_bytes: int) -> None:
        """Fill memory up to footprint_bytes (whole simulated pages)."""
        page_size = self.container.runtime.config.page_size_bytes
        target = footprint_bytes // page_size
        mode_inline = self.container.runtime.inline_pages
        while len(self.pages) < target:
            idx = len(self.pages)
            key = self.seed_key(idx)
            if mode_inline:
                rec = PageRecord(self.pid, idx, page_size,
                                 payload=procedural_payload(key, page_size))
            else:
                rec = PageRecord(self.pid, idx, page_size, seed_key=key)
            self.pages.append(rec)

    def current_footprint_bytes(self, now_ns: int) -> int:
        if self.growth is None:
            return sum(p.size for p in self.pages)
        elapsed_s = (now_ns - self.growth_started_ns) / NS_PER_S
        mib = min(self.growth.start_mib + self.growth.rate_mib_per_s * elapsed_s,
                  self.growth.cap_mib)
        return int(mib * MIB)

    def settle_growth(self, now_ns: int) -> None:
        """Materialize page records for the footprint reached by now."""
        if self.growth is not None:
            self.allocate(self.current_footprint_bytes(now_ns))

    def start_ticking(self) -> None:
        if not self.emits_counter or self._tick_handle is not None:
            return
        clock = self.container.runtime.clock
        self._tick_handle = clock.schedule(TICK_PERIOD_NS, self._tick)

    def stop_ticking(self) -> None:
        if self._tick_handle is not None:
            self._tick_handle.cancel()
            self._tick_handle = None

    def _tick(self) -> None:
        self.counter += 1
        rt = self.container.runtime
        if rt.trace:
            rt.trace.counter(rt.clock.now_ns, rt.node_id,
                             self.container.spec.container_id, self.pid, self.counter)
        self._tick_handle = rt.clock.schedule(TICK_PERIOD_NS, self._tick)


class SimContainer:
    def __init__(self, spec: ContainerSpec, runtime: "SimRuntime"):
        self.spec = spec
        self.runtime = runtime
        self.state = ContainerState.CREATING
        self.processes: list[SimProcess] = []
        self.inner_runtime: Optional["SimRuntime"] = None
        self.outer: Optional["SimContainer"] = None
        self.journal_ref: Optional[WriteEventJournal] = None
        self.frozen_at_ns: Optional[int] = None
        self._next_pid = 1

    # -- process helpers -------------------------------------------------
    def spawn(self, role: ProcessRole, emits_counter: bool,
              parent_pid: int = 0) -> SimProcess:
        proc = SimProcess(self._next_pid, role, emits_counter, self, parent_pid)
        self._next_pid += 1
        self.processes.append(proc)
        return proc

    def all_processes(self) -> list[SimProcess]:
        return list(self.processes)

    def process_by_pid(self, pid: int) -> SimProcess:
        for p in self.processes:
            if p.pid == pid:
                return p
        raise RuntimeSimError(f"no pid {pid} in {self.spec.container_id}")

    @property
    def inner_container(self) -> Optional["SimContainer"]:
        if self.inner_runtime is None:
            return None
        containers = list(self.inner_runtime.containers.values())
        return containers[0] if containers else None

    def migration_unit(self) -> "SimContainer":
        """The container that actually gets frozen and checkpointed: the inner
        one for nested structures, so the outer keeps its orchestrator binding."""
        if self.spec.structure is Structure.NESTED and self.inner_container is not None:
            return self.inner_container
        return self

    @property
    def service_active(self) -> bool:
        """Running and actually hosting the service processes (a pre-created
        migration shell is Running but not yet serving)."""
        if self.spec.structure is Structure.NESTED:
            inner = self.inner_container
            return inner is not None and inner.service_active
        return (self.state is ContainerState.RUNNING
                and any(p.role is ProcessRole.SERVICE for p in self.processes))

    def counters_snapshot(self) -> dict[int, int]:
        return {p.pid: p.counter for p in self.processes}

    # -- state machine ---------------------------------------------------
    _ALLOWED = {
        ContainerState.CREATING: {ContainerState.RUNNING, ContainerState.TERMINATED},
        ContainerState.RUNNING: {ContainerState.FROZEN, ContainerState.TERMINATED},
        ContainerState.FROZEN: {ContainerState.CHECKPOINTED_INACTIVE,
                                ContainerState.RUNNING},
        ContainerState.CHECKPOINTED_INACTIVE: {ContainerState.TERMINATED,
                                               ContainerState.RUNNING},
        ContainerState.TERMINATED: set(),
    }

    def _set_state(self, state: ContainerState) -> None:
        if state not in self._ALLOWED[self.state]:
            raise InvalidState(
                f"{self.spec.container_id}: illegal {self.state.value} -> {state.value}")
        self.state = state
        self._emit_state(state.value)

    def _emit_state(self, label: str) -> None:
        rt = self.runtime
        if rt.trace:
            rt.trace.state(rt.clock.now_ns, rt.node_id, self.spec.container_id,
                           label, self.service_active)
        # activity of a nested service is observed at its outer container
        if self.outer is not None:
            ort = self.outer.runtime
            if ort.trace:
                ort.trace.state(ort.clock.now_ns, ort.node_id,
                                self.outer.spec.container_id, f"inner:{label}",
                                self.outer.service_active)


class SimRuntime:
    """Container runtime of one simulated node (or of one outer container,
    when nested)."""

    def __init__(self, node_id: str, clock: VirtualClock, config: CostModelConfig,
                 trace: TraceLog | None = None, *, inline_pages: bool = True,
                 faults: FaultInjector = NO_FAULTS):
        self.node_id = node_id
        self.clock = clock
        self.config = config
        self.trace = trace
        self.inline_pages = inline_pages
        self.faults = faults
        self.containers: dict[str, SimContainer] = {}

    # -- lifecycle -------------------------------------------------------
    def create_container(self, spec: ContainerSpec, *,
                         migration_target: bool = False) -> tuple[SimContainer, int]:
        """Start creating a container; returns (container, duration_ns). The
        container flips to RUNNING once the caller advances the clock past the
        duration. Migration targets come up as empty shells awaiting restore."""
        validate_spec(spec)
        self.faults.check("runtime_create")
        if spec.container_id in self.containers:
            raise DuplicateId(spec.container_id)
        container = SimContainer(spec, self)
        self.containers[spec.container_id] = container
        duration_ns = s_to_ns(self.config.t_create_s)
        if spec.structure is Structure.NESTED:
            duration_ns += s_to_ns(self.config.t_inner_boot_s)
        self.clock.schedule(duration_ns,
                            lambda: self._finish_create(container, migration_target))
        return container, duration_ns

    def _finish_create(self, container: SimContainer, migration_target: bool) -> None:
        spec = container.spec
        if spec.structure is Structure.NESTED:
            # outer hosts only the runtime-host process; the service lives in
            # the inner container
            container.spawn(ProcessRole.HELPER, emits_counter=False)
            inner_rt = SimRuntime(f"{self.node_id}/inner", self.clock, self.config,
                                  self.trace, inline_pages=self.inline_pages,
                                  faults=self.faults)
            container.inner_runtime = inner_rt
            inner_spec = ContainerSpec(
                container_id=f"{spec.container_id}::inner",
                name=spec.name,
                image_ref=spec.image_ref,
                labels=spec.labels,
                memory_limit_mib=spec.memory_limit_mib,
                cpu_millicores=spec.cpu_millicores,
                structure=Structure.PLAIN,
                process_template=spec.process_template,
                data_paths=spec.data_paths,
            )
            inner = SimContainer(inner_spec, inner_rt)
            inner.outer = container
            inner_rt.containers[inner_spec.container_id] = inner
            if not migration_target:
                self._allocate_template(inner)
            inner._set_state(ContainerState.RUNNING)
            container._set_state(ContainerState.RUNNING)
            return
        if not migration_target:
            self._allocate_template(container)
        container._set_state(ContainerState.RUNNING)

    def _allocate_template(self, container: SimContainer) -> None:
        for template in container.spec.process_template:
            proc = container.spawn(template.role, template.emits_counter)
            proc.allocate(template.footprint_mib * MIB)
            proc.start_ticking()
            for _ in range(template.child_count):
                child = container.spawn(ProcessRole.CHILD, emits_counter=False,
                                        parent_pid=proc.pid)
                child.allocate(0)

    def terminate(self, container_id: str) -> None:
        container = self._get(container_id)
        for proc in container.processes:
            proc.stop_ticking()
        inner = container.inner_container
        if inner is not None:
            for proc in inner.processes:
                proc.stop_ticking()
            if inner.state is not ContainerState.TERMINATED:
                inner._set_state(ContainerState.TERMINATED)
        container._set_state(ContainerState.TERMINATED)
        del self.containers[container_id]

    def _get(self, container_id: str) -> SimContainer:
        try:
            return self.containers[container_id]
        except KeyError:
            raise RuntimeSimError(f"unknown container {container_id}") from None

    # -- workloads ---------------------------------------------------------
    def run_workload(self, container: SimContainer, workload) -> None:
        if container.state is not ContainerState.RUNNING:
            raise InvalidState("workload requires a RUNNING container")
        target = container.migration_unit()
        service = next((p for p in target.processes
                        if p.role is ProcessRole.SERVICE), None)
        if service is None:
            raise InvalidState("no service process to attach the workload to")
        if isinstance(workload, Memhog):
            service.allocate(workload.footprint_mib * MIB)
            existing = sum(1 for p in target.processes if p.role is ProcessRole.CHILD)
            for _ in range(workload.child_count - existing):
                child = target.spawn(ProcessRole.CHILD, emits_counter=False,
                                     parent_pid=service.pid)
                child.allocate(0)
        elif isinstance(workload, DynamicLinear):
            if workload.cap_mib * MIB > container.spec.memory_limit_mib * MIB:
                raise InvalidState("growth cap exceeds the container memory limit")
            service.growth = workload
            service.growth_started_ns = self.clock.now_ns
            service.allocate(int(workload.start_mib * MIB))
        else:
            raise RuntimeSimError(f"unknown workload {workload!r}")

    # -- freeze / checkpoint / restore -------------------------------------
    def freeze(self, container: SimContainer) -> None:
        """Stop-and-copy entry point: counters stop, pages become immutable,
        and the downtime clock starts. Freezing an outer container cascades to
        its inner one."""
        if container.state is not ContainerState.RUNNING:
            raise InvalidState(f"freeze requires RUNNING, was {container.state.value}")
        self.faults.check("freeze")
        now = self.clock.now_ns
        for proc in container.processes:
            proc.settle_growth(now)
            proc.stop_ticking()
        container.frozen_at_ns = now
        container._set_state(ContainerState.FROZEN)
        inner = container.inner_container
        if inner is not None and inner.state is ContainerState.RUNNING:
            inner.runtime.freeze(inner)

    def plan_checkpoint(self, container: SimContainer, scope: CheckpointScope,
                        session_id: str, *, checkpoint_rate_bps: float | None = None,
                        setup_s: float = 0.0,
                        extra_state_bytes: int = 0) -> "CheckpointPlan":
        """Lay out the journal entries and their emission costs without
        touching the clock; the sync engine (or checkpoint()) executes it."""
        if container.state is not ContainerState.FROZEN:
            raise InvalidState("checkpoint requires a FROZEN container")
        rate = checkpoint_rate_bps or self.config.checkpoint_rate_bps
        page_size = self.config.page_size_bytes

        meta = tuple(ProcessMeta(p.pid, p.role, p.counter, p.parent_pid)
                     for p in container.processes)
        dump_pages: list[PageRecord] = []
        for proc in sorted(container.processes, key=lambda p: p.pid):
            if (scope is CheckpointScope.SERVICE_PROCESSES_ONLY
                    and proc.role not in (ProcessRole.SERVICE, ProcessRole.CHILD)):
                continue
            dump_pages.extend(sorted(proc.pages, key=lambda r: r.page_index))
        if extra_state_bytes:
            # runtime bookkeeping dumped alongside a whole-container image;
            # pseudo-pid 0 keeps it out of the process tree
            n_extra = -(-extra_state_bytes // page_size)
            for idx in range(n_extra):
                key = f"{container.spec.container_id}/rtstate/{idx}"
                if self.inline_pages:
                    rec = PageRecord(0, idx, page_size,
                                     payload=procedural_payload(key, page_size))
                else:
                    rec = PageRecord(0, idx, page_size, seed_key=key)
                dump_pages.append(rec)
        dump_pages.sort(key=lambda r: (r.pid, r.page_index))

        meta_bytes = encode_meta(session_id, meta)
        emit_costs = [s_to_ns(setup_s) + s_to_ns(len(meta_bytes) / rate)]
        emit_costs += [s_to_ns(p.size / rate) for p in dump_pages]
        emit_costs.append(0)  # FINALIZE is bookkeeping only
        image = build_image(session_id, meta, dump_pages)
        return CheckpointPlan(container=container, image=image,
                              emit_cost_ns=emit_costs)

    def checkpoint(self, container: SimContainer, scope: CheckpointScope,
                   journal: WriteEventJournal,
                   session_id: str = "local") -> CheckpointImage:
        """Dump pages into the journal in (pid, page) order, advancing the
        clock by page_size/checkpoint_rate per emission."""
        plan = self.plan_checkpoint(container, scope, session_id)
        t = self.clock.now_ns
        times = []
        for cost in plan.emit_cost_ns:
            t += cost
            times.append(t)
        plan.execute(journal, times)
        self.clock.advance_to(times[-1])
        self.finish_checkpoint(container)
        return plan.image

    def finish_checkpoint(self, container: SimContainer) -> None:
        container._set_state(ContainerState.CHECKPOINTED_INACTIVE)

    def restore_duration_ns(self, image: CheckpointImage,
                            approach: MigrationApproach,
                            privileged: bool) -> int:
        _, restore_rate = self.config.cr_rates(approach)
        page_bytes = sum(p.size for p in image.pages)
        dur = self.config.t_restore_base_s + page_bytes / restore_rate
        if approach is MigrationApproach.SERVICE_LEVEL and not privileged:
            # without privileges the embedded tooling respawns processes until
            # each desired pid is reached: constant cost per restored process
            dur += len(image.process_meta) * self.config.t_pid_respawn_s
        return s_to_ns(dur)

    def restore(self, image: CheckpointImage, container: SimContainer,
                approach: MigrationApproach, privileged: bool | None = None) -> int:
        """Rebuild the process tree from a verified image inside an empty
        Running shell; returns the virtual duration (caller advances the
        clock past it). Counters resume where they stopped."""
        self.faults.check("restore")
        target = container.migration_unit()
        if container.state is not ContainerState.RUNNING:
            raise InvalidState("restore requires a RUNNING destination shell")
        if target.processes:
            raise InvalidState("destination shell already hosts processes")
        image.verify()
        if privileged is None:
            privileged = self.config.privileged_restore
        duration_ns = self.restore_duration_ns(image, approach, privileged)
        self.clock.schedule(duration_ns, lambda: self._finish_restore(image, target))
        return duration_ns

    def _finish_restore(self, image: CheckpointImage, target: SimContainer) -> None:
        for m in image.process_meta:
            proc = SimProcess(m.pid, m.role,
                              emits_counter=self._emits_counter_for(target.spec, m),
                              container=target, parent_pid=m.parent_pid)
            proc.counter = m.counter
            target.processes.append(proc)
            proc.start_ticking()  # counter emission resumes from the retained value
        target._next_pid = max((m.pid for m in image.process_meta), default=0) + 1
        for page in image.pages:
            if page.pid == 0:
                continue  # runtime bookkeeping, not process memory
            target.process_by_pid(page.pid).pages.append(page)
        target._emit_state("restored")

    @staticmethod
    def _emits_counter_for(spec: ContainerSpec, meta: ProcessMeta) -> bool:
        for template in spec.process_template:
            if template.role is meta.role:
                return template.emits_counter
        return False

    def reactivate(self, container: SimContainer) -> None:
        """Rollback path: bring a checkpointed-inactive container back to
        Running with its retained counters."""
        if container.state is not ContainerState.CHECKPOINTED_INACTIVE:
            raise InvalidState(
                f"reactivate requires CHECKPOINTED_INACTIVE, was {container.state.value}")
        container._set_state(ContainerState.RUNNING)
        container.frozen_at_ns = None
        for proc in container.processes:
            proc.start_ticking()
        inner = container.inner_container
        if inner is not None and inner.state is ContainerState.CHECKPOINTED_INACTIVE:
            inner.runtime.reactivate(inner)

    def unfreeze(self, container: SimContainer) -> None:
        """Rollback from FROZEN before any dump completed."""
        if container.state is not ContainerState.FROZEN:
            raise InvalidState("unfreeze requires FROZEN")
        container._set_state(ContainerState.RUNNING)
        container.frozen_at_ns = None
        for proc in container.processes:
            proc.start_ticking()
        inner = container.inner_container
        if inner is not None and inner.state is ContainerState.FROZEN:
            inner.runtime.unfreeze(inner)


@dataclass
class CheckpointPlan:
    """Entries to emit plus per-entry emission cost; produce timestamps are
    assigned by whoever executes the plan (plain checkpoint or the coupled
    checkpoint+transfer scheduler)."""

    container: SimContainer
    image: CheckpointImage
    emit_cost_ns: list[int]

    def entry_logical_bytes(self) -> list[int]:
        meta_len = len(self.image.meta_bytes())
        return ([meta_len] + [p.size for p in self.image.pages]
                + [len(self.image.manifest.encode())])

    def execute(self, journal: WriteEventJournal, produce_times_ns: list[int]) -> None:
        expected = len(self.image.pages) + 2
        if len(produce_times_ns) != expected:
            raise RuntimeSimError("produce timetable does not match the plan")
        journal.append(EntryKind.META, produce_times_ns[0],
                       meta=self.image.meta_bytes())
        for page, t in zip(self.image.pages, produce_times_ns[1:-1]):
            journal.append(EntryKind.PAGE, t, page=page)
        journal.append(EntryKind.FINALIZE, produce_times_ns[-1],
                       manifest=self.image.manifest)
        self.container.journal_ref = journal


__all__ = [
    "TICK_PERIOD_NS", "RuntimeSimError", "InvalidState", "DuplicateId",
    "ContainerState", "CheckpointScope", "Memhog", "DynamicLinear", "TraceLog",
    "SimProcess", "SimContainer", "SimRuntime", "CheckpointPlan",
]
