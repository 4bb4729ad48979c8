"""Simulated orchestrator: owns the containers of one node, serves the
control plane the coordinator consults, and enforces control-message blocking
during a migration window."""

from __future__ import annotations

from dataclasses import dataclass

from .clock import s_to_ns
from .config import CostModelConfig
from .faults import NO_FAULTS, FaultInjector
from .model import ContainerSpec, OrchestratorFlavor
from .runtime import ContainerState, SimContainer, SimRuntime


class OrchestratorError(RuntimeError):
    pass


class NotFound(OrchestratorError):
    pass


class Blocked(OrchestratorError):
    pass


class ResourceUnavailable(OrchestratorError):
    pass


@dataclass(frozen=True)
class ControlLogEntry:
    at_ns: int
    container_id: str
    message: str
    outcome: str  # "accepted" | "blocked"


class SimOrchestrator:
    """Control plane of one simulated node.

    Blocking covers mutating control messages (delete, scale, update); the
    coordinator still needs read access (get_spec) during a session, so reads
    pass through.
    """

    def __init__(self, flavor: OrchestratorFlavor, runtime: SimRuntime,
                 config: CostModelConfig, *, capacity_mib: int = 16 * 1024,
                 capacity_millicores: int = 8000,
                 faults: FaultInjector = NO_FAULTS):
        self.flavor = flavor
        self.runtime = runtime
        self.config = config
        self.capacity_mib = capacity_mib
        self.capacity_millicores = capacity_millicores
        self.faults = faults
        self.blocked: set[str] = set()
        self.control_log: list[ControlLogEntry] = []

    # -- helpers -----------------------------------------------------------
    @property
    def registry(self) -> dict[str, SimContainer]:
        return self.runtime.containers

    def _log(self, container_id: str, message: str, outcome: str) -> None:
        self.control_log.append(ControlLogEntry(self.runtime.clock.now_ns,
                                                container_id, message, outcome))

    def _check_blocked(self, container_id: str, message: str) -> None:
        if container_id in self.blocked:
            self._log(container_id, message, "blocked")
            raise Blocked(f"{container_id} is blocked from control messages")
        self._log(container_id, message, "accepted")

    def used_mib(self) -> int:
        return sum(c.spec.memory_limit_mib for c in self.registry.values()
                   if c.state is not ContainerState.TERMINATED)

    def used_millicores(self) -> int:
        return sum(c.spec.cpu_millicores for c in self.registry.values()
                   if c.state is not ContainerState.TERMINATED)

    def control_delta_ns(self) -> int:
        return s_to_ns(self.config.flavor_delta(self.flavor))

    # -- operations ----------------------------------------------------------
    def create(self, spec: ContainerSpec, *,
               migration_target: bool = False) -> tuple[SimContainer, int]:
        """Admit and create a container; returns (container, duration_ns)
        including this flavor's control-plane latency. Capacity is reserved up
        front so a migration can proceed safely once admitted."""
        self.faults.check("orch_create")
        if self.used_mib() + spec.memory_limit_mib > self.capacity_mib:
            raise ResourceUnavailable(
                f"memory: {self.used_mib()} + {spec.memory_limit_mib} "
                f"> {self.capacity_mib} MiB")
        if self.used_millicores() + spec.cpu_millicores > self.capacity_millicores:
            raise ResourceUnavailable("cpu capacity exceeded")
        self._log(spec.container_id, "create", "accepted")
        container, duration_ns = self.runtime.create_container(
            spec, migration_target=migration_target)
        return container, duration_ns + self.control_delta_ns()

    def delete(self, container_id: str) -> None:
        if container_id not in self.registry:
            raise NotFound(container_id)
        self._check_blocked(container_id, "delete")
        self.faults.check("delete")
        self.runtime.terminate(container_id)

    def scale(self, container_id: str, replicas: int) -> None:
        """Modeled control message: accepted-and-ignored (no scheduler here),
        but it exercises the blocking window."""
        if container_id not in self.registry:
            raise NotFound(container_id)
        self._check_blocked(container_id, f"scale:{replicas}")

    def update(self, container_id: str, labels: dict[str, str]) -> None:
        if container_id not in self.registry:
            raise NotFound(container_id)
        self._check_blocked(container_id, "update")
        self.registry[container_id].spec.labels.update(labels)

    def get_spec(self, container_id: str) -> ContainerSpec:
        self.faults.check("get_spec")
        if container_id not in self.registry:
            raise NotFound(container_id)
        return self.registry[container_id].spec

    def get_container(self, container_id: str) -> SimContainer:
        if container_id not in self.registry:
            raise NotFound(container_id)
        return self.registry[container_id]

    def block(self, container_id: str) -> None:
        if container_id not in self.registry:
            raise NotFound(container_id)
        self.blocked.add(container_id)  # idempotent

    def unblock(self, container_id: str) -> None:
        if container_id not in self.registry and container_id not in self.blocked:
            raise NotFound(container_id)
        self.blocked.discard(container_id)

    def accepted_control_messages(self, container_id: str,
                                  start_ns: int, end_ns: int) -> list[ControlLogEntry]:
        return [e for e in self.control_log
                if e.container_id == container_id and e.outcome == "accepted"
                and start_ns <= e.at_ns <= end_ns]


def native_migrate_supported(src: OrchestratorFlavor, dst: OrchestratorFlavor) -> bool:
    """Orchestrator-level migration demands both control planes expose native
    checkpoint/restore, i.e. both run the modified orchestrator."""
    return src.native_cr and dst.native_cr


__all__ = [
    "OrchestratorError", "NotFound", "Blocked", "ResourceUnavailable",
    "ControlLogEntry", "SimOrchestrator", "native_migrate_supported",
]
