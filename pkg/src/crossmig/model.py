"""Domain types shared by every module: container specs, session records,
migration reports, and their canonical serialization.

All types are immutable value objects except MigrationSession, which is
mutated only by the coordinator driving it. Canonical encoding is JSON with
sorted keys and compact separators, used both on the wire and in spec files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Mapping

from .clock import ns_to_s

MIB = 1024 * 1024


def canonical_json(value: Any) -> str:
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


class ModelError(ValueError):
    pass


class Structure(str, Enum):
    PLAIN = "plain"
    MIGRATABLE_IMAGE = "migratable_image"
    NESTED = "nested"


class ProcessRole(str, Enum):
    SERVICE = "service"
    HELPER = "helper"
    CHILD = "child"


class MigrationApproach(str, Enum):
    ORCHESTRATOR_LEVEL = "orchestrator_level"
    SERVICE_LEVEL = "service_level"
    CONTAINER_LEVEL = "container_level"


class OrchestratorFlavor(str, Enum):
    KUBE_SIM = "kube_sim"
    KUBE_MOD_SIM = "kube_mod_sim"
    MESOS_SIM = "mesos_sim"
    K3S_SIM = "k3s_sim"
    MINISHIFT_SIM = "minishift_sim"

    @property
    def native_cr(self) -> bool:
        """Only the modified orchestrator exposes native checkpoint/restore."""
        return self is OrchestratorFlavor.KUBE_MOD_SIM


class Phase(str, Enum):
    PRE_MIGRATION = "pre_migration"
    MIGRATION = "migration"
    POST_MIGRATION = "post_migration"
    COMPLETED = "completed"
    FAILED = "failed"
    ROLLED_BACK = "rolled_back"


# Steps grouped by the phase they belong to.
PHASE_STEPS = {
    Phase.PRE_MIGRATION: range(1, 8),
    Phase.MIGRATION: range(8, 12),
    Phase.POST_MIGRATION: range(12, 16),
}

_PHASE_ORDER = [Phase.PRE_MIGRATION, Phase.MIGRATION, Phase.POST_MIGRATION, Phase.COMPLETED]


@dataclass(frozen=True)
class Endpoint:
    host: str
    port: int

    def __post_init__(self):
        if not self.host or any(c.isspace() for c in self.host):
            raise ModelError(f"malformed host: {self.host!r}")
        if not 1 <= self.port <= 65535:
            raise ModelError(f"port out of range: {self.port}")

    def __str__(self) -> str:
        return f"{self.host}:{self.port}"

    @classmethod
    def parse(cls, text: str) -> "Endpoint":
        host, sep, port = text.rpartition(":")
        if not sep:
            raise ModelError(f"expected host:port, got {text!r}")
        return cls(host, int(port))

    def to_dict(self) -> dict:
        return {"host": self.host, "port": self.port}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Endpoint":
        return cls(host=d["host"], port=d["port"])


@dataclass(frozen=True)
class ProcessTemplate:
    role: ProcessRole
    footprint_mib: int = 0
    emits_counter: bool = False
    child_count: int = 0

    def __post_init__(self):
        if self.footprint_mib < 0:
            raise ModelError("footprint_mib must be >= 0")
        if self.child_count < 0:
            raise ModelError("child_count must be >= 0")
        if self.role is ProcessRole.CHILD and self.child_count != 0:
            # one level of process nesting only
            raise ModelError("child templates cannot spawn children")

    def to_dict(self) -> dict:
        return {
            "role": self.role.value,
            "footprint_mib": self.footprint_mib,
            "emits_counter": self.emits_counter,
            "child_count": self.child_count,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ProcessTemplate":
        return cls(
            role=ProcessRole(d["role"]),
            footprint_mib=d.get("footprint_mib", 0),
            emits_counter=d.get("emits_counter", False),
            child_count=d.get("child_count", 0),
        )


@dataclass(frozen=True)
class ContainerSpec:
    """Portable description of a containerized service.

    Carries exactly what the migration protocol needs: identity, resources,
    structure, and the process tree to rebuild at the destination.
    """

    container_id: str
    name: str
    image_ref: str
    memory_limit_mib: int
    cpu_millicores: int = 500
    structure: Structure = Structure.PLAIN
    process_template: tuple[ProcessTemplate, ...] = ()
    data_paths: tuple[str, ...] = ()
    labels: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "process_template", tuple(self.process_template))
        object.__setattr__(self, "data_paths", tuple(self.data_paths))
        object.__setattr__(self, "labels", dict(self.labels))
        if self.memory_limit_mib < 0:
            raise ModelError("memory_limit_mib must be >= 0")
        if self.cpu_millicores < 0:
            raise ModelError("cpu_millicores must be >= 0")

    def total_template_footprint_mib(self) -> int:
        return sum(t.footprint_mib for t in self.process_template)

    def to_dict(self) -> dict:
        return {
            "container_id": self.container_id,
            "name": self.name,
            "image_ref": self.image_ref,
            "labels": dict(sorted(self.labels.items())),
            "memory_limit_mib": self.memory_limit_mib,
            "cpu_millicores": self.cpu_millicores,
            "structure": self.structure.value,
            "process_template": [t.to_dict() for t in self.process_template],
            "data_paths": list(self.data_paths),
        }

    def to_json(self) -> str:
        return canonical_json(self.to_dict())

    @classmethod
    def from_dict(cls, d: Mapping) -> "ContainerSpec":
        return cls(
            container_id=d["container_id"],
            name=d["name"],
            image_ref=d["image_ref"],
            labels=d.get("labels", {}),
            memory_limit_mib=d["memory_limit_mib"],
            cpu_millicores=d.get("cpu_millicores", 500),
            structure=Structure(d.get("structure", "plain")),
            process_template=tuple(
                ProcessTemplate.from_dict(t) for t in d.get("process_template", ())
            ),
            data_paths=tuple(d.get("data_paths", ())),
        )

    @classmethod
    def from_json(cls, raw: str) -> "ContainerSpec":
        return cls.from_dict(json.loads(raw))


@dataclass(frozen=True)
class SpecViolation:
    code: str
    detail: str

    def __str__(self) -> str:
        return f"{self.code}: {self.detail}"


EMPTY_ID = "empty_id"
DUPLICATE_PROCESS_ROLE = "duplicate_process_role"
MISSING_SERVICE_PROCESS = "missing_service_process"
FOOTPRINT_OVERFLOW = "footprint_overflow"


class SpecValidationError(ModelError):
    def __init__(self, violations: list[SpecViolation]):
        self.violations = violations
        super().__init__("; ".join(str(v) for v in violations))


def spec_violations(spec: ContainerSpec) -> list[SpecViolation]:
    """Collect every invariant violation instead of stopping at the first."""
    out: list[SpecViolation] = []
    if not spec.container_id:
        out.append(SpecViolation(EMPTY_ID, "container_id must be non-empty"))
    service_count = sum(
        1 for t in spec.process_template if t.role is ProcessRole.SERVICE
    )
    if service_count > 1:
        out.append(
            SpecViolation(
                DUPLICATE_PROCESS_ROLE,
                f"exactly one service entry process expected, found {service_count}",
            )
        )
    elif service_count == 0 and spec.process_template:
        out.append(
            SpecViolation(MISSING_SERVICE_PROCESS, "no service entry process in template")
        )
    if any(t.role is ProcessRole.CHILD for t in spec.process_template):
        out.append(
            SpecViolation(
                DUPLICATE_PROCESS_ROLE,
                "child processes are spawned via child_count, not listed directly",
            )
        )
    if spec.total_template_footprint_mib() > spec.memory_limit_mib:
        out.append(
            SpecViolation(
                FOOTPRINT_OVERFLOW,
                f"template footprint {spec.total_template_footprint_mib()} MiB "
                f"exceeds limit {spec.memory_limit_mib} MiB",
            )
        )
    return out


def validate_spec(spec: ContainerSpec) -> ContainerSpec:
    """Return the spec unchanged if valid, else raise with every violation."""
    violations = spec_violations(spec)
    if violations:
        raise SpecValidationError(violations)
    return spec


@dataclass(frozen=True)
class MigrationReport:
    """Per-step duration breakdown, in virtual seconds.

    total_s is the turnaround from the migration request until the source
    confirms the service is running at the destination; cleanup (frontman
    disposal, DNS propagation, source deletion) happens after that point and
    is reported separately. Checkpoint and transfer overlap, so total_s is
    not the sum of the components.
    """

    spec_fetch_s: float
    dest_create_s: float
    control_block_s: float
    checkpoint_s: float
    transfer_s: float
    restore_s: float
    cleanup_s: float
    total_s: float
    downtime_s: float
    bytes_transferred: int

    def __post_init__(self):
        if self.downtime_s < 0:
            raise ModelError("downtime_s must be >= 0")
        for name in ("spec_fetch_s", "dest_create_s", "control_block_s",
                     "checkpoint_s", "transfer_s", "restore_s"):
            if getattr(self, name) > self.total_s + 1e-9:
                raise ModelError(f"{name} exceeds total_s")

    def to_dict(self) -> dict:
        return {
            "spec_fetch_s": self.spec_fetch_s,
            "dest_create_s": self.dest_create_s,
            "control_block_s": self.control_block_s,
            "checkpoint_s": self.checkpoint_s,
            "transfer_s": self.transfer_s,
            "restore_s": self.restore_s,
            "cleanup_s": self.cleanup_s,
            "total_s": self.total_s,
            "downtime_s": self.downtime_s,
            "bytes_transferred": self.bytes_transferred,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "MigrationReport":
        return cls(**{k: d[k] for k in (
            "spec_fetch_s", "dest_create_s", "control_block_s", "checkpoint_s",
            "transfer_s", "restore_s", "cleanup_s", "total_s", "downtime_s",
            "bytes_transferred")})


class IllegalTransition(ModelError):
    pass


@dataclass
class MigrationSession:
    """Per-migration state machine record.

    Step numbers follow the three-phase protocol: 1-7 pre-migration, 8-11
    migration, 12-15 post-migration. Steps are monotone; phases move only
    forward, or sideways into FAILED and then ROLLED_BACK.
    """

    session_id: str
    container_id: str
    approach: MigrationApproach
    source: Endpoint
    destination: Endpoint
    phase: Phase = Phase.PRE_MIGRATION
    step: int = 0
    step_timestamps_ns: dict[int, int] = field(default_factory=dict)
    source_retained: bool = False
    failure_reason: str = ""
    notes: list[str] = field(default_factory=list)
    report: MigrationReport | None = None

    def record_step(self, step: int, at_ns: int) -> None:
        if self.phase in (Phase.FAILED, Phase.ROLLED_BACK, Phase.COMPLETED):
            raise IllegalTransition(f"cannot record steps in phase {self.phase.value}")
        if not 1 <= step <= 15:
            raise IllegalTransition(f"step {step} out of range")
        if step < self.step:
            raise IllegalTransition(f"step went backward: {self.step} -> {step}")
        if self.step_timestamps_ns:
            last = max(self.step_timestamps_ns.values())
            if at_ns < last:
                raise IllegalTransition("step timestamp went backward")
        expected_phase = next(p for p, r in PHASE_STEPS.items() if step in r)
        if expected_phase is not self.phase:
            self.set_phase(expected_phase)
        self.step = step
        self.step_timestamps_ns[step] = at_ns
        if step == 8:
            self.source_retained = True
        if step >= 13:
            self.source_retained = False

    def set_phase(self, phase: Phase) -> None:
        if phase is self.phase:
            return
        if phase is Phase.FAILED:
            if self.phase in (Phase.COMPLETED, Phase.ROLLED_BACK):
                raise IllegalTransition(f"{self.phase.value} is terminal")
            self.phase = phase
            return
        if phase is Phase.ROLLED_BACK:
            if self.phase is not Phase.FAILED:
                raise IllegalTransition("rollback requires FAILED")
            self.phase = phase
            self.source_retained = False
            return
        if self.phase is Phase.FAILED or self.phase is Phase.ROLLED_BACK:
            raise IllegalTransition(f"cannot leave {self.phase.value} for {phase.value}")
        if _PHASE_ORDER.index(phase) != _PHASE_ORDER.index(self.phase) + 1:
            raise IllegalTransition(f"illegal phase jump {self.phase.value} -> {phase.value}")
        self.phase = phase

    def fail(self, reason: str) -> None:
        self.failure_reason = reason
        self.set_phase(Phase.FAILED)

    def step_time_s(self, step: int) -> float:
        return ns_to_s(self.step_timestamps_ns[step])

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "container_id": self.container_id,
            "approach": self.approach.value,
            "source": self.source.to_dict(),
            "destination": self.destination.to_dict(),
            "phase": self.phase.value,
            "step": self.step,
            "step_timestamps_ns": {str(k): v for k, v in sorted(self.step_timestamps_ns.items())},
            "source_retained": self.source_retained,
            "failure_reason": self.failure_reason,
            "notes": list(self.notes),
            "report": self.report.to_dict() if self.report else None,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "MigrationSession":
        return cls(
            session_id=d["session_id"],
            container_id=d["container_id"],
            approach=MigrationApproach(d["approach"]),
            source=Endpoint.from_dict(d["source"]),
            destination=Endpoint.from_dict(d["destination"]),
            phase=Phase(d["phase"]),
            step=d["step"],
            step_timestamps_ns={int(k): v for k, v in d["step_timestamps_ns"].items()},
            source_retained=d["source_retained"],
            failure_reason=d.get("failure_reason", ""),
            notes=list(d.get("notes", [])),
            report=MigrationReport.from_dict(d["report"]) if d.get("report") else None,
        )


def memhog_spec(container_id: str, footprint_mib: int, child_count: int = 0,
                structure: Structure = Structure.PLAIN,
                memory_limit_mib: int | None = None) -> ContainerSpec:
    """Benchmark workload spec: one counter-printing process of a fixed
    footprint, optionally spawning near-empty children."""
    limit = memory_limit_mib if memory_limit_mib is not None else max(footprint_mib * 2, 64)
    return ContainerSpec(
        container_id=container_id,
        name=f"memhog-{footprint_mib}",
        image_ref="bench/memhog:1",
        memory_limit_mib=limit,
        structure=structure,
        process_template=(
            ProcessTemplate(ProcessRole.SERVICE, footprint_mib, emits_counter=True,
                            child_count=child_count),
        ),
    )


def dynamic_spec(container_id: str, cap_mib: int,
                 structure: Structure = Structure.PLAIN) -> ContainerSpec:
    """Inference-style workload: a growing service process plus a helper that
    prints the liveness counter."""
    return ContainerSpec(
        container_id=container_id,
        name="dynamic-inference",
        image_ref="bench/inference:1",
        memory_limit_mib=cap_mib * 2,
        structure=structure,
        process_template=(
            ProcessTemplate(ProcessRole.SERVICE, 0, emits_counter=False),
            ProcessTemplate(ProcessRole.HELPER, 1, emits_counter=True),
        ),
    )


__all__ = [
    "MIB", "canonical_json", "ModelError", "Structure", "ProcessRole",
    "MigrationApproach", "OrchestratorFlavor", "Phase", "PHASE_STEPS",
    "Endpoint", "ProcessTemplate", "ContainerSpec", "SpecViolation",
    "SpecValidationError", "spec_violations", "validate_spec",
    "MigrationReport", "MigrationSession", "IllegalTransition",
    "memhog_spec", "dynamic_spec", "replace",
]
