"""Cost-model configuration: every virtual-time constant of the simulated
substrate lives here, so a single config file pins down an entire run.

The shipped defaults are the output of the calibration fit against the
measured migration-time table (see bench.calibrate and
configs/calibrated_default.json); scripts/run_calibration.py regenerates
them.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, asdict, replace
from pathlib import Path

from .model import MIB, MigrationApproach, OrchestratorFlavor, canonical_json

CONFIG_ENV_VAR = "CROSSMIG_CONFIG"


class ConfigError(ValueError):
    pass


def _default_approach_setup() -> dict[str, float]:
    # C/R machinery startup per approach, fitted (scripts/run_calibration.py).
    return {
        MigrationApproach.ORCHESTRATOR_LEVEL.value: 1.6599732320000002,
        MigrationApproach.SERVICE_LEVEL.value: 0.3,
        MigrationApproach.CONTAINER_LEVEL.value: 1.4444577600000228,
    }


def _default_flavor_deltas() -> dict[str, float]:
    # Absolute control-plane op latency per flavor, fitted to the per-flavor
    # spread of the migration-time table.
    return {
        OrchestratorFlavor.KUBE_SIM.value: 0.3,
        OrchestratorFlavor.KUBE_MOD_SIM.value: 0.3,
        OrchestratorFlavor.MESOS_SIM.value: 0.24370727010110715,
        OrchestratorFlavor.K3S_SIM.value: 0.29812135922329996,
        OrchestratorFlavor.MINISHIFT_SIM.value: 0.35436809226333515,
    }


@dataclass(frozen=True)
class CostModelConfig:
    # pre-migration
    t_spec_fetch_s: float = 0.1
    t_create_s: float = 0.8550241310000004
    t_inner_boot_s: float = 1.2
    # migration window
    t_control_s: float = 0.2
    checkpoint_rate_bps: float = 80.0 * MIB
    restore_rate_bps: float = 80.0 * MIB
    t_restore_base_s: float = 0.12
    t_pid_respawn_s: float = 0.56
    # approach/flavor modeling
    approach_setup_s: dict[str, float] = field(default_factory=_default_approach_setup)
    flavor_control_delta_s: dict[str, float] = field(default_factory=_default_flavor_deltas)
    whole_container_extra_mib: int = 8
    nested_cr_slowdown: float = 2.9957395082339646
    # link
    bandwidth_bps: float = 1e9
    per_message_latency_s: float = 0.0005
    # post-migration / protocol
    dns_ttl_s: float = 1.0
    ping_timeout_s: float = 2.0
    rpc_timeout_s: float = 30.0
    # substrate
    page_size_bytes: int = 64 * 1024
    privileged_restore: bool = False
    stream_journal_capacity: int = 64

    def __post_init__(self):
        positives = [
            "t_spec_fetch_s", "t_create_s", "t_inner_boot_s", "t_control_s",
            "checkpoint_rate_bps", "restore_rate_bps", "t_restore_base_s",
            "t_pid_respawn_s", "nested_cr_slowdown", "bandwidth_bps",
            "per_message_latency_s", "dns_ttl_s", "ping_timeout_s",
            "rpc_timeout_s", "page_size_bytes", "stream_journal_capacity",
        ]
        for name in positives:
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be strictly positive")
        if self.whole_container_extra_mib < 0:
            raise ConfigError("whole_container_extra_mib must be >= 0")
        if self.nested_cr_slowdown < 1.0:
            raise ConfigError("nested_cr_slowdown must be >= 1")
        for key, value in self.approach_setup_s.items():
            MigrationApproach(key)
            if value <= 0:
                raise ConfigError(f"approach_setup_s[{key}] must be strictly positive")
        for key, value in self.flavor_control_delta_s.items():
            OrchestratorFlavor(key)
            if value <= 0:
                raise ConfigError(f"flavor_control_delta_s[{key}] must be strictly positive")

    def approach_setup(self, approach: MigrationApproach) -> float:
        return self.approach_setup_s[approach.value]

    def flavor_delta(self, flavor: OrchestratorFlavor) -> float:
        return self.flavor_control_delta_s[flavor.value]

    def cr_rates(self, approach: MigrationApproach) -> tuple[float, float]:
        """Effective (checkpoint, restore) rates; nested C/R pays the
        indirection of driving the tooling through the outer runtime."""
        slow = self.nested_cr_slowdown if approach is MigrationApproach.CONTAINER_LEVEL else 1.0
        return self.checkpoint_rate_bps / slow, self.restore_rate_bps / slow

    def to_dict(self) -> dict:
        d = asdict(self)
        d["approach_setup_s"] = dict(sorted(self.approach_setup_s.items()))
        d["flavor_control_delta_s"] = dict(sorted(self.flavor_control_delta_s.items()))
        return d

    def to_json(self) -> str:
        return canonical_json(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "CostModelConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, raw: str) -> "CostModelConfig":
        return cls.from_dict(json.loads(raw))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "CostModelConfig":
        return cls.from_json(Path(path).read_text())

    @classmethod
    def load_default(cls) -> "CostModelConfig":
        """Config from $CROSSMIG_CONFIG if set, else the calibrated defaults."""
        env = os.environ.get(CONFIG_ENV_VAR)
        if env:
            return cls.load(env)
        return cls()


__all__ = ["CostModelConfig", "ConfigError", "CONFIG_ENV_VAR", "replace"]
