"""crossmig: deterministic simulator for live migration of containerized
services across autonomous, possibly heterogeneous, orchestrator-managed
systems."""

from .config import CostModelConfig
from .model import (ContainerSpec, Endpoint, MigrationApproach,
                    MigrationReport, MigrationSession, OrchestratorFlavor,
                    Phase, ProcessRole, ProcessTemplate, Structure,
                    validate_spec)

__version__ = "0.1.0"

__all__ = [
    "CostModelConfig", "ContainerSpec", "Endpoint", "MigrationApproach",
    "MigrationReport", "MigrationSession", "OrchestratorFlavor", "Phase",
    "ProcessRole", "ProcessTemplate", "Structure", "validate_spec",
    "__version__",
]
