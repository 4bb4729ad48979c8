"""Experiment harness: downtime measurement, cost-model calibration against
the measured migration-time table, and the four experiment runners with
deterministic CSV output.

Experiments run on in-process worlds with procedural page payloads, so a
full sweep stays fast while every virtual-time number is exactly what the
inline-bytes path would produce.
"""

from __future__ import annotations

import math
import random
import statistics
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

from .config import CostModelConfig
from .model import (MIB, MigrationApproach, OrchestratorFlavor, Phase,
                    Structure, dynamic_spec, memhog_spec)
from .world import two_node_world

Z90 = statistics.NormalDist().inv_cdf(0.95)  # two-sided 90% interval


class BenchError(RuntimeError):
    pass


class NoMigrationGap(BenchError):
    pass


class FitDiverged(BenchError):
    pass


def measure_downtime(counter_stream, migration_at_s: float) -> float:
    """Interval between the last counter printed before the migration and the
    first one after it, minus the one-second emission period, clamped at 0."""
    before = [t for t, _ in counter_stream if t <= migration_at_s]
    after = [t for t, _ in counter_stream if t > migration_at_s]
    if not before or not after:
        raise NoMigrationGap("counter stream does not span the migration")
    values = [v for _, v in counter_stream]
    if any(b > a for b, a in zip(values, values[1:])):
        raise BenchError("counter stream is not monotone")
    return max(0.0, min(after) - max(before) - 1.0)


def fit_linear(xs, ys) -> tuple[float, float, float]:
    """Least-squares slope, intercept, and R^2."""
    slope, intercept = statistics.linear_regression(xs, ys)
    mean_y = statistics.fmean(ys)
    ss_tot = sum((y - mean_y) ** 2 for y in ys)
    ss_res = sum((y - (slope * x + intercept)) ** 2 for x, y in zip(xs, ys))
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return slope, intercept, r2


STRUCTURE_FOR = {
    MigrationApproach.ORCHESTRATOR_LEVEL: Structure.PLAIN,
    MigrationApproach.SERVICE_LEVEL: Structure.MIGRATABLE_IMAGE,
    MigrationApproach.CONTAINER_LEVEL: Structure.NESTED,
}

# Measured mean migration times (seconds) for a 128 MiB single-process
# service: one row per approach, one column per source system, destination
# Kubernetes. Orchestrator-level is only possible between two modified
# orchestrators; the remaining cells of that row are infeasible.
TABLE_TARGETS: dict[tuple[MigrationApproach, OrchestratorFlavor], float] = {
    (MigrationApproach.ORCHESTRATOR_LEVEL, OrchestratorFlavor.KUBE_MOD_SIM): 6.94,
    (MigrationApproach.SERVICE_LEVEL, OrchestratorFlavor.KUBE_MOD_SIM): 5.94,
    (MigrationApproach.SERVICE_LEVEL, OrchestratorFlavor.MESOS_SIM): 5.74,
    (MigrationApproach.SERVICE_LEVEL, OrchestratorFlavor.K3S_SIM): 5.97,
    (MigrationApproach.SERVICE_LEVEL, OrchestratorFlavor.MINISHIFT_SIM): 5.96,
    (MigrationApproach.CONTAINER_LEVEL, OrchestratorFlavor.KUBE_MOD_SIM): 14.71,
    (MigrationApproach.CONTAINER_LEVEL, OrchestratorFlavor.MESOS_SIM): 15.03,
    (MigrationApproach.CONTAINER_LEVEL, OrchestratorFlavor.K3S_SIM): 14.63,
    (MigrationApproach.CONTAINER_LEVEL, OrchestratorFlavor.MINISHIFT_SIM): 14.85,
}

# Relative overhead of container-level vs orchestrator-level for small
# (<128 MiB) services, from the breakdown experiment's prose.
SMALL_FOOTPRINT_GAP_TARGET = 0.37

TABLE_FOOTPRINT_MIB = 128
MATRIX_SOURCES = [OrchestratorFlavor.KUBE_MOD_SIM, OrchestratorFlavor.MESOS_SIM,
                  OrchestratorFlavor.K3S_SIM, OrchestratorFlavor.MINISHIFT_SIM]


def matrix_destination(src: OrchestratorFlavor) -> OrchestratorFlavor:
    """Destination system per matrix column: the homogeneous column keeps the
    modified orchestrator pair, everything else lands on stock Kubernetes."""
    if src is OrchestratorFlavor.KUBE_MOD_SIM:
        return OrchestratorFlavor.KUBE_MOD_SIM
    return OrchestratorFlavor.KUBE_SIM


class ExperimentId(str, Enum):
    BREAKDOWN_SWEEP = "breakdown"
    MULTI_PROCESS = "multiproc"
    DYNAMIC_FOOTPRINT = "dynamic"
    HETEROGENEOUS_MATRIX = "matrix"


CSV_COLUMNS = [
    "experiment", "approach", "flavor_src", "flavor_dst", "footprint_mib",
    "n_procs", "seed", "status", "spec_fetch_s", "dest_create_s",
    "control_block_s", "checkpoint_s", "transfer_s", "restore_s", "cleanup_s",
    "total_s", "downtime_s", "bytes_transferred",
]

SUMMARY_COLUMNS = [
    "experiment", "approach", "flavor_src", "flavor_dst", "footprint_mib",
    "n_procs", "status", "reps", "total_mean_s", "total_ci90_s",
    "downtime_mean_s", "downtime_ci90_s", "spec_fetch_s", "dest_create_s",
    "control_block_s", "checkpoint_s", "transfer_s", "restore_s", "cleanup_s",
]


@dataclass
class ExperimentResult:
    experiment: ExperimentId
    rows: list[dict] = field(default_factory=list)
    summary: list[dict] = field(default_factory=list)

    def write_csv(self, out_dir: str | Path) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        rows_path = out / f"{self.experiment.value}_rows.csv"
        summary_path = out / f"{self.experiment.value}_summary.csv"
        _write_csv(rows_path, CSV_COLUMNS, self.rows)
        _write_csv(summary_path, SUMMARY_COLUMNS, self.summary)
        dat_path = out / f"{self.experiment.value}.dat"
        write_gnuplot_dat(dat_path, SUMMARY_COLUMNS, self.summary)
        return [rows_path, summary_path, dat_path]


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def _write_csv(path: Path, columns: list[str], rows: list[dict]) -> None:
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(_fmt(row.get(c, "")) for c in columns))
    path.write_text("\n".join(lines) + "\n")


def write_gnuplot_dat(path: Path, columns: list[str], rows: list[dict]) -> None:
    """Whitespace-separated table with a commented header, ready for gnuplot's
    `using` clauses."""
    lines = ["# " + " ".join(columns)]
    for row in rows:
        lines.append(" ".join(_fmt(row.get(c, "nan")) or "nan" for c in columns))
    path.write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# single-cell runner
# ---------------------------------------------------------------------------

def run_cell(config: CostModelConfig, approach: MigrationApproach,
             src_flavor: OrchestratorFlavor, dst_flavor: OrchestratorFlavor,
             footprint_mib: int, *, children: int = 0, seed: int = 0,
             dynamic: dict | None = None, settle_s: float = 3.0) -> dict:
    """Deploy one workload, migrate it, and return a result row. Failures and
    infeasible combinations are recorded, never raised."""
    rng = random.Random(seed)
    world, src, dst = two_node_world(src_flavor, dst_flavor, config,
                                     inline_pages=False, exercise_codec=False)
    structure = STRUCTURE_FOR[approach]
    if dynamic is None:
        spec = memhog_spec("workload", footprint_mib, children, structure)
        workload = None
        migrate_at = rng.uniform(1.5, 2.5)
    else:
        spec = dynamic_spec("workload", dynamic["cap_mib"], structure)
        workload = {"kind": "dynamic_linear", **dynamic}
        migrate_at = rng.uniform(*dynamic["migrate_window_s"])
    world.deploy(src, spec, workload)
    world.run_for(migrate_at)
    session = world.migrate(src, "workload", dst, approach_override=approach)
    world.run_for(settle_s)

    row = {
        "experiment": "", "approach": approach.value,
        "flavor_src": src_flavor.value, "flavor_dst": dst_flavor.value,
        "footprint_mib": footprint_mib, "n_procs": 1 + children, "seed": seed,
    }
    if session.phase is not Phase.COMPLETED:
        reason = session.failure_reason
        row["status"] = "infeasible" if "infeasible" in reason else "failed"
        for col in CSV_COLUMNS[8:]:
            row[col] = ""
        return row
    report = session.report
    row["status"] = "completed"
    row.update(report.to_dict())
    if dynamic is not None:
        # the paper's method: downtime from the helper's printed counters
        series = world.trace.counter_series("workload")
        row["downtime_s"] = measure_downtime(series, session.step_time_s(8))
        row["footprint_mib"] = round(
            report.bytes_transferred / MIB)  # footprint reached at freeze
    return row


def _summarize(experiment: ExperimentId, rows: list[dict]) -> list[dict]:
    groups: dict[tuple, list[dict]] = {}
    for row in rows:
        key = (row["approach"], row["flavor_src"], row["flavor_dst"],
               row["footprint_mib"] if isinstance(row["footprint_mib"], int) else "dyn",
               row["n_procs"], row["status"])
        groups.setdefault(key, []).append(row)
    summary = []
    for key, members in groups.items():
        approach, fsrc, fdst, foot, n_procs, status = key
        entry = {
            "experiment": experiment.value, "approach": approach,
            "flavor_src": fsrc, "flavor_dst": fdst, "footprint_mib": foot,
            "n_procs": n_procs, "status": status, "reps": len(members),
        }
        if status == "completed":
            totals = [m["total_s"] for m in members]
            downtimes = [m["downtime_s"] for m in members]
            entry["total_mean_s"] = statistics.fmean(totals)
            entry["total_ci90_s"] = _ci90(totals)
            entry["downtime_mean_s"] = statistics.fmean(downtimes)
            entry["downtime_ci90_s"] = _ci90(downtimes)
            for col in ("spec_fetch_s", "dest_create_s", "control_block_s",
                        "checkpoint_s", "transfer_s", "restore_s", "cleanup_s"):
                entry[col] = statistics.fmean([m[col] for m in members])
        else:
            for col in SUMMARY_COLUMNS[8:]:
                entry[col] = ""
        summary.append(entry)
    return summary


def _ci90(values) -> float:
    if len(values) < 2:
        return 0.0
    return Z90 * statistics.stdev(values) / math.sqrt(len(values))


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------

BREAKDOWN_FOOTPRINTS_MIB = [0, 128, 256, 512, 1024]
BREAKDOWN_APPROACHES = [MigrationApproach.SERVICE_LEVEL,
                        MigrationApproach.ORCHESTRATOR_LEVEL,
                        MigrationApproach.CONTAINER_LEVEL]


def run_experiment(experiment: ExperimentId, config: CostModelConfig, *,
                   reps: int = 30, base_seed: int = 1) -> ExperimentResult:
    runner = {
        ExperimentId.BREAKDOWN_SWEEP: _run_breakdown,
        ExperimentId.MULTI_PROCESS: _run_multiprocess,
        ExperimentId.DYNAMIC_FOOTPRINT: _run_dynamic,
        ExperimentId.HETEROGENEOUS_MATRIX: _run_matrix,
    }[experiment]
    rows = runner(config, reps, base_seed)
    for row in rows:
        row["experiment"] = experiment.value
    return ExperimentResult(experiment, rows, _summarize(experiment, rows))


def _run_breakdown(config, reps, base_seed) -> list[dict]:
    home = OrchestratorFlavor.KUBE_MOD_SIM
    rows = []
    for footprint in BREAKDOWN_FOOTPRINTS_MIB:
        for approach in BREAKDOWN_APPROACHES:
            for rep in range(reps):
                rows.append(run_cell(config, approach, home, home, footprint,
                                     seed=base_seed + rep))
    return rows


def _run_multiprocess(config, reps, base_seed) -> list[dict]:
    home = OrchestratorFlavor.KUBE_MOD_SIM
    rows = []
    for children in range(1, 9):
        for approach in (MigrationApproach.SERVICE_LEVEL,
                         MigrationApproach.CONTAINER_LEVEL):
            for rep in range(reps):
                rows.append(run_cell(config, approach, home, home, 0,
                                     children=children, seed=base_seed + rep))
    return rows


def _run_dynamic(config, reps, base_seed) -> list[dict]:
    home = OrchestratorFlavor.KUBE_MOD_SIM
    dynamic = {"start_mib": 64, "rate_mib_per_s": 48, "cap_mib": 512,
               "migrate_window_s": (2.0, 9.0)}
    rows = []
    for approach in BREAKDOWN_APPROACHES:
        for rep in range(reps):
            rows.append(run_cell(config, approach, home, home, 0,
                                 dynamic=dict(dynamic), seed=base_seed + rep))
    return rows


def _run_matrix(config, reps, base_seed) -> list[dict]:
    rows = []
    for approach in (MigrationApproach.ORCHESTRATOR_LEVEL,
                     MigrationApproach.SERVICE_LEVEL,
                     MigrationApproach.CONTAINER_LEVEL):
        for src in MATRIX_SOURCES:
            dst = matrix_destination(src)
            for rep in range(reps):
                rows.append(run_cell(config, approach, src, dst,
                                     TABLE_FOOTPRINT_MIB, seed=base_seed + rep))
    return rows


# ---------------------------------------------------------------------------
# calibration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CalibrationTargets:
    table: dict = field(default_factory=lambda: dict(TABLE_TARGETS))
    small_footprint_gap: float = SMALL_FOOTPRINT_GAP_TARGET
    footprint_mib: int = TABLE_FOOTPRINT_MIB


def _probe_total(config: CostModelConfig, approach: MigrationApproach,
                 src: OrchestratorFlavor, footprint_mib: int) -> float:
    row = run_cell(config, approach, src, matrix_destination(src),
                   footprint_mib, seed=0, settle_s=0.0)
    if row["status"] != "completed":
        raise FitDiverged(f"probe failed: {row['status']}")
    return row["total_s"]


def _with(config: CostModelConfig, **kw) -> CostModelConfig:
    return replace(config, **kw)


def _set_setup(config, approach, value) -> CostModelConfig:
    setup = dict(config.approach_setup_s)
    setup[approach.value] = max(0.05, value)
    return _with(config, approach_setup_s=setup)


def _set_delta(config, flavor, value) -> CostModelConfig:
    deltas = dict(config.flavor_control_delta_s)
    deltas[flavor.value] = max(0.05, value)
    return _with(config, flavor_control_delta_s=deltas)


def calibrate(targets: CalibrationTargets | None = None, *,
              rate_grid_mib_s=(80, 100, 128),
              max_rel_error: float = 0.10) -> tuple[CostModelConfig, dict[str, float]]:
    """Fit the free cost-model constants to the migration-time table plus the
    small-footprint gap. Deterministic: sequential 1-D solves (the totals are
    linear in each constant) and a bisection for the nested-C/R slowdown.
    The transfer component is bandwidth arithmetic, never fitted."""
    targets = targets or CalibrationTargets()
    if len(targets.table) < 3:
        raise FitDiverged("underdetermined: need at least one target per approach")
    orch = MigrationApproach.ORCHESTRATOR_LEVEL
    svc = MigrationApproach.SERVICE_LEVEL
    cont = MigrationApproach.CONTAINER_LEVEL
    kube_mod = OrchestratorFlavor.KUBE_MOD_SIM
    f128 = targets.footprint_mib

    best: tuple[float, CostModelConfig, dict] | None = None
    for rate_mib in rate_grid_mib_s:
        cfg = CostModelConfig(checkpoint_rate_bps=float(rate_mib * MIB),
                              restore_rate_bps=float(rate_mib * MIB))
        try:
            cfg = _fit_levels(cfg, targets, svc, orch, cont, kube_mod, f128)
        except FitDiverged:
            continue
        residuals = _residuals(cfg, targets)
        worst = max(abs(v) for v in residuals.values())
        if best is None or worst < best[0]:
            best = (worst, cfg, residuals)
    if best is None or best[0] > max_rel_error:
        raise FitDiverged(
            f"no rate grid point reached {max_rel_error:.0%} residuals"
            + (f" (best {best[0]:.1%})" if best else ""))
    return best[1], best[2]


def _fit_levels(cfg, targets, svc, orch, cont, kube_mod, f128) -> CostModelConfig:
    t_svc = targets.table[(svc, kube_mod)]
    t_orch = targets.table[(orch, kube_mod)]
    t_cont = targets.table[(cont, kube_mod)]

    # absolute level: t_create absorbs the service-level target
    for _ in range(2):
        total = _probe_total(cfg, svc, kube_mod, f128)
        t_create = cfg.t_create_s + (t_svc - total)
        if t_create <= 0.1:
            raise FitDiverged("service-level target leaves no creation budget")
        cfg = _with(cfg, t_create_s=t_create)

    # orchestrator-level machinery constant
    for _ in range(2):
        total = _probe_total(cfg, orch, kube_mod, f128)
        cfg = _set_setup(cfg, orch, cfg.approach_setup(orch) + (t_orch - total))

    # container level: slowdown from the small-footprint gap, setup from the
    # table cell; gap(slowdown) is monotone decreasing, so bisect
    lo, hi = 1.05, 6.0
    for _ in range(28):
        mid = (lo + hi) / 2
        cfg = _with(cfg, nested_cr_slowdown=mid)
        cfg = _fit_container_setup(cfg, cont, kube_mod, t_cont, f128)
        gap = _small_gap(cfg, orch, cont, kube_mod)
        if gap > targets.small_footprint_gap:
            lo = mid
        else:
            hi = mid
    cfg = _fit_container_setup(cfg, cont, kube_mod, t_cont, f128)

    # per-flavor control latencies balance each flavor's two table cells
    for flavor in (OrchestratorFlavor.MESOS_SIM, OrchestratorFlavor.K3S_SIM,
                   OrchestratorFlavor.MINISHIFT_SIM):
        key_s, key_c = (svc, flavor), (cont, flavor)
        if key_s not in targets.table or key_c not in targets.table:
            continue
        t_s, t_c = targets.table[key_s], targets.table[key_c]
        s0 = _probe_total(cfg, svc, flavor, f128)
        c0 = _probe_total(cfg, cont, flavor, f128)
        base = cfg.flavor_delta(flavor)
        d_star = (2 * t_s * t_c - t_c * s0 - t_s * c0) / (t_s + t_c)
        cfg = _set_delta(cfg, flavor, base + d_star)
    return cfg


def _fit_container_setup(cfg, cont, kube_mod, t_cont, f128) -> CostModelConfig:
    for _ in range(2):
        total = _probe_total(cfg, cont, kube_mod, f128)
        cfg = _set_setup(cfg, cont, cfg.approach_setup(cont) + (t_cont - total))
    return cfg


def _small_gap(cfg, orch, cont, kube_mod) -> float:
    o0 = _probe_total(cfg, orch, kube_mod, 0)
    c0 = _probe_total(cfg, cont, kube_mod, 0)
    return (c0 - o0) / o0


def _residuals(cfg: CostModelConfig, targets: CalibrationTargets) -> dict[str, float]:
    out: dict[str, float] = {}
    for (approach, flavor), target in sorted(
            targets.table.items(), key=lambda kv: (kv[0][0].value, kv[0][1].value)):
        total = _probe_total(cfg, approach, flavor, targets.footprint_mib)
        out[f"{approach.value}/{flavor.value}"] = (total - target) / target
    gap = _small_gap(cfg, MigrationApproach.ORCHESTRATOR_LEVEL,
                     MigrationApproach.CONTAINER_LEVEL,
                     OrchestratorFlavor.KUBE_MOD_SIM)
    out["small_footprint_gap"] = (gap - targets.small_footprint_gap) / max(
        targets.small_footprint_gap, 1e-9)
    return out


__all__ = [
    "BenchError", "NoMigrationGap", "FitDiverged", "measure_downtime",
    "fit_linear", "STRUCTURE_FOR", "TABLE_TARGETS",
    "SMALL_FOOTPRINT_GAP_TARGET", "TABLE_FOOTPRINT_MIB", "MATRIX_SOURCES",
    "matrix_destination", "ExperimentId", "ExperimentResult", "CSV_COLUMNS",
    "SUMMARY_COLUMNS", "run_cell", "run_experiment", "CalibrationTargets",
    "calibrate", "write_gnuplot_dat", "BREAKDOWN_FOOTPRINTS_MIB",
    "BREAKDOWN_APPROACHES", "Z90",
]
