import pytest

from crossmig.bench import STRUCTURE_FOR
from crossmig.config import CostModelConfig
from crossmig.faults import FaultInjector
from crossmig.model import MigrationApproach, OrchestratorFlavor, memhog_spec
from crossmig.world import two_node_world


@pytest.fixture(scope="session")
def cfg():
    return CostModelConfig()


def deploy_and_migrate(approach: MigrationApproach,
                       src_flavor=OrchestratorFlavor.KUBE_MOD_SIM,
                       dst_flavor=OrchestratorFlavor.KUBE_MOD_SIM, *,
                       footprint_mib=8, children=0, config=None,
                       inline_pages=True, exercise_codec=True,
                       faults: FaultInjector | None = None,
                       warmup_s=2.3, settle_s=3.0, requester=None):
    """Boot a two-node world, deploy a counter workload shaped for the
    approach, run it, migrate, and let the destination settle."""
    world, src, dst = two_node_world(src_flavor, dst_flavor,
                                     config or CostModelConfig(),
                                     inline_pages=inline_pages,
                                     exercise_codec=exercise_codec,
                                     faults=faults)
    spec = memhog_spec("workload", footprint_mib, children,
                       STRUCTURE_FOR[approach])
    world.deploy(src, spec, None)
    world.run_for(warmup_s)
    session = world.migrate(src, "workload", dst, approach_override=approach,
                            requester=requester)
    world.run_for(settle_s)
    return world, session


def activity_timeline(world, cid: str):
    """(time_ns, active-instance-count) change points for a top-level
    container id across all nodes."""
    instances: dict[str, bool] = {}
    count = 0
    timeline: list[tuple[int, int]] = []
    for t, node, c, _state, active in world.trace.states:
        if c != cid:
            continue
        prev = instances.get(node, False)
        if active != prev:
            count += 1 if active else -1
            instances[node] = active
            timeline.append((t, count))
    return timeline


def count_at(timeline, t_ns: int) -> int:
    current = 0
    for t, count in timeline:
        if t > t_ns:
            break
        current = count
    return current


def assert_service_runs_exactly_once(world, session, cid="workload"):
    """Stop-and-copy safety: one live instance outside the freeze-to-restore
    window, zero inside, never two."""
    timeline = activity_timeline(world, cid)
    assert all(count <= 1 for _, count in timeline), timeline
    assert count_at(timeline, world.clock.now_ns) == 1
    ts = session.step_timestamps_ns
    if 8 in ts:
        assert count_at(timeline, ts[8] + 1) == 0
    if 12 in ts:
        assert count_at(timeline, ts[12] + 1) == 1
        assert count_at(timeline, ts[8] - 1) == 1


def assert_counters_monotone(world, cid="workload"):
    series: dict[tuple[str, int], int] = {}
    events = sorted(
        (t, c, pid, v) for t, _n, c, pid, v in world.trace.counters
        if c == cid or c.startswith(cid + "::"))
    for t, c, pid, v in events:
        key = (c.split("::")[0], pid)
        last = series.get(key)
        assert last is None or v >= last, f"counter regressed for {key}: {last}->{v}"
        series[key] = v
    return series
