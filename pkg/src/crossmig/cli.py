"""Operator entry point.

Subcommands: node, deploy, migrate, status, experiment, calibrate.
`node start` hosts one orchestrator+coordinator per process (multi-process
mode); `migrate --single-process` runs a whole two-node scenario on one
virtual clock. `--machine` switches human output to JSON lines.
$CROSSMIG_CONFIG points at a cost-model config file used when --config is
not given.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import wire
from .bench import (CalibrationTargets, ExperimentId, calibrate,
                    run_experiment)
from .config import CONFIG_ENV_VAR, CostModelConfig
from .model import (ContainerSpec, Endpoint, MigrationApproach, Phase,
                    OrchestratorFlavor, canonical_json)
from .netnode import TcpNode, client_request
from .world import two_node_world

FLAVOR_ALIASES = {
    "kube": OrchestratorFlavor.KUBE_SIM,
    "kube_mod": OrchestratorFlavor.KUBE_MOD_SIM,
    "mesos": OrchestratorFlavor.MESOS_SIM,
    "k3s": OrchestratorFlavor.K3S_SIM,
    "minishift": OrchestratorFlavor.MINISHIFT_SIM,
}

APPROACH_ALIASES = {
    "orchestrator": MigrationApproach.ORCHESTRATOR_LEVEL,
    "service": MigrationApproach.SERVICE_LEVEL,
    "container": MigrationApproach.CONTAINER_LEVEL,
}


def _flavor(text: str) -> OrchestratorFlavor:
    if text in FLAVOR_ALIASES:
        return FLAVOR_ALIASES[text]
    return OrchestratorFlavor(text)


def _approach(text: str) -> MigrationApproach:
    if text in APPROACH_ALIASES:
        return APPROACH_ALIASES[text]
    return MigrationApproach(text)


def _load_config(path: str | None) -> CostModelConfig:
    if path:
        return CostModelConfig.load(path)
    return CostModelConfig.load_default()


def _emit(args, payload: dict, human: str) -> None:
    if args.machine:
        print(canonical_json(payload))
    else:
        print(human)


def _print_report(args, session: dict) -> None:
    if args.machine:
        print(canonical_json(session))
        return
    report = session.get("report")
    print(f"session {session['session_id']}: {session['phase']}"
          f" (approach {session['approach']})")
    if session.get("failure_reason"):
        print(f"  reason: {session['failure_reason']}")
    if report:
        print("  step breakdown (virtual seconds):")
        for key in ("spec_fetch_s", "dest_create_s", "control_block_s",
                    "checkpoint_s", "transfer_s", "restore_s", "cleanup_s"):
            print(f"    {key[:-2]:>14}: {report[key]:8.3f}")
        print(f"    {'total':>14}: {report['total_s']:8.3f}")
        print(f"    {'downtime':>14}: {report['downtime_s']:8.3f}")
        print(f"    {'bytes':>14}: {report['bytes_transferred']}")
    for note in session.get("notes", []):
        print(f"  note: {note}")


# -- subcommands -------------------------------------------------------------

def cmd_node_start(args) -> int:
    config = _load_config(args.config)
    endpoint = Endpoint.parse(args.listen)
    node = TcpNode(args.name or endpoint.host, _flavor(args.flavor), endpoint,
                   config, capacity_mib=args.capacity_mib)
    try:
        node.bind()
    except OSError as exc:
        print(f"error: cannot bind {endpoint}: {exc}", file=sys.stderr)
        return 1
    _emit(args, {"event": "ready", "endpoint": str(endpoint),
                 "flavor": node.flavor.value},
          f"node {node.name} ({node.flavor.value}) serving on {endpoint}")
    sys.stdout.flush()
    try:
        node.serve_forever()
    except KeyboardInterrupt:
        node.stop()
    return 0


def cmd_node_ping(args) -> int:
    endpoint = Endpoint.parse(args.node)
    try:
        reply = client_request(endpoint, wire.Ping(), timeout_s=args.timeout)
    except OSError as exc:
        _emit(args, {"ok": False, "error": str(exc)}, f"no ack from {endpoint}: {exc}")
        return 1
    ok = isinstance(reply, wire.PingAck)
    _emit(args, {"ok": ok, "flavor": getattr(reply, "flavor", "")},
          f"ack from {endpoint} (flavor {getattr(reply, 'flavor', '?')})")
    return 0 if ok else 1


def cmd_node_stop(args) -> int:
    endpoint = Endpoint.parse(args.node)
    try:
        client_request(endpoint, wire.Shutdown())
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    _emit(args, {"ok": True}, f"node at {endpoint} stopping")
    return 0


def _parse_workload(text: str | None) -> dict | None:
    if not text:
        return None
    return json.loads(text)


def cmd_deploy(args) -> int:
    spec = ContainerSpec.from_json(open(args.spec_file).read())
    msg = wire.DeployCmd(spec=spec, workload=_parse_workload(args.workload))
    try:
        reply = client_request(Endpoint.parse(args.node), msg)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if isinstance(reply, wire.ErrorReply):
        _emit(args, {"ok": False, "error": reply.reason},
              f"deploy failed: {reply.reason}")
        return 1
    _emit(args, {"ok": True, "container_id": reply.container_id},
          reply.container_id)
    return 0


def cmd_migrate(args) -> int:
    if args.single_process:
        return _migrate_single_process(args)
    msg = wire.MigrateCmd(
        container_id=args.container_id,
        destination=Endpoint.parse(args.dest),
        approach_override=_approach(args.approach) if args.approach else None)
    try:
        reply = client_request(Endpoint.parse(args.node), msg,
                               timeout_s=args.timeout)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if isinstance(reply, wire.ErrorReply):
        _emit(args, {"ok": False, "error": reply.reason},
              f"migration failed: {reply.reason}")
        return 1
    _print_report(args, reply.session)
    return 0 if reply.ok else 1


def _migrate_single_process(args) -> int:
    """Host source and destination on one virtual clock and run the whole
    migration deterministically."""
    if not args.spec_file:
        print("error: --single-process requires a spec file (--spec)",
              file=sys.stderr)
        return 2
    config = _load_config(args.config)
    spec = ContainerSpec.from_json(open(args.spec_file).read())
    world, src, dst = two_node_world(_flavor(args.src_flavor),
                                     _flavor(args.dst_flavor), config)
    world.deploy(src, spec, _parse_workload(args.workload))
    world.run_for(args.warmup)
    session = world.migrate(
        src, spec.container_id, dst,
        approach_override=_approach(args.approach) if args.approach else None)
    _print_report(args, session.to_dict())
    return 0 if session.phase is Phase.COMPLETED else 1


def cmd_status(args) -> int:
    msg = wire.StatusQuery(session_id=args.session or "")
    try:
        reply = client_request(Endpoint.parse(args.node), msg)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if args.machine:
        print(canonical_json({"sessions": reply.sessions}))
        return 0
    if not reply.sessions:
        print("no sessions")
        return 0
    for s in reply.sessions:
        print(f"{s['session_id']}  step={s['step']:2d}  phase={s['phase']}"
              f"  container={s['container_id']}")
    return 0


def cmd_experiment(args) -> int:
    config = _load_config(args.config)
    try:
        experiment = ExperimentId(args.id)
    except ValueError:
        print(f"error: unknown experiment {args.id!r}; choose from "
              f"{[e.value for e in ExperimentId]}", file=sys.stderr)
        return 2
    result = run_experiment(experiment, config, reps=args.reps,
                            base_seed=args.seed)
    paths = result.write_csv(args.out)
    payload = {"experiment": experiment.value, "rows": len(result.rows),
               "files": [str(p) for p in paths]}
    _emit(args, payload,
          f"{experiment.value}: {len(result.rows)} rows -> "
          + ", ".join(str(p) for p in paths))
    return 0


def cmd_calibrate(args) -> int:
    config, residuals = calibrate(CalibrationTargets())
    if args.out:
        config.save(args.out)
    worst = max(abs(v) for v in residuals.values())
    payload = {"worst_residual": worst, "residuals": residuals,
               "out": args.out or ""}
    if args.machine:
        print(canonical_json(payload))
    else:
        for name, value in sorted(residuals.items()):
            print(f"{name:>45}: {value:+.3%}")
        print(f"worst residual: {worst:.3%}"
              + (f"; config written to {args.out}" if args.out else ""))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crossmig",
        description="live container migration simulator across orchestrators")
    parser.add_argument("--machine", action="store_true",
                        help="JSON-lines output for scripting")
    sub = parser.add_subparsers(dest="command", required=True)

    node = sub.add_parser("node", help="manage simulated nodes")
    node_sub = node.add_subparsers(dest="node_command", required=True)
    start = node_sub.add_parser("start", help="serve one node over TCP")
    start.add_argument("--flavor", required=True,
                       help="kube|kube_mod|mesos|k3s|minishift")
    start.add_argument("--listen", required=True, help="host:port")
    start.add_argument("--name", default="")
    start.add_argument("--capacity-mib", type=int, default=16 * 1024)
    start.add_argument("--config", default=None,
                       help=f"cost-model config file (default ${CONFIG_ENV_VAR})")
    start.set_defaults(func=cmd_node_start)
    ping = node_sub.add_parser("ping", help="check a node coordinator")
    ping.add_argument("node", help="host:port")
    ping.add_argument("--timeout", type=float, default=5.0)
    ping.set_defaults(func=cmd_node_ping)
    stop = node_sub.add_parser("stop", help="stop a served node")
    stop.add_argument("node", help="host:port")
    stop.set_defaults(func=cmd_node_stop)

    deploy = sub.add_parser("deploy", help="deploy a container from a spec file")
    deploy.add_argument("node", help="host:port of the node")
    deploy.add_argument("spec_file")
    deploy.add_argument("--workload", default=None,
                        help='JSON, e.g. {"kind":"memhog","footprint_mib":128}')
    deploy.set_defaults(func=cmd_deploy)

    migrate = sub.add_parser("migrate", help="migrate a running container")
    migrate.add_argument("node", nargs="?", default="",
                         help="host:port of the source node")
    migrate.add_argument("container_id", nargs="?", default="")
    migrate.add_argument("--dest", default="",
                         help="host:port of the destination coordinator")
    migrate.add_argument("--approach", default="",
                         help="orchestrator|service|container (default: detect)")
    migrate.add_argument("--timeout", type=float, default=120.0)
    migrate.add_argument("--single-process", action="store_true",
                         help="host both nodes in-process on one virtual clock")
    migrate.add_argument("--spec", dest="spec_file", default="")
    migrate.add_argument("--src-flavor", default="kube_mod")
    migrate.add_argument("--dst-flavor", default="kube_mod")
    migrate.add_argument("--workload", default=None)
    migrate.add_argument("--warmup", type=float, default=2.0,
                         help="virtual seconds before migrating (single-process)")
    migrate.add_argument("--config", default=None)
    migrate.set_defaults(func=cmd_migrate)

    status = sub.add_parser("status", help="list sessions on a node")
    status.add_argument("node", help="host:port")
    status.add_argument("--session", default="")
    status.set_defaults(func=cmd_status)

    experiment = sub.add_parser("experiment", help="run a measurement sweep")
    experiment.add_argument("id", help="|".join(e.value for e in ExperimentId))
    experiment.add_argument("--config", default=None)
    experiment.add_argument("--out", default="results")
    experiment.add_argument("--reps", type=int, default=30)
    experiment.add_argument("--seed", type=int, default=1)
    experiment.set_defaults(func=cmd_experiment)

    calibrate_p = sub.add_parser(
        "calibrate", help="fit the cost model to the published totals")
    calibrate_p.add_argument("--out", default="")
    calibrate_p.set_defaults(func=cmd_calibrate)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
