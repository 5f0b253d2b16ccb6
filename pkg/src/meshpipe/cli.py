"""Command-line front end: plan, simulate, compare, profile-dump.

Exit codes: 0 success, 2 infeasible instance, 1 any other error.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import yaml

from . import planner, profiling, scheduling, simulation
from .cluster import ClusterError, ClusterSpec, load_cluster_spec
from .model_graph import (
    GptConfig,
    HEAVY,
    LIGHT,
    ModelGraphError,
    OperatorNode,
    cluster_layers,
    detect_modules,
    generate_gpt_sequence,
    layers_to_text,
)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INFEASIBLE = 2


def _load_yaml(path: str) -> dict:
    with open(path) as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ValueError(f"{path}: expected a mapping at top level")
    return data


def load_model_file(path: str) -> list[OperatorNode]:
    data = _load_yaml(path)
    if data.get("generator") == "gpt":
        cfg = GptConfig(
            num_blocks=int(data["num_blocks"]),
            hidden_dim=int(data["hidden_dim"]),
            seq_len=int(data["seq_len"]),
            mb_size=int(data.get("mb_size", 1)),
            vocab=int(data.get("vocab", 32000)),
        )
        return generate_gpt_sequence(cfg)
    if "operators" not in data:
        raise ModelGraphError(f"{path}: need 'generator: gpt' or an 'operators' list")
    ops = []
    for entry in data["operators"]:
        if "shape_tag" not in entry:
            raise ModelGraphError(f"{path}: operator entry missing shape_tag: {entry}")
        repeat = int(entry.get("repeat", 1))
        for _ in range(repeat):
            flops = float(entry.get("flops", 0.0))
            kind = entry.get("kind")
            if kind is None:
                kind = HEAVY if flops > 0 else LIGHT
            ops.append(
                OperatorNode(
                    index=len(ops),
                    kind=str(kind),
                    flops=flops,
                    param_bytes=float(entry.get("param_bytes", 0.0)),
                    out_activation_bytes=float(entry.get("out_activation_bytes", 0.0)),
                    shape_tag=str(entry["shape_tag"]),
                )
            )
    return ops


def _build_layers(args) -> tuple:
    ops = load_model_file(args.model)
    spans = detect_modules(ops, z=args.z)
    layers = cluster_layers(spans, ops, args.layers_per_module)
    return ops, spans, layers


def _build_store(args, layers, cluster: ClusterSpec) -> profiling.ProfileStore:
    model = profiling.CostModel(
        beta=args.beta,
        efficiency=args.efficiency,
        alpha=args.alpha,
    )
    store = profiling.build_store(
        layers, cluster, model, imbalance_ratio=args.rho, dedup=not args.no_dedup
    )
    if args.profiles:
        overrides = profiling.import_profiles(_load_yaml(args.profiles))
        n = store.apply_overrides(overrides)
        print(f"applied {n} profile overrides")
    return store


def _workers(args) -> int:
    env = os.environ.get("MESHPIPE_WORKERS")
    if args.workers is not None:
        return args.workers
    if env:
        return max(1, int(env))
    return 1


def cmd_plan(args) -> int:
    _, _, layers = _build_layers(args)
    cluster = load_cluster_spec(_load_yaml(args.cluster))
    store = _build_store(args, layers, cluster)
    costs = profiling.boundary_costs(layers, cluster)
    try:
        plan = planner.search(
            store,
            costs,
            args.batch,
            epsilon=args.epsilon,
            workers=_workers(args),
            batch_size=args.batch_size,
        )
    except planner.InfeasiblePlanError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    problems = planner.validate_plan(plan, store, costs, cluster)
    if problems:
        print("plan failed verification:", *problems, sep="\n  ", file=sys.stderr)
        return EXIT_ERROR
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    plan_path = out_dir / "plan.yaml"
    with open(plan_path, "w") as fh:
        yaml.safe_dump(planner.plan_to_dict(plan), fh, sort_keys=False)
    print(planner.plan_report(plan), end="")
    print(f"plan written to {plan_path}")
    return EXIT_OK


def _counts_for(plan: planner.ParallelPlan, kind: str, epsilon: float):
    S = plan.num_stages
    if kind == "classic":
        return scheduling.classic_counts(S)
    if kind == "eager":
        return scheduling.eager_counts(S)
    t_ref = max(plan.t_max, max(plan.stage_times))
    return scheduling.adaptive_counts(
        plan.stage_times, plan.comm_times, epsilon, t_max=t_ref
    )


def _simulate_plan(plan: planner.ParallelPlan, B: int, kind: str, epsilon: float):
    counts = _counts_for(plan, kind, epsilon)
    program = scheduling.build_program(counts, B)
    dag = simulation.build_dag(
        [s.t_fwd for s in plan.stages],
        [s.t_bwd for s in plan.stages],
        plan.comm_times,
        program,
    )
    trace = simulation.simulate(dag)
    report = simulation.analyze(trace, [s.mem_act for s in plan.stages])
    return counts, program, trace, report


def cmd_simulate(args) -> int:
    plan = planner.plan_from_dict(_load_yaml(args.plan))
    B = args.batch or plan.num_microbatches
    counts, program, trace, report = _simulate_plan(
        plan, B, args.scheduler, args.epsilon
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    labels = [f"stage-{i + 1} {s.mesh_id}({s.n},{s.m})" for i, s in enumerate(plan.stages)]
    simulation.write_trace_events(trace, out_dir / "trace.json", labels)
    (out_dir / "trace.txt").write_text(simulation.trace_to_text(trace))
    (out_dir / "program.txt").write_text(scheduling.program_to_text(program))
    (out_dir / "report.txt").write_text(report.to_text())
    print(f"scheduler: {counts.kind}, launch counts {list(counts.counts)}")
    if counts.kind == "adaptive":
        t_ref = max(plan.t_max, max(plan.stage_times))
        for row in scheduling.delta_diagnostics(
            plan.stage_times, plan.comm_times, args.epsilon, t_max=t_ref
        ):
            if not row["agrees"]:
                print(
                    f"note: boundary {row['boundary']} launches "
                    f"{row['applied_delta']} extra forward(s); fully hiding "
                    f"its {row['comm']:.3g}s transfer would take "
                    f"{row['analytic_delta']} (small bubble accepted)"
                )
    print(report.to_text(), end="")
    print(f"trace written to {out_dir / 'trace.json'}")
    return EXIT_OK


def cmd_compare(args) -> int:
    plan = planner.plan_from_dict(_load_yaml(args.plan))
    B = args.batch or plan.num_microbatches
    kinds = [k.strip() for k in args.schedulers.split(",") if k.strip()]
    if len(kinds) < 2:
        raise ValueError("compare needs at least two scheduler kinds")
    rows = []
    for kind in kinds:
        counts, _, trace, report = _simulate_plan(plan, B, kind, args.epsilon)
        rate = None
        try:
            rate = simulation.steady_state_rate(trace, stage=1)
        except simulation.SimulationError:
            pass
        rows.append(
            {
                "scheduler": kind,
                "makespan": trace.makespan,
                "steady_rate": rate,
                "launch_counts": list(counts.counts),
                "peak_inflight": [r.peak_inflight for r in report.stages],
                "peak_inflight_bytes": [r.peak_inflight_bytes for r in report.stages],
                "steady_bubble": [r.steady_bubble for r in report.stages],
                "overlap": [l.overlap_ratio for l in report.links],
            }
        )
    header = f"{'scheduler':<10} {'makespan':>12} {'steady-rate':>12}  counts / peak in-flight"
    print(header)
    for r in rows:
        rate = f"{r['steady_rate']:.6g}" if r["steady_rate"] is not None else "-"
        print(
            f"{r['scheduler']:<10} {r['makespan']:>12.6g} {rate:>12}  "
            f"{r['launch_counts']} / {r['peak_inflight']}"
        )
    if args.out:
        with open(args.out, "w") as fh:
            yaml.safe_dump({"batch": B, "results": rows}, fh, sort_keys=False)
        print(f"comparison written to {args.out}")
    return EXIT_OK


def cmd_profile_dump(args) -> int:
    _, spans, layers = _build_layers(args)
    cluster = load_cluster_spec(_load_yaml(args.cluster))
    store = _build_store(args, layers, cluster)
    print(f"modules: {len(spans)} "
          f"({sum(1 for s in spans if s.kind == 'repeated')} repeated)")
    print(f"layers: {len(layers)}")
    print(profiling.store_dump(store), end="")
    if args.layers:
        print(layers_to_text(layers), end="")
    return EXIT_OK


def _add_model_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", required=True, help="model spec file")
    p.add_argument("--cluster", required=True, help="cluster spec file")
    p.add_argument("--profiles", help="measured profile override file")
    p.add_argument("-z", type=int, default=1,
                   help="min heavy operators per repeated module (default 1)")
    p.add_argument("--layers-per-module", type=int, default=1,
                   help="layers per module occurrence (default 1)")
    p.add_argument("--beta", type=float, default=2.0,
                   help="backward/forward compute ratio (default 2.0)")
    p.add_argument("--efficiency", type=float, default=0.5,
                   help="achieved fraction of peak flops (default 0.5)")
    p.add_argument("--alpha", type=float, default=0.0,
                   help="intra-stage collective overhead factor (default 0)")
    p.add_argument("--rho", type=float, default=3.0,
                   help="imbalance pruning ratio (default 3.0)")
    p.add_argument("--no-dedup", action="store_true",
                   help="profile every candidate without structural dedup")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="meshpipe",
        description="pipeline-parallel planning and simulation for "
        "heterogeneous GPU clusters",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="search a parallel strategy")
    _add_model_opts(p)
    p.add_argument("-B", "--batch", type=int, required=True,
                   help="microbatches per iteration")
    p.add_argument("--epsilon", type=float, default=0.05,
                   help="small-communication threshold (default 0.05)")
    p.add_argument("--workers", type=int, default=None,
                   help="worker threads for the candidate sweep "
                   "(or MESHPIPE_WORKERS)")
    p.add_argument("--batch-size", type=int, default=None,
                   help="max t_max candidates per evaluation batch")
    p.add_argument("--out-dir", default="out")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("simulate", help="simulate a plan file")
    p.add_argument("--plan", required=True)
    p.add_argument("-B", "--batch", type=int, default=None)
    p.add_argument("--scheduler", default="adaptive",
                   choices=list(scheduling.KINDS))
    p.add_argument("--epsilon", type=float, default=0.05)
    p.add_argument("--out-dir", default="out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="compare scheduler kinds on a plan")
    p.add_argument("--plan", required=True)
    p.add_argument("-B", "--batch", type=int, default=None)
    p.add_argument("--schedulers", default="classic,eager,adaptive")
    p.add_argument("--epsilon", type=float, default=0.05)
    p.add_argument("--out", default=None, help="write results as YAML")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("profile-dump", help="profile store statistics")
    _add_model_opts(p)
    p.add_argument("--layers", action="store_true", help="dump the layer table")
    p.set_defaults(func=cmd_profile_dump)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except profiling.NoFeasibleCandidateError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (
        ModelGraphError,
        ClusterError,
        profiling.ProfilingError,
        scheduling.ScheduleError,
        simulation.SimulationError,
        planner.PlannerError,
        ValueError,
        OSError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
