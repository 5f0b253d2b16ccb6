"""Exact pipeline schedules via longest-path evaluation of the execution DAG.

A plan plus a stage program induces a DAG with four node kinds per
microbatch: forward compute, backward compute, forward communication, and
backward communication, plus a sink.  Edges encode (a) the serial
execution order within each stage, (b) serialized transfers per link
direction (links are full duplex, so the two directions are independent
chains), and (c) the data dependencies of each microbatch across stages.
Each edge carries the duration of its source node, so the earliest start
times under finish-to-start precedence are the longest-path distances from
the schedule origin; evaluating them in topological order yields the exact
as-soon-as-possible schedule.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .scheduling import FWD, StageProgram

NODE_F = 0
NODE_B = 1
NODE_CF = 2
NODE_CB = 3
NODE_SINK = 4

_KIND_NAMES = {NODE_F: "F", NODE_B: "B", NODE_CF: "CF", NODE_CB: "CB", NODE_SINK: "sink"}


class SimulationError(ValueError):
    pass


class CycleError(SimulationError):
    def __init__(self, cycle: list[str]):
        self.cycle = cycle
        super().__init__("dependency cycle: " + " -> ".join(cycle))


@dataclass
class PipelineDag:
    num_stages: int
    num_microbatches: int
    duration: list[float]
    meta: list[tuple[int, int, int]]  # (kind, microbatch, stage) per node
    succ: list[list[int]]
    pred: list[list[int]]
    program: StageProgram

    @property
    def num_nodes(self) -> int:
        return len(self.duration)

    @property
    def sink(self) -> int:
        return self.num_nodes - 1

    def node_name(self, node: int) -> str:
        kind, mb, stage = self.meta[node]
        if kind == NODE_SINK:
            return "sink"
        return f"{_KIND_NAMES[kind]}[{mb},{stage}]"

    def node_id(self, kind: int, mb: int, stage: int) -> int:
        return self._ids[(kind, mb, stage)]

    _ids: dict = field(default_factory=dict, repr=False)


def build_dag(
    t_fwd: Sequence[float],
    t_bwd: Sequence[float],
    comm: Sequence[float],
    program: StageProgram,
) -> PipelineDag:
    """Assemble the execution DAG for a pipeline.

    ``t_fwd`` / ``t_bwd`` are per-stage per-microbatch compute times,
    ``comm`` the per-boundary transfer times (length S-1, applied to both
    directions of the link).
    """
    S = len(t_fwd)
    B = program.num_microbatches
    if len(t_bwd) != S or len(comm) != S - 1 or len(program.stages) != S:
        raise SimulationError("inconsistent stage/boundary dimensions")
    if any(d < 0 for d in list(t_fwd) + list(t_bwd) + list(comm)):
        raise SimulationError("durations must be non-negative")

    ids: dict[tuple[int, int, int], int] = {}
    duration: list[float] = []
    meta: list[tuple[int, int, int]] = []

    def add(kind: int, mb: int, stage: int, d: float) -> int:
        node = len(duration)
        ids[(kind, mb, stage)] = node
        duration.append(d)
        meta.append((kind, mb, stage))
        return node

    for s in range(1, S + 1):
        for i in range(1, B + 1):
            add(NODE_F, i, s, t_fwd[s - 1])
            add(NODE_B, i, s, t_bwd[s - 1])
    for s in range(1, S):
        for i in range(1, B + 1):
            add(NODE_CF, i, s, comm[s - 1])
            add(NODE_CB, i, s, comm[s - 1])
    sink = add(NODE_SINK, 0, 0, 0.0)

    succ: list[list[int]] = [[] for _ in range(len(duration))]
    pred: list[list[int]] = [[] for _ in range(len(duration))]

    def connect(u: int, v: int) -> None:
        succ[u].append(v)
        pred[v].append(u)

    # serial execution within each stage, in program order
    for s in range(1, S + 1):
        prev = None
        for kind, mb in program.stages[s - 1].ops:
            node = ids[(NODE_F if kind == FWD else NODE_B, mb, s)]
            if prev is not None:
                connect(prev, node)
            prev = node

    # serialized transfers per link direction, in microbatch order
    for s in range(1, S):
        for i in range(1, B):
            connect(ids[(NODE_CF, i, s)], ids[(NODE_CF, i + 1, s)])
            connect(ids[(NODE_CB, i, s)], ids[(NODE_CB, i + 1, s)])

    # per-microbatch dependencies across stages
    for s in range(1, S):
        for i in range(1, B + 1):
            connect(ids[(NODE_F, i, s)], ids[(NODE_CF, i, s)])
            connect(ids[(NODE_CF, i, s)], ids[(NODE_F, i, s + 1)])
            connect(ids[(NODE_B, i, s + 1)], ids[(NODE_CB, i, s)])
            connect(ids[(NODE_CB, i, s)], ids[(NODE_B, i, s)])

    for node in range(len(duration) - 1):
        if not succ[node]:
            connect(node, sink)

    dag = PipelineDag(S, B, duration, meta, succ, pred, program)
    dag._ids = ids
    return dag


@dataclass
class ScheduleTrace:
    dag: PipelineDag
    start: list[float]
    end: list[float]
    makespan: float

    @property
    def num_stages(self) -> int:
        return self.dag.num_stages

    def node_interval(self, kind: int, mb: int, stage: int) -> tuple[float, float]:
        node = self.dag.node_id(kind, mb, stage)
        return self.start[node], self.end[node]

    def stage_op_nodes(self, stage: int) -> list[int]:
        """Nodes of one stage in program order."""
        ops = self.dag.program.stages[stage - 1].ops
        return [
            self.dag.node_id(NODE_F if kind == FWD else NODE_B, mb, stage)
            for kind, mb in ops
        ]


def _find_cycle(dag: PipelineDag, remaining: set[int]) -> list[str]:
    state = {n: 0 for n in remaining}
    stack: list[int] = []

    def dfs(node: int) -> Optional[list[int]]:
        state[node] = 1
        stack.append(node)
        for nxt in dag.succ[node]:
            if nxt not in state:
                continue
            if state[nxt] == 1:
                return stack[stack.index(nxt) :] + [nxt]
            if state[nxt] == 0:
                found = dfs(nxt)
                if found:
                    return found
        state[node] = 2
        stack.pop()
        return None

    for node in remaining:
        if state[node] == 0:
            found = dfs(node)
            if found:
                return [dag.node_name(n) for n in found]
    return []


def simulate(dag: PipelineDag) -> ScheduleTrace:
    """Earliest start times: start(v) = max over predecessors u of
    start(u) + duration(u), swept in topological order from start(F[1,1]) = 0."""
    n = dag.num_nodes
    indeg = [len(dag.pred[v]) for v in range(n)]
    start = [0.0] * n
    queue = [v for v in range(n) if indeg[v] == 0]
    processed = 0
    head = 0
    while head < len(queue):
        u = queue[head]
        head += 1
        processed += 1
        su_end = start[u] + dag.duration[u]
        for v in dag.succ[u]:
            if su_end > start[v]:
                start[v] = su_end
            indeg[v] -= 1
            if indeg[v] == 0:
                queue.append(v)
    if processed != n:
        remaining = {v for v in range(n) if indeg[v] > 0}
        raise CycleError(_find_cycle(dag, remaining))
    end = [start[v] + dag.duration[v] for v in range(n)]
    return ScheduleTrace(dag, start, end, max(end))


# ---------------------------------------------------------------------------
# Analysis
# ---------------------------------------------------------------------------


def _interval_union(intervals: list[tuple[float, float]]) -> list[tuple[float, float]]:
    out: list[tuple[float, float]] = []
    for lo, hi in sorted(intervals):
        if hi <= lo:
            continue
        if out and lo <= out[-1][1]:
            out[-1] = (out[-1][0], max(out[-1][1], hi))
        else:
            out.append((lo, hi))
    return out


def _intersect(a: list[tuple[float, float]], b: list[tuple[float, float]]):
    out = []
    i = j = 0
    while i < len(a) and j < len(b):
        lo = max(a[i][0], b[j][0])
        hi = min(a[i][1], b[j][1])
        if hi > lo:
            out.append((lo, hi))
        if a[i][1] <= b[j][1]:
            i += 1
        else:
            j += 1
    return out


def _total(intervals: list[tuple[float, float]]) -> float:
    return sum(hi - lo for lo, hi in intervals)


@dataclass
class StageReport:
    stage: int
    busy: float
    window: float
    bubble: float
    bubble_fraction: float
    steady_bubble: float
    peak_inflight: int
    peak_inflight_bytes: float


@dataclass
class LinkReport:
    boundary: int  # between stage i and i+1
    fwd_time: float
    bwd_time: float
    overlap_ratio: float


@dataclass
class SimulationReport:
    makespan: float
    stages: list[StageReport]
    links: list[LinkReport]

    def to_text(self) -> str:
        lines = [f"makespan: {self.makespan:.6g} s", "stage  busy        bubble      steady-bubble  peak-inflight"]
        for r in self.stages:
            lines.append(
                f"{r.stage:>5d}  {r.busy:<10.6g}  {r.bubble:<10.6g}  "
                f"{r.steady_bubble:<13.6g}  {r.peak_inflight}"
            )
        if self.links:
            lines.append("link   comm-fwd    comm-bwd    overlap")
            for l in self.links:
                lines.append(
                    f"{l.boundary:>4d}>  {l.fwd_time:<10.6g}  {l.bwd_time:<10.6g}  "
                    f"{l.overlap_ratio:.3f}"
                )
        return "\n".join(lines) + "\n"


def analyze(trace: ScheduleTrace, mem_act_per_stage: Optional[Sequence[float]] = None) -> SimulationReport:
    """Per-stage busy/bubble breakdown, per-link overlap, peak in-flight
    microbatches.  The steady bubble counts idle time between the first and
    last steady-phase operation of a stage; the overlap ratio of a link is
    the fraction of its busy time during which both endpoint stages are also
    busy (1.0 by convention for idle links)."""
    dag = trace.dag
    S = dag.num_stages
    stage_rows = []
    stage_busy_ivals: list[list[tuple[float, float]]] = []
    for s in range(1, S + 1):
        nodes = trace.stage_op_nodes(s)
        ivals = _interval_union([(trace.start[n], trace.end[n]) for n in nodes])
        stage_busy_ivals.append(ivals)
        busy = sum(dag.duration[n] for n in nodes)
        window = trace.end[nodes[-1]] - trace.start[nodes[0]]
        prog = dag.program.stages[s - 1]
        steady_nodes = nodes[prog.warmup : prog.warmup + prog.steady]
        if steady_nodes:
            steady_window = trace.end[steady_nodes[-1]] - trace.start[steady_nodes[0]]
            steady_bubble = steady_window - sum(dag.duration[n] for n in steady_nodes)
        else:
            steady_bubble = 0.0
        inflight = 0
        peak = 0
        for kind, _ in prog.ops:
            inflight += 1 if kind == FWD else -1
            peak = max(peak, inflight)
        bytes_per = mem_act_per_stage[s - 1] if mem_act_per_stage else 0.0
        stage_rows.append(
            StageReport(
                stage=s,
                busy=busy,
                window=window,
                bubble=window - busy,
                bubble_fraction=(window - busy) / window if window > 0 else 0.0,
                steady_bubble=steady_bubble,
                peak_inflight=peak,
                peak_inflight_bytes=peak * bytes_per,
            )
        )

    link_rows = []
    for s in range(1, S):
        fwd_nodes = [dag.node_id(NODE_CF, i, s) for i in range(1, dag.num_microbatches + 1)]
        bwd_nodes = [dag.node_id(NODE_CB, i, s) for i in range(1, dag.num_microbatches + 1)]
        fwd_time = sum(dag.duration[n] for n in fwd_nodes)
        bwd_time = sum(dag.duration[n] for n in bwd_nodes)
        busy = _interval_union(
            [(trace.start[n], trace.end[n]) for n in fwd_nodes + bwd_nodes]
        )
        total_busy = _total(busy)
        if total_busy <= 0.0:
            ratio = 1.0
        else:
            both = _intersect(
                _intersect(busy, stage_busy_ivals[s - 1]), stage_busy_ivals[s]
            )
            ratio = _total(both) / total_busy
        link_rows.append(LinkReport(s, fwd_time, bwd_time, ratio))

    return SimulationReport(trace.makespan, stage_rows, link_rows)


def steady_state_rate(trace: ScheduleTrace, stage: int = 1) -> float:
    """Seconds per microbatch in the steady phase of a stage, estimated by a
    least-squares fit of forward start times over the steady window.  Only
    block-aligned forwards (every K-th microbatch, K the stage's launch
    count) enter the fit: those lie exactly on a line once the pipeline is
    periodic, so the within-block pattern cannot bias the slope."""
    dag = trace.dag
    B = dag.num_microbatches
    K = dag.program.counts.counts[stage - 1]
    first = K + 1 + K  # skip warm-up plus one block of transition
    idx = list(range(first, B + 1, K))
    if len(idx) < 4:
        raise SimulationError(
            f"steady window too short: need >= 3 blocks of {K} microbatches"
        )
    ys = [trace.start[dag.node_id(NODE_F, i, stage)] for i in idx]
    n = float(len(idx))
    mean_x = sum(idx) / n
    mean_y = sum(ys) / n
    sxx = sum((x - mean_x) ** 2 for x in idx)
    sxy = sum((x - mean_x) * (y - mean_y) for x, y in zip(idx, ys))
    return sxy / sxx  # seconds per microbatch


def steady_block_span(trace: ScheduleTrace, stage: int, i: int) -> float:
    """Span of one steady block: start(F[i+K]) - start(F[i])."""
    dag = trace.dag
    K = dag.program.counts.counts[stage - 1]
    a = trace.start[dag.node_id(NODE_F, i, stage)]
    b = trace.start[dag.node_id(NODE_F, i + K, stage)]
    return b - a


def asap_tight(trace: ScheduleTrace, rel_tol: float = 1e-9) -> bool:
    """Every node starts at 0 or exactly when some predecessor releases it."""
    dag = trace.dag
    for v in range(dag.num_nodes):
        if not dag.pred[v]:
            if trace.start[v] != 0.0:
                return False
            continue
        releases = [trace.start[u] + dag.duration[u] for u in dag.pred[v]]
        hi = max(releases)
        if not math.isclose(trace.start[v], hi, rel_tol=rel_tol, abs_tol=1e-12):
            return False
    return True


# ---------------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------------


def trace_events(trace: ScheduleTrace, labels: Optional[Sequence[str]] = None) -> list[dict]:
    """Trace-event records (one row per stage, one per link direction),
    viewable in a standard browser trace viewer.  Timestamps in us."""
    dag = trace.dag
    S = dag.num_stages
    events = []
    for v in range(dag.num_nodes):
        kind, mb, stage = dag.meta[v]
        if kind == NODE_SINK:
            continue
        if kind == NODE_F or kind == NODE_B:
            label = labels[stage - 1] if labels else f"stage-{stage}"
            tid = stage
        elif kind == NODE_CF:
            label = f"link-{stage}>{stage + 1} fwd"
            tid = S + 2 * stage - 1
        else:
            label = f"link-{stage}>{stage + 1} bwd"
            tid = S + 2 * stage
        if dag.duration[v] <= 0.0:
            continue
        events.append(
            {
                "name": f"{_KIND_NAMES[kind]}{mb}",
                "cat": _KIND_NAMES[kind],
                "ph": "X",
                "pid": label,
                "tid": tid,
                "ts": trace.start[v] * 1e6,
                "dur": dag.duration[v] * 1e6,
            }
        )
    return events


def write_trace_events(trace: ScheduleTrace, path, labels=None) -> None:
    with open(path, "w") as fh:
        json.dump({"traceEvents": trace_events(trace, labels)}, fh, indent=1)


def trace_to_text(trace: ScheduleTrace) -> str:
    dag = trace.dag
    lines = ["# node         start        end          duration"]
    order = sorted(range(dag.num_nodes), key=lambda v: (trace.start[v], v))
    for v in order:
        if dag.meta[v][0] == NODE_SINK:
            continue
        lines.append(
            f"{dag.node_name(v):<12s}  {trace.start[v]:<11.6g}  {trace.end[v]:<11.6g}"
            f"  {dag.duration[v]:.6g}"
        )
    lines.append(f"makespan {trace.makespan:.6g}")
    return "\n".join(lines) + "\n"
