"""Inter-stage parallel strategy search for heterogeneous clusters.

The search minimizes end-to-end pipeline latency

    T = sum_i (t_i + 2 c_i)  +  (B - 1) * t_max

over all contiguous partitions of the layer sequence into stages and all
submesh assignments that consume the cluster's meshes in order, one mesh
boundary crossing at a time.  For a fixed latency bound t_max the first
term is minimized by a suffix DP whose state is (stages left, first layer
of the suffix, devices remaining); t_max itself is swept over the sorted
pool of feasible stage compute times.  Three transitions are admissible
per state: the new stage's compute time must not exceed t_max, its
boundary transfer must not exceed t_max (otherwise no launch schedule can
hide it), and its parameter plus warm-up activation memory -- with the
warm-up bound K = ceil(2 c / t_max) + 1 + K(successor) -- must fit the
device.

Search-cost controls: a sparse index restricts DP transitions to feasible
spans, the t_max pool is pruned from both ends (binary search for the
smallest feasible bound; an upper cutoff derived from its latency), and
surviving candidates are evaluated in batches, optionally on a worker
pool.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from ._core import BACKEND, dp_sweep
from .cluster import ClusterSpec
from .profiling import BoundaryCost, ProfileStore
from .scheduling import adaptive_counts


class PlannerError(ValueError):
    pass


class InfeasiblePlanError(PlannerError):
    """No stage partition satisfies the constraints."""


@dataclass(frozen=True)
class PlanStage:
    layer_start: int  # 1-based inclusive
    layer_end: int
    mesh_id: str
    n: int
    m: int
    t_fwd: float
    t_bwd: float
    mem_params: float
    mem_act: float
    launch_count: int  # schedule-time warm-up forwards (bucketed rule)
    dp_launch_bound: int  # memory bound K used inside the search

    @property
    def t(self) -> float:
        return self.t_fwd + self.t_bwd

    @property
    def submesh(self) -> tuple[int, int]:
        return (self.n, self.m)

    @property
    def device_count(self) -> int:
        return self.n * self.m


@dataclass(frozen=True)
class PlanBoundary:
    after_layer: int
    comm: float
    link: str


@dataclass
class ParallelPlan:
    stages: list[PlanStage]
    boundaries: list[PlanBoundary]
    t_max: float
    num_microbatches: int
    predicted_latency: float
    eta_pct: float
    epsilon: float
    search_stats: dict = field(default_factory=dict)

    @property
    def num_stages(self) -> int:
        return len(self.stages)

    @property
    def stage_times(self) -> list[float]:
        return [s.t for s in self.stages]

    @property
    def comm_times(self) -> list[float]:
        return [b.comm for b in self.boundaries]

    def sort_key(self) -> tuple:
        """Deterministic preference order among equally good plans."""
        return (
            self.predicted_latency,
            self.t_max,
            self.num_stages,
            tuple(s.layer_end for s in self.stages),
            tuple((s.mesh_id, s.n, s.m) for s in self.stages),
        )


def end_to_end_latency(
    stage_times: Sequence[float], comm_times: Sequence[float], num_microbatches: int
) -> float:
    """Closed-form pipeline latency: one microbatch through every stage plus
    both boundary transfers, then B-1 more microbatches at the slowest
    stage's rate."""
    if not stage_times:
        raise PlannerError("need at least one stage")
    if len(comm_times) != len(stage_times) - 1:
        raise PlannerError("expected one comm time per adjacent stage pair")
    t_max = max(stage_times)
    for i, c in enumerate(comm_times):
        if c > t_max:
            raise PlannerError(
                f"boundary {i + 1}: comm {c:.6g}s exceeds max stage time {t_max:.6g}s"
            )
    return (
        sum(stage_times)
        + 2.0 * sum(comm_times)
        + (num_microbatches - 1) * t_max
    )


def load_balance_eta(
    busy_seconds: Sequence[float], peak_flops: Sequence[float]
) -> float:
    """Capacity-weighted load-balance metric in percent.

    100% means every device is busy for the same wall time; idle time on a
    device is weighted by its peak compute rate.
    """
    if len(busy_seconds) == 0 or len(busy_seconds) != len(peak_flops):
        raise PlannerError("need one busy time per device")
    if any(t < 0 for t in busy_seconds) or all(t == 0 for t in busy_seconds):
        raise PlannerError("busy times must be non-negative and not all zero")
    td_max = max(busy_seconds)
    num = sum((td_max - td) * p for td, p in zip(busy_seconds, peak_flops))
    den = td_max * sum(peak_flops)
    return 100.0 * (1.0 - num / den)


# ---------------------------------------------------------------------------
# DP tables
# ---------------------------------------------------------------------------


class DpTables:
    """Dense per-(option, span) cost tables plus the sparse feasible-span
    index consumed by the kernels.  Options are (mesh, submesh shape) pairs
    in cluster order; the remaining-device scalar g indexes budget states."""

    def __init__(self, store: ProfileStore, costs: BoundaryCost):
        self.store = store
        self.costs = costs
        cluster = store.cluster
        L = store.num_layers
        self.L = L
        opts = store.options
        n_opts = len(opts)
        self.opt_meta = [(mesh.id, sub.n, sub.m) for mesh, sub in opts]

        self.opt_mesh = np.array(
            [cluster.mesh_order(mesh.id) for mesh, _ in opts], dtype=np.int32
        )
        self.opt_devs = np.array([sub.device_count for _, sub in opts], dtype=np.int32)
        self.opt_cap = np.array([mesh.mem_device for mesh, _ in opts])
        n_meshes = len(cluster.meshes)
        self.opt_off = np.zeros(n_meshes + 1, dtype=np.int32)
        for m_idx in range(n_meshes):
            self.opt_off[m_idx + 1] = self.opt_off[m_idx] + sum(
                1 for om in self.opt_mesh if om == m_idx
            )

        self.t_tab = np.full((n_opts, L + 2, L + 2), np.inf)
        self.mp_tab = np.full((n_opts, L + 2, L + 2), np.inf)
        self.ma_tab = np.full((n_opts, L + 2, L + 2), np.inf)
        for o, (mesh, sub) in enumerate(opts):
            for q in range(1, L + 1):
                for p in range(q, L + 1):
                    prof = store.lookup(q, p, mesh.id, sub.shape)
                    if prof.feasible:
                        self.t_tab[o, q, p] = prof.t
                        self.mp_tab[o, q, p] = prof.mem_params
                        self.ma_tab[o, q, p] = prof.mem_act

        self.cb_same = np.zeros((n_meshes, L + 1))
        self.cb_next = np.zeros((n_meshes, L + 1))
        for m_idx, mesh in enumerate(cluster.meshes):
            for i in range(1, L):
                self.cb_same[m_idx, i] = costs.get(i, mesh.id, mesh.id)
                if m_idx + 1 < n_meshes:
                    self.cb_next[m_idx, i] = costs.get(
                        i, mesh.id, cluster.meshes[m_idx + 1].id
                    )

        budgets = [mesh.device_count for mesh in cluster.meshes]
        G = sum(budgets)
        self.G = G
        suffix = [0] * (n_meshes + 1)
        for m_idx in range(n_meshes - 1, -1, -1):
            suffix[m_idx] = suffix[m_idx + 1] + budgets[m_idx]
        self.g_mesh = np.zeros(G + 1, dtype=np.int32)
        self.g_avail = np.zeros(G + 1, dtype=np.int32)
        for g in range(1, G + 1):
            for m_idx in range(n_meshes):
                if suffix[m_idx + 1] < g <= suffix[m_idx]:
                    self.g_mesh[g] = m_idx
                    self.g_avail[g] = g - suffix[m_idx + 1]
                    break
        self.s_max = min(L, G)

        stride = L + 2
        offs = np.zeros(n_opts * stride + 1, dtype=np.int32)
        items: list[int] = []
        for o in range(n_opts):
            for k in range(stride):
                offs[o * stride + k] = len(items)
                if 1 <= k <= L:
                    for p in range(k, L + 1):
                        if math.isfinite(self.t_tab[o, k, p]):
                            items.append(p)
        offs[n_opts * stride] = len(items)
        self.span_off = offs
        self.span_items = np.array(items, dtype=np.int32) if items else np.zeros(1, dtype=np.int32)
        self.feasible_spans_per_opt = np.array(
            [
                offs[(o + 1) * stride] - offs[o * stride]
                for o in range(n_opts)
            ],
            dtype=np.int64,
        )

    def transitions_per_sweep(self) -> int:
        total = 0
        for g in range(1, self.G + 1):
            r = int(self.g_mesh[g])
            avail = int(self.g_avail[g])
            for o in range(int(self.opt_off[r]), int(self.opt_off[r + 1])):
                if self.opt_devs[o] <= avail:
                    total += int(self.feasible_spans_per_opt[o])
        return total * self.s_max


# ---------------------------------------------------------------------------
# Per-candidate search
# ---------------------------------------------------------------------------


@dataclass
class DpOutcome:
    plan: Optional[ParallelPlan]
    states: int


def _extract_plan(
    tables: DpTables,
    F: np.ndarray,
    N: np.ndarray,
    bp_i: np.ndarray,
    bp_o: np.ndarray,
    t_max: float,
    num_microbatches: int,
    epsilon: float,
) -> Optional[ParallelPlan]:
    L, G = tables.L, tables.G
    store = tables.store
    cluster = store.cluster
    B = num_microbatches

    best_s = -1
    best_total = math.inf
    for s in range(1, tables.s_max + 1):
        val = float(F[s, 1, G])
        if not math.isfinite(val):
            continue
        total = val + (B - 1) * t_max
        if total < best_total:
            best_total = total
            best_s = s
    if best_s < 0:
        return None

    spans: list[tuple[int, int, int]] = []  # (q, p, option)
    s, k, g = best_s, 1, G
    while s > 0:
        i = int(bp_i[s, k, g])
        o = int(bp_o[s, k, g])
        if i < 0:
            raise PlannerError("broken backpointer chain")
        spans.append((k, i, o))
        g -= int(tables.opt_devs[o])
        k = i + 1
        s -= 1
    if k != L + 1 or g != 0:
        raise PlannerError("plan does not cover all layers and devices")

    profs = []
    for q, p, o in spans:
        mesh_id, n, m = tables.opt_meta[o]
        profs.append((q, p, mesh_id, n, m, store.lookup(q, p, mesh_id, (n, m))))

    comm = []
    links = []
    for idx in range(len(spans) - 1):
        i = spans[idx][1]
        mesh_a = profs[idx][2]
        mesh_b = profs[idx + 1][2]
        comm.append(tables.costs.get(i, mesh_a, mesh_b))
        links.append(
            f"intra:{mesh_a}" if mesh_a == mesh_b else f"cross:{mesh_a}>{mesh_b}"
        )

    # warm-up memory bounds used by the search, rebuilt from the tail
    k_bounds = [0] * len(spans)
    k_next = 0.0
    for idx in range(len(spans) - 1, -1, -1):
        c = comm[idx] if idx < len(spans) - 1 else 0.0
        k_next = math.ceil(2.0 * c / t_max) + 1.0 + k_next
        k_bounds[idx] = int(k_next)
    if k_bounds[0] != int(N[best_s, 1, G]):
        raise PlannerError("launch-bound chain disagrees with the DP table")

    stage_times = [pr.t for *_, pr in profs]
    counts = adaptive_counts(
        stage_times, comm, epsilon, t_max=max(t_max, max(stage_times))
    )

    stages = [
        PlanStage(
            layer_start=q,
            layer_end=p,
            mesh_id=mesh_id,
            n=n,
            m=m,
            t_fwd=pr.t_fwd,
            t_bwd=pr.t_bwd,
            mem_params=pr.mem_params,
            mem_act=pr.mem_act,
            launch_count=counts.counts[idx],
            dp_launch_bound=k_bounds[idx],
        )
        for idx, (q, p, mesh_id, n, m, pr) in enumerate(profs)
    ]
    boundaries = [
        PlanBoundary(after_layer=spans[idx][1], comm=comm[idx], link=links[idx])
        for idx in range(len(spans) - 1)
    ]

    busy, peaks = [], []
    for st in stages:
        mesh = cluster.mesh(st.mesh_id)
        for _ in range(st.device_count):
            busy.append(st.t * B)
            peaks.append(mesh.peak_flops)
    eta = load_balance_eta(busy, peaks)

    return ParallelPlan(
        stages=stages,
        boundaries=boundaries,
        t_max=t_max,
        num_microbatches=B,
        predicted_latency=best_total,
        eta_pct=eta,
        epsilon=epsilon,
    )


def dp_search(
    store: ProfileStore,
    costs: BoundaryCost,
    num_microbatches: int,
    t_max: float,
    epsilon: float = 0.05,
    tables: Optional[DpTables] = None,
) -> Optional[ParallelPlan]:
    """Best plan under one latency bound, or None when infeasible."""
    if t_max <= 0:
        raise PlannerError("t_max must be positive")
    tables = tables or DpTables(store, costs)
    F, N, bp_i, bp_o = dp_sweep(
        t_max,
        tables.t_tab,
        tables.mp_tab,
        tables.ma_tab,
        tables.opt_cap,
        tables.opt_mesh,
        tables.opt_devs,
        tables.opt_off,
        tables.cb_same,
        tables.cb_next,
        tables.g_mesh,
        tables.g_avail,
        tables.s_max,
        tables.span_off,
        tables.span_items,
    )
    plan = _extract_plan(
        tables, F, N, bp_i, bp_o, t_max, num_microbatches, epsilon
    )
    if plan is not None:
        plan.search_stats["dp_states"] = int(
            np.isfinite(F[1:]).sum()
        )
    return plan


def candidate_tmax(store: ProfileStore) -> list[float]:
    """Sorted, deduplicated compute times of feasible canonical profiles."""
    pool = store.feasible_t_values()
    if not pool:
        raise InfeasiblePlanError("no feasible candidates in the profile store")
    return pool


def bidirectional_prune(
    candidates: Sequence[float],
    dp: Callable[[float], Optional[ParallelPlan]],
    num_microbatches: int,
) -> tuple[float, float, list[float], dict]:
    """Prune the t_max pool from both ends.

    Binary search locates the smallest feasible bound t_S (feasibility is
    monotone in t_max: every constraint only relaxes as the bound grows,
    which is spot-checked against the candidate just below t_S).  Its
    latency T(t_S) caps useful bounds at t_E = T(t_S) / (B - 1): anything
    larger already pays more in the (B-1) * t_max term alone.

    Returns (t_S, t_E, surviving candidates, cache of evaluated plans).
    """
    if not candidates:
        raise InfeasiblePlanError("empty candidate pool")
    cache: dict[float, Optional[ParallelPlan]] = {}

    def evaluate(t: float) -> Optional[ParallelPlan]:
        if t not in cache:
            cache[t] = dp(t)
        return cache[t]

    lo, hi = 0, len(candidates) - 1
    if evaluate(candidates[hi]) is None:
        raise InfeasiblePlanError(
            "no t_max candidate admits a feasible plan"
        )
    while lo < hi:
        mid = (lo + hi) // 2
        if evaluate(candidates[mid]) is not None:
            hi = mid
        else:
            lo = mid + 1
    t_s = candidates[lo]
    if lo > 0 and evaluate(candidates[lo - 1]) is not None:
        # every constraint relaxes as the bound grows, so this indicates a
        # cost-inverted, memory-critical suffix displacing a feasible chain
        raise PlannerError(
            "feasibility is not monotone in t_max on this instance; rerun "
            "without pruning (optimized=False)"
        )
    plan_s = cache[t_s]
    assert plan_s is not None
    B = num_microbatches
    t_e = plan_s.predicted_latency / (B - 1) if B > 1 else math.inf
    surviving = [t for t in candidates[lo:] if t <= t_e]
    return t_s, t_e, surviving, cache


def _activated_pairs(tables: DpTables, candidates: Sequence[float]) -> list[int]:
    """Number of feasible stage-mesh pairs usable under each candidate bound
    (profile entries with t <= t_max); the batching key."""
    finite = np.sort(tables.t_tab[np.isfinite(tables.t_tab)])
    return [int(np.searchsorted(finite, t, side="right")) for t in candidates]


def batched_search(
    surviving: Sequence[float],
    dp: Callable[[float], Optional[ParallelPlan]],
    activated: Optional[Sequence[int]] = None,
    batch_size: Optional[int] = None,
    workers: int = 1,
    cache: Optional[dict] = None,
) -> tuple[Optional[ParallelPlan], int]:
    """Evaluate surviving candidates grouped into batches and return the best
    plan.  Candidates with equal activated-pair counts share a batch (their
    DP sweeps touch the same transition set and cost about the same), chunked
    to at most ``batch_size``.  Result is independent of batching and worker
    count: plans merge by a total order.
    """
    if not surviving:
        raise InfeasiblePlanError("no surviving candidates")
    cache = cache or {}

    groups: list[list[float]] = []
    if activated is None:
        groups.append(list(surviving))
    else:
        current_key = None
        for t, key in zip(surviving, activated):
            if key != current_key:
                groups.append([])
                current_key = key
            groups[-1].append(t)
    batches: list[list[float]] = []
    for grp in groups:
        if batch_size is None or batch_size >= len(grp):
            batches.append(grp)
        else:
            for off in range(0, len(grp), batch_size):
                batches.append(grp[off : off + batch_size])

    def run_batch(batch: list[float]) -> list[Optional[ParallelPlan]]:
        return [cache[t] if t in cache else dp(t) for t in batch]

    if workers > 1 and len(batches) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_batch, batches))
    else:
        results = [run_batch(b) for b in batches]

    best: Optional[ParallelPlan] = None
    for batch_plans in results:
        for plan in batch_plans:
            if plan is None:
                continue
            if best is None or plan.sort_key() < best.sort_key():
                best = plan
    return best, len(batches)


def search(
    store: ProfileStore,
    costs: BoundaryCost,
    num_microbatches: int,
    epsilon: float = 0.05,
    workers: int = 1,
    batch_size: Optional[int] = None,
    optimized: bool = True,
) -> ParallelPlan:
    """Full planning pass: candidate pool, pruning, batched evaluation.

    ``optimized=False`` disables bidirectional pruning and batching and
    sweeps every candidate sequentially (reference mode for equivalence
    tests).  Raises InfeasiblePlanError when nothing satisfies the
    constraints.
    """
    began = time.perf_counter()
    tables = DpTables(store, costs)
    pool = candidate_tmax(store)

    states_seen = 0

    def dp(t: float) -> Optional[ParallelPlan]:
        nonlocal states_seen
        plan = dp_search(store, costs, num_microbatches, t, epsilon, tables)
        if plan is not None:
            states_seen += plan.search_stats.get("dp_states", 0)
        return plan

    if optimized:
        t_s, t_e, surviving, cache = bidirectional_prune(pool, dp, num_microbatches)
        activated = _activated_pairs(tables, surviving)
        best, n_batches = batched_search(
            surviving, dp, activated, batch_size, workers, cache
        )
        pruned_below = pool.index(t_s)
        pruned_above = len(pool) - pruned_below - len(surviving)
    else:
        t_s, t_e = pool[0], math.inf
        surviving = pool
        best, n_batches = batched_search(surviving, dp, None, None, 1, None)
        pruned_below = pruned_above = 0

    if best is None:
        raise InfeasiblePlanError(
            "no stage partition satisfies the memory and overlap constraints"
        )
    best.search_stats.update(
        {
            "backend": BACKEND,
            "candidates_total": len(pool),
            "pruned_below_ts": pruned_below,
            "pruned_above_te": pruned_above,
            "evaluated": len(surviving),
            "batches": n_batches,
            "t_low": t_s,
            "t_high": None if math.isinf(t_e) else t_e,
            "dp_states": states_seen,
            "dp_transitions": tables.transitions_per_sweep() * len(surviving),
            "wall_time_s": time.perf_counter() - began,
        }
    )
    return best


# ---------------------------------------------------------------------------
# Independent constraint checker and serialization
# ---------------------------------------------------------------------------


def validate_plan(
    plan: ParallelPlan,
    store: ProfileStore,
    costs: BoundaryCost,
    cluster: ClusterSpec,
) -> list[str]:
    """Re-derive every constraint from scratch; returns violation messages."""
    problems = []
    L = store.num_layers
    cursor = 1
    for st in plan.stages:
        if st.layer_start != cursor:
            problems.append(f"stage gap before layer {st.layer_start}")
        cursor = st.layer_end + 1
    if cursor != L + 1:
        problems.append("stages do not cover the layer sequence")

    used: dict[str, int] = {}
    order = -1
    for st in plan.stages:
        idx = cluster.mesh_order(st.mesh_id)
        if idx < order:
            problems.append(f"stage on {st.mesh_id} violates mesh order")
        order = max(order, idx)
        used[st.mesh_id] = used.get(st.mesh_id, 0) + st.device_count
    for mesh in cluster.meshes:
        if used.get(mesh.id, 0) != mesh.device_count:
            problems.append(
                f"mesh {mesh.id}: {used.get(mesh.id, 0)} devices used of "
                f"{mesh.device_count}"
            )

    for st in plan.stages:
        prof = store.lookup(st.layer_start, st.layer_end, st.mesh_id, st.submesh)
        if not prof.feasible:
            problems.append(
                f"stage [{st.layer_start},{st.layer_end}] uses a pruned candidate"
            )
        if prof.t > plan.t_max:
            problems.append(
                f"stage [{st.layer_start},{st.layer_end}]: t {prof.t:.6g} over bound"
            )
        cap = cluster.mesh(st.mesh_id).mem_device
        if prof.mem_params + st.dp_launch_bound * prof.mem_act > cap:
            problems.append(
                f"stage [{st.layer_start},{st.layer_end}]: memory over budget"
            )
    for idx, b in enumerate(plan.boundaries):
        expected = costs.get(
            b.after_layer, plan.stages[idx].mesh_id, plan.stages[idx + 1].mesh_id
        )
        if not math.isclose(b.comm, expected, rel_tol=1e-9, abs_tol=1e-15):
            problems.append(f"boundary {idx + 1}: comm cost mismatch")
        if b.comm > plan.t_max:
            problems.append(f"boundary {idx + 1}: comm over t_max")
    return problems


def plan_to_dict(plan: ParallelPlan) -> dict:
    return {
        "num_microbatches": plan.num_microbatches,
        "t_max": plan.t_max,
        "predicted_latency": plan.predicted_latency,
        "eta_pct": plan.eta_pct,
        "epsilon": plan.epsilon,
        "stages": [
            {
                "layers": [s.layer_start, s.layer_end],
                "mesh": s.mesh_id,
                "submesh": [s.n, s.m],
                "t_fwd": s.t_fwd,
                "t_bwd": s.t_bwd,
                "mem_params": s.mem_params,
                "mem_act": s.mem_act,
                "launch_count": s.launch_count,
                "dp_launch_bound": s.dp_launch_bound,
            }
            for s in plan.stages
        ],
        "boundaries": [
            {"after_layer": b.after_layer, "comm": b.comm, "link": b.link}
            for b in plan.boundaries
        ],
        "search_stats": dict(plan.search_stats),
    }


def plan_from_dict(data: dict) -> ParallelPlan:
    try:
        stages = [
            PlanStage(
                layer_start=int(s["layers"][0]),
                layer_end=int(s["layers"][1]),
                mesh_id=str(s["mesh"]),
                n=int(s["submesh"][0]),
                m=int(s["submesh"][1]),
                t_fwd=float(s["t_fwd"]),
                t_bwd=float(s["t_bwd"]),
                mem_params=float(s.get("mem_params", 0.0)),
                mem_act=float(s.get("mem_act", 0.0)),
                launch_count=int(s.get("launch_count", 1)),
                dp_launch_bound=int(s.get("dp_launch_bound", 1)),
            )
            for s in data["stages"]
        ]
        boundaries = [
            PlanBoundary(
                after_layer=int(b["after_layer"]),
                comm=float(b["comm"]),
                link=str(b.get("link", "")),
            )
            for b in data.get("boundaries", [])
        ]
    except (KeyError, TypeError, IndexError) as exc:
        raise PlannerError(f"malformed plan file: {exc}") from exc
    if len(boundaries) != len(stages) - 1:
        raise PlannerError("plan needs one boundary per adjacent stage pair")
    # imported plans may colocate adjacent stages on one submesh; such
    # boundaries exchange nothing over the network
    boundaries = [
        PlanBoundary(b.after_layer, 0.0, b.link) if b.link == "colocated" else b
        for b in boundaries
    ]
    return ParallelPlan(
        stages=stages,
        boundaries=boundaries,
        t_max=float(data.get("t_max", max(s.t for s in stages))),
        num_microbatches=int(data.get("num_microbatches", 1)),
        predicted_latency=float(data.get("predicted_latency", 0.0)),
        eta_pct=float(data.get("eta_pct", 0.0)),
        epsilon=float(data.get("epsilon", 0.05)),
        search_stats=dict(data.get("search_stats", {})),
    )


def plan_report(plan: ParallelPlan) -> str:
    lines = [
        f"stages: {plan.num_stages}   t_max: {plan.t_max:.6g} s   "
        f"T*: {plan.predicted_latency:.6g} s (B={plan.num_microbatches})   "
        f"eta: {plan.eta_pct:.1f}%",
        "stage  layers      submesh           t/mb        N   K",
    ]
    for i, s in enumerate(plan.stages, start=1):
        lines.append(
            f"{i:>5d}  [{s.layer_start:>3d},{s.layer_end:>3d}]  "
            f"{s.mesh_id}({s.n},{s.m})".ljust(32)
            + f"{s.t:<10.6g}  {s.launch_count:<3d} {s.dp_launch_bound}"
        )
    for i, b in enumerate(plan.boundaries, start=1):
        lines.append(f"  boundary {i}: after layer {b.after_layer}, "
                     f"{b.comm:.6g} s ({b.link})")
    if plan.search_stats:
        st = plan.search_stats
        lines.append(
            "search: "
            + ", ".join(
                f"{k}={st[k]}"
                for k in (
                    "backend",
                    "candidates_total",
                    "pruned_below_ts",
                    "pruned_above_te",
                    "evaluated",
                    "batches",
                    "dp_states",
                )
                if k in st
            )
        )
        if "wall_time_s" in st:
            lines.append(f"wall time: {st['wall_time_s']:.3f} s")
    return "\n".join(lines) + "\n"
