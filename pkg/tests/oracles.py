"""Independent reference implementations used only to check the package.

Everything here is deliberately written with a different algorithmic
structure than the code under test: an event-driven simulator instead of
longest paths, exhaustive enumeration instead of DP, and a direct census
instead of the iterative pattern extraction.
"""

from __future__ import annotations

import heapq
import itertools
import math

from meshpipe.cluster import enumerate_submeshes
from meshpipe.scheduling import FWD, StageProgram


# ---------------------------------------------------------------------------
# Event-driven pipeline simulator
# ---------------------------------------------------------------------------


def event_sim_makespan(t_fwd, t_bwd, comm, program: StageProgram) -> float:
    """Discrete-event execution of a stage program with serial stage
    executors and two serial FIFO channels per boundary."""
    S = len(t_fwd)
    B = program.num_microbatches

    # node keys: ("F"|"B", mb, stage) and ("CF"|"CB", mb, boundary)
    def dur(node):
        kind, mb, s = node
        if kind == "F":
            return t_fwd[s - 1]
        if kind == "B":
            return t_bwd[s - 1]
        return comm[s - 1]

    queues = {}
    for s in range(1, S + 1):
        queues[("stage", s)] = [
            (kind if kind == FWD else "B", mb, s) for kind, mb in program.stages[s - 1].ops
        ]
    for s in range(1, S):
        queues[("linkf", s)] = [("CF", mb, s) for mb in range(1, B + 1)]
        queues[("linkb", s)] = [("CB", mb, s) for mb in range(1, B + 1)]

    deps = {}
    dependents = {}
    for s in range(1, S):
        for mb in range(1, B + 1):
            pairs = [
                (("F", mb, s), ("CF", mb, s)),
                (("CF", mb, s), ("F", mb, s + 1)),
                (("B", mb, s + 1), ("CB", mb, s)),
                (("CB", mb, s), ("B", mb, s)),
            ]
            for src, dst in pairs:
                deps[dst] = deps.get(dst, 0) + 1
                dependents.setdefault(src, []).append(dst)

    pointer = {res: 0 for res in queues}
    free_at = {res: 0.0 for res in queues}
    ready_at = {}
    done = set()
    scheduled = set()
    finish = {}
    heap = []

    def resource_of(node):
        kind, mb, s = node
        if kind in ("F", "B"):
            return ("stage", s)
        return ("linkf", s) if kind == "CF" else ("linkb", s)

    def try_dispatch(res):
        idx = pointer[res]
        if idx >= len(queues[res]):
            return
        node = queues[res][idx]
        if node in scheduled or deps.get(node, 0) > 0:
            return
        start = max(free_at[res], ready_at.get(node, 0.0))
        end = start + dur(node)
        scheduled.add(node)
        heapq.heappush(heap, (end, repr(node), node, res))

    for res in queues:
        try_dispatch(res)

    makespan = 0.0
    while heap:
        end, _, node, res = heapq.heappop(heap)
        done.add(node)
        makespan = max(makespan, end)
        free_at[res] = end
        pointer[res] += 1
        for dst in dependents.get(node, []):
            deps[dst] -= 1
            ready_at[dst] = max(ready_at.get(dst, 0.0), end)
            try_dispatch(resource_of(dst))
        try_dispatch(res)

    total = 2 * S * B + 2 * (S - 1) * B
    assert len(done) == total, f"event sim deadlock: {len(done)}/{total} ops ran"
    return makespan


# ---------------------------------------------------------------------------
# Sub-sequence census
# ---------------------------------------------------------------------------


def census(tags, kinds, z=1):
    """All contiguous patterns with >= z heavy operators and their greedy
    non-overlapping occurrence counts; returns {pattern: count}."""
    n = len(tags)
    counts = {}
    for length in range(1, n + 1):
        for start in range(0, n - length + 1):
            pattern = tuple(tags[start : start + length])
            if pattern in counts:
                continue
            if sum(1 for k in kinds[start : start + length] if k == "heavy") < z:
                continue
            c = 0
            pos = 0
            while pos + length <= n:
                if tuple(tags[pos : pos + length]) == pattern:
                    c += 1
                    pos += length
                else:
                    pos += 1
            counts[pattern] = c
    return counts


def census_best(tags, kinds, z=1):
    """Winner under most-frequent / longest / earliest-first-occurrence."""
    counts = census(tags, kinds, z)
    best = None
    for pattern, c in counts.items():
        if c < 2:
            continue
        first = next(
            i
            for i in range(len(tags) - len(pattern) + 1)
            if tuple(tags[i : i + len(pattern)]) == pattern
        )
        key = (c, len(pattern), -first)
        if best is None or key > best[0]:
            best = (key, pattern)
    return None if best is None else best[1]


# ---------------------------------------------------------------------------
# Partition and plan enumeration
# ---------------------------------------------------------------------------


def min_max_partition_value(values, parts):
    """Optimal min-max over all contiguous partitions, by enumeration."""
    n = len(values)
    best = math.inf
    for cuts in itertools.combinations(range(1, n), parts - 1):
        bounds = [0, *cuts, n]
        worst = max(
            sum(values[bounds[i] : bounds[i + 1]]) for i in range(parts)
        )
        best = min(best, worst)
    return best


def enumerate_plans(num_layers, cluster):
    """All (spans, submeshes) pairs partitioning the layers and consuming
    every device, meshes in cluster order."""
    shapes = {
        mesh.id: [(sub.n, sub.m) for sub in enumerate_submeshes(mesh)]
        for mesh in cluster.meshes
    }
    mesh_ids = [m.id for m in cluster.meshes]
    budgets0 = [m.device_count for m in cluster.meshes]

    def rec(k, budgets):
        if k == num_layers + 1:
            if all(b == 0 for b in budgets):
                yield []
            return
        r = next((i for i, b in enumerate(budgets) if b > 0), None)
        if r is None:
            return
        mesh_id = mesh_ids[r]
        for n, m in shapes[mesh_id]:
            if n * m > budgets[r]:
                continue
            nb = list(budgets)
            nb[r] -= n * m
            for p in range(k, num_layers + 1):
                for rest in rec(p + 1, nb):
                    yield [(k, p, mesh_id, (n, m))] + rest

    yield from rec(1, budgets0)


def brute_force_optimum(store, costs, cluster, num_microbatches, pool):
    """Exhaustive sweep over t_max candidates and all stage partitions,
    applying the same feasibility rules as the planner.  Returns the best
    total latency (exact float, same fold order as the DP) or None."""
    B = num_microbatches
    best = None
    plans = list(enumerate_plans(store.num_layers, cluster))
    for t_max in pool:
        for plan in plans:
            profs = []
            ok = True
            for q, p, mesh_id, shape in plan:
                prof = store.lookup(q, p, mesh_id, shape)
                if not prof.feasible or prof.t > t_max:
                    ok = False
                    break
                profs.append(prof)
            if not ok:
                continue
            comms = []
            for idx in range(len(plan) - 1):
                c = costs.get(plan[idx][1], plan[idx][2], plan[idx + 1][2])
                if c > t_max:
                    ok = False
                    break
                comms.append(c)
            if not ok:
                continue
            # memory with the warm-up bound, rebuilt from the tail
            k_next = 0.0
            for idx in range(len(plan) - 1, -1, -1):
                c = comms[idx] if idx < len(plan) - 1 else 0.0
                k_next = math.ceil(2.0 * c / t_max) + 1.0 + k_next
                cap = cluster.mesh(plan[idx][2]).mem_device
                if profs[idx].mem_params + k_next * profs[idx].mem_act > cap:
                    ok = False
                    break
            if not ok:
                continue
            # same right fold as the DP: F = t_i + (2 c_i + F_suffix)
            f = profs[-1].t
            for idx in range(len(plan) - 2, -1, -1):
                f = profs[idx].t + (2.0 * comms[idx] + f)
            total = f + (B - 1) * t_max
            if best is None or total < best:
                best = total
    return best
