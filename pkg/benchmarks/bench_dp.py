"""Benchmark: compiled DP kernel vs the numpy fallback.

Runs the full t_max candidate sweep of a fine-grained planning instance
(uniform layer stack on a three-mesh cluster, the hot path of `plan`)
against both kernel implementations and reports per-sweep timings.

    python3 benchmarks/bench_dp.py [--layers 128] [--repeat 3]
"""

import argparse
import math
import time

from meshpipe._core import dp_py

try:
    from meshpipe._core import _dp as dp_ext
except ImportError:
    dp_ext = None

from meshpipe.cluster import ClusterSpec, DeviceMesh
from meshpipe.model_graph import HEAVY, OperatorNode, cluster_layers, detect_modules
from meshpipe.planner import DpTables, candidate_tmax
from meshpipe.profiling import CostModel, boundary_costs, build_store


def build_instance(num_layers):
    ops = [
        OperatorNode(i, HEAVY, 6.25e11, 6.1e8, 2.0 * 512 * 256, "layer")
        for i in range(num_layers)
    ]
    layers = cluster_layers(detect_modules(ops), ops, 1)
    cluster = ClusterSpec(
        [
            DeviceMesh("v100", 1, 2, 125e12, 32e9, 150e9, 2.5e10),
            DeviceMesh("a100_h1", 1, 2, 312e12, 40e9, 300e9, 2.5e10),
            DeviceMesh("a100_h2", 1, 2, 312e12, 40e9, 300e9, 2.5e10),
        ],
        cross_bw={
            ("v100", "a100_h1"): 6.25e8,
            ("v100", "a100_h2"): 6.25e8,
            ("a100_h1", "a100_h2"): 2.5e10,
        },
    )
    store = build_store(layers, cluster, CostModel(), imbalance_ratio=math.inf)
    costs = boundary_costs(layers, cluster)
    return DpTables(store, costs), candidate_tmax(store)


def run_sweep(kernel, tables, pool):
    results = []
    for t_max in pool:
        results.append(
            kernel(
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
        )
    return results


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--layers", type=int, default=128)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()

    tables, pool = build_instance(args.layers)
    print(
        f"instance: L={args.layers}, {len(pool)} t_max candidates, "
        f"{tables.transitions_per_sweep()} transitions per sweep"
    )

    kernels = [("python (numpy)", dp_py.dp_sweep)]
    if dp_ext is not None:
        kernels.append(("cython", dp_ext.dp_sweep))
    else:
        print("compiled kernel not built; benchmarking the fallback only")

    timings = {}
    for name, kernel in kernels:
        best = math.inf
        for _ in range(args.repeat):
            began = time.perf_counter()
            run_sweep(kernel, tables, pool)
            best = min(best, time.perf_counter() - began)
        timings[name] = best
        per = best / len(pool) * 1e3
        print(f"{name:<16s} {best:8.3f} s sweep   {per:8.3f} ms/candidate")

    if len(timings) == 2:
        speedup = timings["python (numpy)"] / timings["cython"]
        print(f"speedup: {speedup:.1f}x")
        # parity spot check on the largest candidate
        import numpy as np

        a = run_sweep(dp_py.dp_sweep, tables, pool[-1:])[0]
        b = run_sweep(dp_ext.dp_sweep, tables, pool[-1:])[0]
        same = all(np.array_equal(x, y) for x, y in zip(a, b))
        print(f"result parity: {'identical' if same else 'MISMATCH'}")


if __name__ == "__main__":
    main()
