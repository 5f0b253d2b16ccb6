import math

import pytest

from meshpipe.cluster import ClusterSpec, DeviceMesh, Submesh
from meshpipe.model_graph import (
    GptConfig,
    HEAVY,
    OperatorNode,
    cluster_layers,
    detect_modules,
    generate_gpt_sequence,
)
from meshpipe.profiling import (
    CostModel,
    NoFeasibleCandidateError,
    ProfilingError,
    StageCandidate,
    analytic_profile,
    boundary_costs,
    build_store,
    import_profiles,
    store_dump,
)


def uniform_layers(n=4, flops=1e12, params=1e9, bytes_=1e6):
    ops = [OperatorNode(i, HEAVY, flops, params, bytes_, "blk") for i in range(n)]
    return cluster_layers(detect_modules(ops), ops, 1), ops


def small_cluster(mem_v=32e9, mem_a=40e9, cross=6.25e8):
    v = DeviceMesh("v", 1, 2, 125e12, mem_v, 150e9, 25e9)
    a = DeviceMesh("a", 2, 2, 312e12, mem_a, 300e9, 25e9)
    return ClusterSpec([v, a], cross_bw=cross)


class TestAnalyticProfile:
    def cand(self, flops=1e12, params=0.0, act=0.0):
        return StageCandidate(1, 1, ("x",), flops, params, act)

    def test_formula_single_device(self):
        mesh = DeviceMesh("m", 1, 2, 1e12, 1e9, 1e9, 1e9)
        prof = analytic_profile(
            self.cand(flops=5e11), Submesh("m", 1, 1), mesh, CostModel(beta=2.0, efficiency=1.0)
        )
        assert prof.t_fwd == 0.5
        assert prof.t == 1.5  # t_b = 2 t_f

    def test_linear_scaling_alpha_zero(self):
        mesh = DeviceMesh("m", 1, 2, 1e12, 1e9, 1e9, 1e9)
        model = CostModel(efficiency=1.0, alpha=0.0)
        t1 = analytic_profile(self.cand(), Submesh("m", 1, 1), mesh, model).t
        t2 = analytic_profile(self.cand(), Submesh("m", 1, 2), mesh, model).t
        assert t2 == t1 / 2

    def test_peak_ratio(self):
        v = DeviceMesh("v", 1, 1, 125e12, 1e9, 1e9, 1e9)
        a = DeviceMesh("a", 1, 1, 312e12, 1e9, 1e9, 1e9)
        model = CostModel()
        tv = analytic_profile(self.cand(), Submesh("v", 1, 1), v, model).t
        ta = analytic_profile(self.cand(), Submesh("a", 1, 1), a, model).t
        assert tv / ta == pytest.approx(312 / 125)  # 2.496

    def test_monotone_in_devices_default_model(self):
        mesh = DeviceMesh("m", 2, 4, 1e12, 1e9, 1e9, 1e9)
        model = CostModel()
        prev = math.inf
        for shape in [(1, 1), (1, 2), (1, 4), (2, 4)]:
            t = analytic_profile(self.cand(act=1e9), Submesh("m", *shape), mesh, model).t_fwd
            assert t <= prev
            prev = t

    def test_alpha_penalizes_cross_host_shapes(self):
        mesh = DeviceMesh("m", 2, 2, 1e12, 1e9, 300e9, 25e9)
        model = CostModel(efficiency=1.0, alpha=1.0)
        single = analytic_profile(self.cand(act=1e9), Submesh("m", 1, 2), mesh, model)
        multi = analytic_profile(self.cand(act=1e9), Submesh("m", 2, 2), mesh, model)
        assert multi.t_fwd > single.t_fwd / 2 + 1e-3  # inter-host collective tax


class TestBuildStore:
    def test_dedup_counts_repeated_modules(self):
        # 4 identical single-op modules: span signature depends only on length
        layers, _ = uniform_layers(4)
        cluster = ClusterSpec([DeviceMesh("m", 1, 2, 1e12, 1e9, 1e9, 1e9)], cross_bw=1e9)
        store = build_store(layers, cluster, imbalance_ratio=math.inf)
        # spans per shape: 10; distinct lengths: 4 -> 4 canonical per shape
        assert store.stats.canonical == 8
        assert store.stats.aliased == 12
        # brute-force signature count agrees
        sigs = {store.candidate(q, p).signature for q in range(1, 5) for p in range(q, 5)}
        assert len(sigs) * 2 == store.stats.canonical

    def test_alias_transparency(self):
        layers, _ = uniform_layers(4)
        cluster = ClusterSpec([DeviceMesh("m", 1, 2, 1e12, 1e9, 1e9, 1e9)], cross_bw=1e9)
        store = build_store(layers, cluster, imbalance_ratio=math.inf)
        a = store.lookup(1, 2, "m", (1, 2))
        b = store.lookup(3, 4, "m", (1, 2))
        assert a is b

    def test_oom_prune(self):
        layers, _ = uniform_layers(2, params=50e9)  # 100 GB model
        cluster = ClusterSpec([DeviceMesh("m", 1, 2, 1e12, 40e9, 1e9, 1e9)], cross_bw=1e9)
        store = build_store(layers, cluster, imbalance_ratio=math.inf)
        # the 2-layer span holds 100 GB: infeasible on (1,1) and (1,2)
        assert not store.lookup(1, 2, "m", (1, 1)).feasible
        assert not store.lookup(1, 2, "m", (1, 2)).feasible
        assert store.lookup(1, 1, "m", (1, 2)).feasible
        assert store.stats.pruned_oom > 0

    def test_imbalance_prune_whole_model_on_one_device(self):
        layers, _ = uniform_layers(8)
        meshes = [DeviceMesh("m", 2, 8, 1e12, 1e15, 1e9, 1e9)]  # 16 devices
        store = build_store(layers, ClusterSpec(meshes, cross_bw=1e9), imbalance_ratio=2.0)
        whole = store.lookup(1, 8, "m", (1, 1))  # 100% flops on 6.25% capacity
        assert not whole.feasible and whole.prune_reason == "imbalance"

    def test_no_feasible_candidate_raises(self):
        layers, _ = uniform_layers(2, params=1e12)
        cluster = ClusterSpec([DeviceMesh("m", 1, 1, 1e12, 1e9, 1e9, 1e9)], cross_bw=1e9)
        with pytest.raises(NoFeasibleCandidateError, match="tightest"):
            build_store(layers, cluster)

    def test_tmax_pool_bounded_by_canonical(self):
        ops = generate_gpt_sequence(GptConfig(3, 256, 128))
        layers = cluster_layers(detect_modules(ops), ops, 2)
        store = build_store(layers, small_cluster(), imbalance_ratio=math.inf)
        pool = store.feasible_t_values()
        assert 0 < len(pool) <= store.stats.canonical_feasible
        assert pool == sorted(set(pool))

    def test_store_dump_text(self):
        layers, _ = uniform_layers(3)
        store = build_store(layers, small_cluster(), imbalance_ratio=math.inf)
        text = store_dump(store)
        assert "canonical" in text and "pruned" in text


class TestBoundaryCosts:
    def test_division(self):
        layers, _ = uniform_layers(2, bytes_=6.25e8)
        cluster = small_cluster(cross=6.25e8)
        costs = boundary_costs(layers, cluster)
        assert costs.get(1, "v", "a") == 1.0

    def test_zero_boundary(self):
        layers, _ = uniform_layers(2, bytes_=0.0)
        costs = boundary_costs(layers, small_cluster())
        assert costs.get(1, "v", "a") == 0.0

    def test_slow_cross_link_dominates(self):
        # 200 Gbps intra vs 5 Gbps cross: intra at least 40x cheaper
        v = DeviceMesh("v", 1, 2, 125e12, 32e9, 150e9, 2.5e10)
        a = DeviceMesh("a", 2, 2, 312e12, 40e9, 300e9, 2.5e10)
        cluster = ClusterSpec([v, a], cross_bw=6.25e8)
        layers, _ = uniform_layers(4, bytes_=1e8)
        costs = boundary_costs(layers, cluster)
        for i in (1, 2, 3):
            assert costs.get(i, "v", "a") >= 40 * costs.get(i, "a", "a")

    def test_out_of_range_is_zero(self):
        layers, _ = uniform_layers(3)
        costs = boundary_costs(layers, small_cluster())
        assert costs.get(0, "v", "v") == 0.0
        assert costs.get(3, "v", "v") == 0.0


class TestOverrides:
    def make_store(self):
        layers, _ = uniform_layers(3)
        return build_store(layers, small_cluster(), imbalance_ratio=math.inf)

    def test_empty_overrides_noop(self):
        store = self.make_store()
        before = store.lookup(1, 2, "v", (1, 2))
        assert store.apply_overrides(import_profiles({})) == 0
        assert store.lookup(1, 2, "v", (1, 2)) is before

    def test_override_updates_aliases(self):
        store = self.make_store()
        sig = store.signature_text(1, 2)
        n = store.apply_overrides(
            [{"signature": sig, "mesh": "v", "submesh": [1, 2], "t_fwd": 0.5, "t_bwd": 1.0}]
        )
        assert n == 1
        assert store.lookup(1, 2, "v", (1, 2)).t == 1.5
        assert store.lookup(2, 3, "v", (1, 2)).t == 1.5  # alias sees the change
        assert store.lookup(1, 2, "a", (1, 2)).t != 1.5  # other mesh untouched

    def test_nonpositive_time_rejected(self):
        store = self.make_store()
        sig = store.signature_text(1, 1)
        with pytest.raises(ProfilingError, match="positive"):
            store.apply_overrides(
                [{"signature": sig, "mesh": "v", "submesh": [1, 1], "t_fwd": -1.0}]
            )

    def test_unknown_mesh_rejected(self):
        store = self.make_store()
        with pytest.raises(ProfilingError, match="unknown mesh"):
            store.apply_overrides(
                [{"signature": "x", "mesh": "nope", "submesh": [1, 1], "t_fwd": 1.0}]
            )
