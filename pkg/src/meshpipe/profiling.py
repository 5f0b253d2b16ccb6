"""Execution estimates for candidate stage-submesh pairs.

Every contiguous layer span is a candidate stage; paired with every legal
submesh it gets a profile: per-microbatch compute time split into forward
and backward, parameter memory, and activation memory per in-flight
microbatch.  Candidates that would OOM (even with a single in-flight
microbatch) or whose compute share is grossly mismatched to the submesh's
capacity share are marked infeasible up front.

Spans that are structurally identical (equal layer-signature sequences,
which repeated modules produce in bulk) share a single canonical profile;
all other occurrences are aliases.  The store therefore performs one
profile computation per distinct (signature, submesh shape, mesh) key,
independent of how often a module repeats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

from .cluster import ClusterSpec, DeviceMesh, Submesh, enumerate_submeshes
from .model_graph import LayerSequence


class ProfilingError(ValueError):
    pass


class NoFeasibleCandidateError(ProfilingError):
    pass


@dataclass(frozen=True)
class CostModel:
    """Analytic stand-in for measured kernels.

    compute: t_f = flops / (devices * peak * efficiency), t_b = beta * t_f.
    Submeshes wider than one device add a collective overhead of
    alpha * (activation volume / link bandwidth), where the link is the
    intra-host fabric for single-host shapes and the inter-host fabric
    otherwise.  Memory: parameters are sharded across the submesh
    (replication = 1 means fully sharded tensor-parallel state); per
    in-flight microbatch activations are approximated as act_factor times
    the summed layer boundary bytes, sharded across devices.
    """

    beta: float = 2.0  # backward / forward compute ratio
    efficiency: float = 0.5  # achieved fraction of peak flops
    alpha: float = 0.0  # collective-overhead factor for multi-device stages
    replication: float = 1.0  # parameter replication factor inside a submesh
    act_factor: float = 2.0  # stored activation bytes per boundary byte

    def __post_init__(self):
        if self.beta <= 0 or self.efficiency <= 0 or self.efficiency > 1:
            raise ProfilingError("invalid cost model constants")
        if self.alpha < 0 or self.replication < 1 or self.act_factor <= 0:
            raise ProfilingError("invalid cost model constants")


@dataclass(frozen=True)
class StageCandidate:
    """Layer span [q, p], 1-based inclusive, with its structural signature."""

    q: int
    p: int
    signature: tuple
    flops: float
    param_bytes: float
    act_bytes: float  # summed boundary bytes over the span


@dataclass(frozen=True)
class StageMeshProfile:
    t_fwd: float
    t_bwd: float
    mem_params: float  # bytes per device
    mem_act: float  # bytes per device per in-flight microbatch
    feasible: bool
    prune_reason: str = ""

    @property
    def t(self) -> float:
        return self.t_fwd + self.t_bwd


def analytic_profile(
    candidate: StageCandidate,
    sub: Submesh,
    mesh: DeviceMesh,
    model: CostModel,
) -> StageMeshProfile:
    """Deterministic profile of one stage candidate on one submesh."""
    devices = sub.device_count
    t_f = candidate.flops / (devices * mesh.peak_flops * model.efficiency)
    if devices > 1 and model.alpha > 0.0:
        link = mesh.intra_host_bw if sub.n == 1 else mesh.inter_host_bw
        t_f += model.alpha * candidate.act_bytes / link
    t_b = model.beta * t_f
    mem_p = candidate.param_bytes * model.replication / devices
    mem_a = model.act_factor * candidate.act_bytes / devices
    return StageMeshProfile(t_f, t_b, mem_p, mem_a, feasible=True)


@dataclass(frozen=True)
class BoundaryCost:
    """Per-boundary transfer seconds, by link class.

    ``intra[mesh_id][i]`` is the cost of shipping the activation produced
    after layer i (1-based, i < L) between two stages of the same mesh;
    ``cross[(a, b)][i]`` the cost over the link between meshes a and b.
    Index 0 and index L are zero padding (no boundary).
    """

    num_layers: int
    intra: dict[str, tuple[float, ...]]
    cross: dict[tuple[str, str], tuple[float, ...]]

    def get(self, i: int, mesh_a: str, mesh_b: str) -> float:
        if i <= 0 or i >= self.num_layers:
            return 0.0
        if mesh_a == mesh_b:
            return self.intra[mesh_a][i]
        return self.cross[tuple(sorted((mesh_a, mesh_b)))][i]


def boundary_costs(layers: LayerSequence, cluster: ClusterSpec) -> BoundaryCost:
    """Transfer time of every layer boundary over every link class."""
    L = len(layers)
    intra = {}
    for mesh in cluster.meshes:
        row = [0.0] * (L + 1)
        for i in range(1, L):
            row[i] = layers.layers[i - 1].boundary_bytes / mesh.inter_host_bw
        intra[mesh.id] = tuple(row)
    cross = {}
    for a_idx, mesh_a in enumerate(cluster.meshes):
        for mesh_b in cluster.meshes[a_idx + 1 :]:
            bw = cluster.cross_bandwidth(mesh_a.id, mesh_b.id)
            row = [0.0] * (L + 1)
            for i in range(1, L):
                row[i] = (
                    layers.layers[i - 1].boundary_bytes / bw + cluster.cross_latency
                )
            cross[tuple(sorted((mesh_a.id, mesh_b.id)))] = tuple(row)
    return BoundaryCost(L, intra, cross)


# ---------------------------------------------------------------------------
# Profile store
# ---------------------------------------------------------------------------


@dataclass
class StoreStats:
    candidates: int = 0
    canonical: int = 0
    canonical_feasible: int = 0
    aliased: int = 0
    pruned_oom: int = 0
    pruned_imbalance: int = 0

    def as_dict(self) -> dict:
        return dict(self.__dict__)


class ProfileStore:
    """Profiles for every (layer span, submesh) pair, deduplicated by
    structural signature.  Immutable once built; lookups by span indices
    resolve through the alias map to the canonical entry."""

    def __init__(
        self,
        layers: LayerSequence,
        cluster: ClusterSpec,
        model: Optional[CostModel] = None,
        imbalance_ratio: float = 3.0,
        dedup: bool = True,
    ):
        if imbalance_ratio < 1.0:
            raise ProfilingError("imbalance_ratio must be >= 1 (or inf to disable)")
        self.layers = layers
        self.cluster = cluster
        self.model = model or CostModel()
        self.imbalance_ratio = imbalance_ratio
        self.dedup = dedup
        self.stats = StoreStats()
        self.options: list[tuple[DeviceMesh, Submesh]] = [
            (mesh, sub) for mesh in cluster.meshes for sub in enumerate_submeshes(mesh)
        ]
        self._sig_ids: dict[tuple, int] = {}
        self._span_sigs: dict[tuple[int, int], tuple[int, ...]] = {}
        self._canonical: dict[tuple, StageMeshProfile] = {}
        self._alias: dict[tuple[int, int, str, tuple[int, int]], tuple] = {}
        self._candidates: dict[tuple[int, int], StageCandidate] = {}
        self._build()

    # -- construction -------------------------------------------------

    def _signature_key(self, q: int, p: int) -> tuple[int, ...]:
        key = self._span_sigs.get((q, p))
        if key is None:
            ids = []
            for layer in self.layers.layers[q - 1 : p]:
                sid = self._sig_ids.setdefault(layer.signature, len(self._sig_ids))
                ids.append(sid)
            key = tuple(ids)
            self._span_sigs[(q, p)] = key
        return key

    def _build(self) -> None:
        L = len(self.layers)
        total_flops = sum(l.flops for l in self.layers.layers)
        total_peak = self.cluster.total_peak_flops
        rho = self.imbalance_ratio

        prefix_f = [0.0] * (L + 1)
        prefix_p = [0.0] * (L + 1)
        prefix_a = [0.0] * (L + 1)
        for i, layer in enumerate(self.layers.layers, start=1):
            prefix_f[i] = prefix_f[i - 1] + layer.flops
            prefix_p[i] = prefix_p[i - 1] + layer.param_bytes
            prefix_a[i] = prefix_a[i - 1] + layer.boundary_bytes

        tightest = None  # (overshoot ratio, description) of the least-violated prune
        for q in range(1, L + 1):
            for p in range(q, L + 1):
                cand = StageCandidate(
                    q,
                    p,
                    signature=self._signature_key(q, p),
                    flops=prefix_f[p] - prefix_f[q - 1],
                    param_bytes=prefix_p[p] - prefix_p[q - 1],
                    act_bytes=prefix_a[p] - prefix_a[q - 1],
                )
                self._candidates[(q, p)] = cand
                flops_share = cand.flops / total_flops if total_flops > 0 else 0.0
                for mesh, sub in self.options:
                    self.stats.candidates += 1
                    key = (
                        (cand.signature, mesh.id, sub.shape)
                        if self.dedup
                        else ((q, p), mesh.id, sub.shape)
                    )
                    self._alias[(q, p, mesh.id, sub.shape)] = key
                    if key in self._canonical:
                        self.stats.aliased += 1
                        prof = self._canonical[key]
                        self._account_prune(prof)
                        continue
                    prof = analytic_profile(cand, sub, mesh, self.model)
                    cap_share = sub.device_count * mesh.peak_flops / total_peak
                    mem_need = prof.mem_params + prof.mem_act
                    if mem_need > mesh.mem_device:
                        ratio = mem_need / mesh.mem_device
                        prof = replace(prof, feasible=False, prune_reason="oom")
                        if tightest is None or ratio < tightest[0]:
                            tightest = (
                                ratio,
                                f"span [{q},{p}] on {mesh.id}{sub.shape}: needs "
                                f"{mem_need:.3e} B vs {mesh.mem_device:.3e} B per device",
                            )
                    elif math.isfinite(rho) and flops_share > 0 and (
                        flops_share > rho * cap_share
                        or cap_share > rho * flops_share
                    ):
                        ratio = max(flops_share / cap_share, cap_share / flops_share) / rho
                        prof = replace(prof, feasible=False, prune_reason="imbalance")
                        if tightest is None or ratio < tightest[0]:
                            tightest = (
                                ratio,
                                f"span [{q},{p}] on {mesh.id}{sub.shape}: flops share "
                                f"{flops_share:.3f} vs capacity share {cap_share:.3f}",
                            )
                    self._canonical[key] = prof
                    self.stats.canonical += 1
                    if prof.feasible:
                        self.stats.canonical_feasible += 1
                    self._account_prune(prof)

        if self.stats.canonical_feasible == 0:
            detail = tightest[1] if tightest else "no candidates at all"
            raise NoFeasibleCandidateError(
                f"no feasible stage-mesh candidate; tightest violation: {detail}"
            )

    def _account_prune(self, prof: StageMeshProfile) -> None:
        if prof.prune_reason == "oom":
            self.stats.pruned_oom += 1
        elif prof.prune_reason == "imbalance":
            self.stats.pruned_imbalance += 1

    # -- queries -------------------------------------------------------

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    def candidate(self, q: int, p: int) -> StageCandidate:
        return self._candidates[(q, p)]

    def lookup(self, q: int, p: int, mesh_id: str, shape: tuple[int, int]) -> StageMeshProfile:
        try:
            key = self._alias[(q, p, mesh_id, shape)]
        except KeyError:
            raise ProfilingError(
                f"no profile for span [{q},{p}] on {mesh_id}{shape}"
            ) from None
        return self._canonical[key]

    def canonical_key(self, q: int, p: int, mesh_id: str, shape: tuple[int, int]) -> tuple:
        return self._alias[(q, p, mesh_id, shape)]

    def feasible_t_values(self) -> list[float]:
        """Sorted, deduplicated per-microbatch compute times of feasible
        canonical entries; the t_max candidate pool."""
        return sorted({p.t for p in self._canonical.values() if p.feasible})

    def signature_text(self, q: int, p: int) -> str:
        return "+".join(
            "/".join(str(part) for part in layer.signature)
            for layer in self.layers.layers[q - 1 : p]
        )

    # -- measured overrides ---------------------------------------------

    def apply_overrides(self, overrides: list[dict]) -> int:
        """Replace canonical entries with measured numbers.

        Each override names a canonical entry by (signature, mesh, submesh)
        and supplies new timing and/or memory fields.  Aliased candidates see
        the change automatically.  Returns the number of entries updated.
        """
        by_text: dict[tuple[str, str, tuple[int, int]], tuple] = {}
        for (q, p, mesh_id, shape), key in self._alias.items():
            by_text.setdefault((self.signature_text(q, p), mesh_id, shape), key)
        updated = 0
        for entry in overrides:
            try:
                sig = str(entry["signature"])
                mesh_id = str(entry["mesh"])
                shape = tuple(int(x) for x in entry["submesh"])
            except (KeyError, TypeError) as exc:
                raise ProfilingError(f"malformed override entry {entry!r}") from exc
            if mesh_id not in {m.id for m in self.cluster.meshes}:
                raise ProfilingError(f"override references unknown mesh {mesh_id!r}")
            key = by_text.get((sig, mesh_id, shape))
            if key is None:
                raise ProfilingError(
                    f"override references unknown candidate {sig!r} on {mesh_id}{shape}"
                )
            prof = self._canonical[key]
            t_fwd = float(entry.get("t_fwd", prof.t_fwd))
            t_bwd = float(entry.get("t_bwd", prof.t_bwd))
            if t_fwd <= 0 or t_bwd <= 0:
                raise ProfilingError(
                    f"override for {sig!r}: compute times must be positive"
                )
            mem_p = float(entry.get("mem_params", prof.mem_params))
            mem_a = float(entry.get("mem_act", prof.mem_act))
            if mem_p < 0 or mem_a < 0:
                raise ProfilingError(f"override for {sig!r}: memory must be >= 0")
            self._canonical[key] = replace(
                prof, t_fwd=t_fwd, t_bwd=t_bwd, mem_params=mem_p, mem_act=mem_a
            )
            updated += 1
        return updated


def build_store(
    layers: LayerSequence,
    cluster: ClusterSpec,
    model: Optional[CostModel] = None,
    imbalance_ratio: float = 3.0,
    dedup: bool = True,
) -> ProfileStore:
    return ProfileStore(layers, cluster, model, imbalance_ratio, dedup)


def import_profiles(data: dict) -> list[dict]:
    """Parse an override file (already loaded structured text) into entries
    consumable by ProfileStore.apply_overrides."""
    entries = data.get("overrides", [])
    if not isinstance(entries, list):
        raise ProfilingError("override file: 'overrides' must be a list")
    return entries


def store_dump(store: ProfileStore) -> str:
    s = store.stats
    lines = [
        f"candidates          {s.candidates}",
        f"canonical           {s.canonical}",
        f"canonical feasible  {s.canonical_feasible}",
        f"aliased             {s.aliased}",
        f"pruned (oom)        {s.pruned_oom}",
        f"pruned (imbalance)  {s.pruned_imbalance}",
    ]
    return "\n".join(lines) + "\n"
