"""Operator sequences, repeated-module detection, and layer clustering.

A model enters the planner as a topologically ordered operator sequence.
This module finds the repeated structure in that sequence (e.g. identical
transformer blocks), partitions it into repeated / non-repeated modules,
and clusters the operators of each module into contiguous layers balanced
by compute cost.  Occurrences of the same repeated module always receive
the same partition, so structurally equal layers carry equal signatures
and downstream profiling can collapse duplicated work.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

HEAVY = "heavy"
LIGHT = "light"


class ModelGraphError(ValueError):
    pass


class GranularityError(ModelGraphError):
    """Requested more layers than a module has operators."""


@dataclass(frozen=True)
class OperatorNode:
    index: int
    kind: str  # "heavy" (GEMM/conv class) or "light" (elementwise, norm, ...)
    flops: float
    param_bytes: float
    out_activation_bytes: float
    shape_tag: str

    def __post_init__(self):
        if self.kind not in (HEAVY, LIGHT):
            raise ModelGraphError(f"operator {self.index}: unknown kind {self.kind!r}")
        if self.flops < 0 or self.param_bytes < 0 or self.out_activation_bytes < 0:
            raise ModelGraphError(f"operator {self.index}: negative cost field")


OperatorSequence = Sequence[OperatorNode]


@dataclass(frozen=True)
class ModuleSpan:
    start: int  # half-open operator index range [start, end)
    end: int
    kind: str  # "repeated" or "non_repeated"
    group_id: int = -1  # shared by all occurrences of the same pattern
    occurrence: int = 0

    def __len__(self):
        return self.end - self.start


@dataclass(frozen=True)
class Layer:
    op_start: int
    op_end: int
    flops: float
    param_bytes: float
    boundary_bytes: float  # output activation of the last operator in the span
    signature: tuple

    def __len__(self):
        return self.op_end - self.op_start


@dataclass(frozen=True)
class LayerSequence:
    layers: tuple[Layer, ...]
    module_spans: tuple[ModuleSpan, ...]

    def __len__(self):
        return len(self.layers)

    def validate(self, ops: OperatorSequence) -> None:
        cursor = 0
        for layer in self.layers:
            if layer.op_start != cursor:
                raise ModelGraphError("layers do not partition the operator sequence")
            cursor = layer.op_end
        if cursor != len(ops):
            raise ModelGraphError("layers do not cover the operator sequence")
        by_sig = {}
        for layer in self.layers:
            key = (layer.flops, layer.param_bytes, layer.boundary_bytes)
            prev = by_sig.setdefault(layer.signature, key)
            if prev != key:
                raise ModelGraphError(
                    f"layers with signature {layer.signature} disagree on aggregates"
                )


def validate_operator_sequence(ops: OperatorSequence) -> None:
    if not ops:
        raise ModelGraphError("empty operator sequence")
    for pos, op in enumerate(ops):
        if op.index != pos:
            raise ModelGraphError(f"operator indices not contiguous at position {pos}")


# ---------------------------------------------------------------------------
# Repeated-module detection
# ---------------------------------------------------------------------------


def _greedy_positions(positions: list[int], length: int) -> list[int]:
    """Left-to-right non-overlapping selection from sorted match positions."""
    chosen = []
    last_end = -1
    for p in positions:
        if p >= last_end:
            chosen.append(p)
            last_end = p + length
    return chosen


def _best_pattern(ops: OperatorSequence, spans: list[tuple[int, int]], z: int):
    """Most frequent contiguous shape_tag pattern with >= z heavy operators.

    Frequency is the number of greedily chosen non-overlapping occurrences
    summed over the given (non-repeated) spans.  Ties prefer the longer
    pattern, then the earliest first occurrence.  Returns None when no
    pattern occurs at least twice.
    """
    tags = [op.shape_tag for op in ops]
    heavy_prefix = [0] * (len(ops) + 1)
    for i, op in enumerate(ops):
        heavy_prefix[i + 1] = heavy_prefix[i] + (1 if op.kind == HEAVY else 0)

    max_len = max((end - start for start, end in spans), default=0)
    best = None  # (count, length, -first_pos) maximized
    for length in range(1, max_len + 1):
        # two non-overlapping occurrences must fit somewhere
        if sum((end - start) // length for start, end in spans) < 2:
            break
        matches: dict[tuple, list[int]] = {}
        for start, end in spans:
            for pos in range(start, end - length + 1):
                if heavy_prefix[pos + length] - heavy_prefix[pos] < z:
                    continue
                matches.setdefault(tuple(tags[pos : pos + length]), []).append(pos)
        repeated_here = False
        for pattern, positions in matches.items():
            chosen = _greedy_positions(positions, length)
            if len(chosen) < 2:
                continue
            repeated_here = True
            key = (len(chosen), length, -chosen[0])
            if best is None or key > best[0]:
                best = (key, pattern, chosen)
        # for z = 1 a repeating pattern of length L+1 embeds a repeating
        # window of length L that still holds its heavy operator, so the
        # first repeat-free length ends the scan; for z >= 2 that window
        # may drop below z heavies and the cutoff would be unsound
        if not repeated_here and z == 1:
            break
    if best is None:
        return None
    _, pattern, chosen = best
    return pattern, chosen


def detect_modules(ops: OperatorSequence, z: int = 1) -> list[ModuleSpan]:
    """Partition the operator sequence into repeated and non-repeated modules.

    Iteratively extracts the most frequent contiguous pattern containing at
    least ``z`` heavy operators from the remaining non-repeated regions, until
    no pattern occurs twice.  The result is a disjoint, contiguous, covering
    list of spans ordered by position.
    """
    validate_operator_sequence(ops)
    if z < 1:
        raise ModelGraphError("z must be >= 1")

    free: list[tuple[int, int]] = [(0, len(ops))]
    repeated: list[ModuleSpan] = []
    group_id = 0
    while True:
        found = _best_pattern(ops, free, z)
        if found is None:
            break
        pattern, positions = found
        length = len(pattern)
        for occ, pos in enumerate(positions):
            repeated.append(
                ModuleSpan(pos, pos + length, "repeated", group_id, occ)
            )
        group_id += 1
        occupied = sorted((s.start, s.end) for s in repeated)
        free = []
        cursor = 0
        for s, e in occupied:
            if cursor < s:
                free.append((cursor, s))
            cursor = e
        if cursor < len(ops):
            free.append((cursor, len(ops)))

    spans = list(repeated)
    spans.extend(ModuleSpan(s, e, "non_repeated") for s, e in free)
    spans.sort(key=lambda m: m.start)
    return spans


def validate_module_spans(spans: Iterable[ModuleSpan], ops: OperatorSequence) -> None:
    cursor = 0
    by_group: dict[int, list[ModuleSpan]] = {}
    for span in spans:
        if span.start != cursor:
            raise ModelGraphError("module spans do not partition the sequence")
        cursor = span.end
        if span.kind == "repeated":
            by_group.setdefault(span.group_id, []).append(span)
    if cursor != len(ops):
        raise ModelGraphError("module spans do not cover the sequence")
    for gid, members in by_group.items():
        ref = [ops[i].shape_tag for i in range(members[0].start, members[0].end)]
        for span in members[1:]:
            got = [ops[i].shape_tag for i in range(span.start, span.end)]
            if got != ref:
                raise ModelGraphError(f"group {gid} occurrences differ in shape tags")


# ---------------------------------------------------------------------------
# Layer clustering
# ---------------------------------------------------------------------------


def _min_max_partition(values: Sequence[float], parts: int) -> list[int]:
    """Contiguous partition of ``values`` into ``parts`` minimizing the
    maximum part sum.  Returns the list of cut positions (exclusive ends,
    the last one equals len(values)).  Deterministic: among optimal
    partitions the earliest cuts are chosen.
    """
    n = len(values)
    prefix = [0.0] * (n + 1)
    for i, v in enumerate(values):
        prefix[i + 1] = prefix[i] + v

    INF = float("inf")
    # best[p][j]: minimal max part sum splitting values[:j] into p parts
    best = [[INF] * (n + 1) for _ in range(parts + 1)]
    cut = [[-1] * (n + 1) for _ in range(parts + 1)]
    best[0][0] = 0.0
    for p in range(1, parts + 1):
        for j in range(p, n - (parts - p) + 1):
            for i in range(p - 1, j):
                if best[p - 1][i] == INF:
                    continue
                cand = max(best[p - 1][i], prefix[j] - prefix[i])
                if cand < best[p][j]:
                    best[p][j] = cand
                    cut[p][j] = i
    cuts = []
    j = n
    for p in range(parts, 0, -1):
        cuts.append(j)
        j = cut[p][j]
    cuts.reverse()
    return cuts


def cluster_layers(
    spans: Sequence[ModuleSpan],
    ops: OperatorSequence,
    layers_per_module_unit: int = 1,
) -> LayerSequence:
    """Cluster operators into layers, module by module.

    Every module is split into ``layers_per_module_unit`` contiguous layers
    minimizing the maximum per-layer flops.  All occurrences of a repeated
    group share one partition (computed on the first occurrence), which makes
    their layers signature-equal.
    """
    if layers_per_module_unit < 1:
        raise ModelGraphError("layers_per_module_unit must be >= 1")
    validate_module_spans(spans, ops)
    u = layers_per_module_unit
    for span in spans:
        if u > len(span):
            name = (
                f"repeated module g{span.group_id}#{span.occurrence}"
                if span.kind == "repeated"
                else "non-repeated module"
            )
            raise GranularityError(
                f"{name} at ops [{span.start},{span.end}) has {len(span)} operators,"
                f" cannot form {u} layers"
            )

    group_cuts: dict[int, list[int]] = {}
    layers: list[Layer] = []
    solo_ordinal = 0
    for span in spans:
        flops = [ops[i].flops for i in range(span.start, span.end)]
        if span.kind == "repeated":
            cuts = group_cuts.get(span.group_id)
            if cuts is None:
                cuts = _min_max_partition(flops, u)
                group_cuts[span.group_id] = cuts
        else:
            cuts = _min_max_partition(flops, u)
        prev = 0
        for part_idx, cut in enumerate(cuts):
            lo = span.start + prev
            hi = span.start + cut
            if span.kind == "repeated":
                sig = ("rep", span.group_id, part_idx)
            else:
                sig = ("solo", solo_ordinal, part_idx)
            layers.append(
                Layer(
                    op_start=lo,
                    op_end=hi,
                    flops=sum(ops[i].flops for i in range(lo, hi)),
                    param_bytes=sum(ops[i].param_bytes for i in range(lo, hi)),
                    boundary_bytes=ops[hi - 1].out_activation_bytes,
                    signature=sig,
                )
            )
            prev = cut
        if span.kind != "repeated":
            solo_ordinal += 1

    seq = LayerSequence(tuple(layers), tuple(spans))
    seq.validate(ops)
    return seq


# ---------------------------------------------------------------------------
# Synthetic GPT-style workload generator
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GptConfig:
    num_blocks: int
    hidden_dim: int
    seq_len: int
    mb_size: int = 1
    vocab: int = 32000

    def __post_init__(self):
        for field in ("num_blocks", "hidden_dim", "seq_len", "mb_size", "vocab"):
            if getattr(self, field) <= 0:
                raise ModelGraphError(f"gpt config: {field} must be positive")


def generate_gpt_sequence(cfg: GptConfig) -> list[OperatorNode]:
    """Deterministic transformer operator sequence with standard FLOP counts.

    Heavy operators are the attention and MLP GEMMs; norms, softmax and
    residuals are light.  Boundary activations are fp16 hidden states of
    mb_size x seq_len x hidden_dim.
    """
    b, s, h, v = cfg.mb_size, cfg.seq_len, cfg.hidden_dim, cfg.vocab
    act = 2.0 * b * s * h  # fp16 hidden-state bytes
    light_flops = float(b * s * h)

    ops: list[tuple[str, str, float, float]] = []  # (tag, kind, flops, param_bytes)
    ops.append((f"embed[{v}x{h}]", LIGHT, light_flops, 2.0 * v * h))
    ops.append((f"pos_embed[{s}x{h}]", LIGHT, light_flops, 2.0 * s * h))
    ops.append((f"embed_drop[{h}]", LIGHT, light_flops, 0.0))
    block = [
        (f"ln1[{h}]", LIGHT, light_flops, 4.0 * h),
        (f"qkv_proj[{h}x{3 * h}]", HEAVY, 6.0 * b * s * h * h, 2.0 * 3 * h * h),
        (f"attn_score[{s}x{s}]", HEAVY, 2.0 * b * s * s * h, 0.0),
        (f"attn_softmax[{s}]", LIGHT, light_flops, 0.0),
        (f"attn_ctx[{s}x{h}]", HEAVY, 2.0 * b * s * s * h, 0.0),
        (f"out_proj[{h}x{h}]", HEAVY, 2.0 * b * s * h * h, 2.0 * h * h),
        (f"ln2[{h}]", LIGHT, light_flops, 4.0 * h),
        (f"mlp_fc1[{h}x{4 * h}]", HEAVY, 8.0 * b * s * h * h, 2.0 * 4 * h * h),
        (f"gelu[{4 * h}]", LIGHT, light_flops, 0.0),
        (f"mlp_fc2[{4 * h}x{h}]", HEAVY, 8.0 * b * s * h * h, 2.0 * 4 * h * h),
        (f"residual[{h}]", LIGHT, light_flops, 0.0),
    ]
    for _ in range(cfg.num_blocks):
        ops.extend(block)
    ops.append((f"final_ln[{h}]", LIGHT, light_flops, 4.0 * h))
    ops.append((f"lm_head[{h}x{v}]", HEAVY, 2.0 * b * s * h * v, 2.0 * v * h))
    ops.append((f"loss[{v}]", LIGHT, light_flops, 0.0))

    return [
        OperatorNode(i, kind, flops, params, act, tag)
        for i, (tag, kind, flops, params) in enumerate(ops)
    ]


def gpt_param_bytes_estimate(cfg: GptConfig) -> float:
    """Closed-form fp16 parameter bytes: 12 n h^2 for the blocks plus the
    embedding and output projections (layer norms and the positional table
    are ignored; they are sub-percent for realistic dims)."""
    h, v = cfg.hidden_dim, cfg.vocab
    return 2.0 * (12.0 * cfg.num_blocks * h * h + 2.0 * v * h)


def layers_to_text(seq: LayerSequence) -> str:
    lines = ["# layer  ops        flops          params_bytes   boundary_bytes  signature"]
    for idx, layer in enumerate(seq.layers, start=1):
        lines.append(
            f"{idx:>7d}  [{layer.op_start},{layer.op_end})"
            f"  {layer.flops:.6e}  {layer.param_bytes:.6e}"
            f"  {layer.boundary_bytes:.6e}  {layer.signature}"
        )
    return "\n".join(lines) + "\n"
