"""Warm-up launch counts and per-stage operation programs for 1F1B pipelines.

Three launch-count rules are supported:

* ``classic``  -- stage i launches S - i + 1 forwards during warm-up.
* ``eager``    -- stage i launches 2(S - i) + 1 forwards, which can hide
  inter-stage communication up to half a stage's compute time.
* ``adaptive`` -- communication-aware: the extra launches of stage i over
  stage i+1 scale with the boundary cost c_i relative to the slowest stage
  time t_max:

      delta_i = 1   if        c_i <= eps * t_max
                2   if eps * t_max < c_i <= t_max / 2
                3   if   t_max / 2 < c_i <= t_max

  Boundaries with c_i > t_max are rejected: no launch count can fully
  overlap them.  At c_i = 0 there is nothing to hide and delta_i = 1,
  matching the classic spacing.

Every rule produces N_i = 1 + sum(delta_i..delta_{S-1}) with N_S = 1; the
program builder turns counts into the warm-up / steady 1F1B / cool-down
operation order each stage executes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

KINDS = ("classic", "eager", "adaptive")


class ScheduleError(ValueError):
    pass


class CommTooLargeError(ScheduleError):
    """Some boundary cost exceeds the slowest stage time."""

    def __init__(self, boundary: int, c: float, t_max: float):
        self.boundary = boundary
        self.c = c
        self.t_max = t_max
        super().__init__(
            f"boundary {boundary}: comm cost {c:.6g}s exceeds max stage time "
            f"{t_max:.6g}s; full overlap impossible"
        )


@dataclass(frozen=True)
class LaunchCounts:
    counts: tuple[int, ...]  # N_i per stage, N_S == 1
    deltas: tuple[int, ...]  # delta_i per boundary, len S-1
    kind: str

    @property
    def num_stages(self) -> int:
        return len(self.counts)

    def __post_init__(self):
        if not self.counts or self.counts[-1] != 1:
            raise ScheduleError("last stage must launch exactly one forward")
        for i, n in enumerate(self.counts[:-1]):
            if n != self.counts[i + 1] + self.deltas[i]:
                raise ScheduleError("counts and deltas are inconsistent")


def _from_deltas(deltas: Sequence[int], kind: str) -> LaunchCounts:
    counts = [1]
    for d in reversed(deltas):
        counts.append(counts[-1] + d)
    counts.reverse()
    return LaunchCounts(tuple(counts), tuple(deltas), kind)


def classic_counts(num_stages: int) -> LaunchCounts:
    if num_stages < 1:
        raise ScheduleError("need at least one stage")
    return _from_deltas([1] * (num_stages - 1), "classic")


def eager_counts(num_stages: int) -> LaunchCounts:
    if num_stages < 1:
        raise ScheduleError("need at least one stage")
    return _from_deltas([2] * (num_stages - 1), "eager")


def adaptive_counts(
    stage_times: Sequence[float],
    comm_times: Sequence[float],
    epsilon: float = 0.05,
    t_max: float | None = None,
) -> LaunchCounts:
    """Launch counts derived from per-boundary communication cost.

    ``stage_times`` are per-microbatch compute times (forward + backward)
    per stage, ``comm_times`` the per-microbatch boundary transfer times
    (length S-1).  ``t_max`` defaults to the slowest stage; a planner may
    pass its own effective rate bound when that is larger.
    """
    if len(stage_times) < 1:
        raise ScheduleError("need at least one stage")
    if len(comm_times) != len(stage_times) - 1:
        raise ScheduleError("expected one comm time per stage boundary")
    if any(t <= 0 for t in stage_times):
        raise ScheduleError("stage times must be positive")
    if any(c < 0 for c in comm_times):
        raise ScheduleError("comm times must be non-negative")
    if t_max is None:
        t_max = max(stage_times)
    elif t_max < max(stage_times):
        raise ScheduleError("t_max override below the slowest stage time")
    deltas = []
    for i, c in enumerate(comm_times):
        if c > t_max:
            raise CommTooLargeError(i + 1, c, t_max)
        if c <= epsilon * t_max:
            deltas.append(1)
        elif c <= t_max / 2:
            deltas.append(2)
        else:
            deltas.append(3)
    return _from_deltas(deltas, "adaptive")


def analytic_delta(comm: float, stage_time: float) -> int:
    """Closed-form extra-launch requirement ceil(1 + 2c / (f+b)).

    Diagnostic companion to the bucketed rule: for c below eps * t_max the
    bucketed rule deliberately stays at delta = 1 and accepts a bubble of at
    most eps * t_max per microbatch in exchange for less activation memory.
    """
    if stage_time <= 0:
        raise ScheduleError("stage time must be positive")
    return math.ceil(1.0 + 2.0 * comm / stage_time)


def delta_diagnostics(
    stage_times: Sequence[float],
    comm_times: Sequence[float],
    epsilon: float = 0.05,
    t_max: float | None = None,
) -> list[dict]:
    """Per-boundary comparison of the bucketed rule against the analytic one."""
    counts = adaptive_counts(stage_times, comm_times, epsilon, t_max=t_max)
    if t_max is None:
        t_max = max(stage_times)
    rows = []
    for i, c in enumerate(comm_times):
        applied = counts.deltas[i]
        analytic = analytic_delta(c, t_max) if c > 0 else 1
        rows.append(
            {
                "boundary": i + 1,
                "comm": c,
                "applied_delta": applied,
                "analytic_delta": analytic,
                "agrees": applied >= analytic,
            }
        )
    return rows


def memory_dominance_report(
    stage_times: Sequence[float],
    comm_times: Sequence[float],
    epsilon: float = 0.05,
) -> list[int]:
    """Stages (1-based) where the adaptive rule launches more than eager.

    Normally adaptive stays at or below eager's memory footprint; pipelines
    whose boundaries are mostly slower than t_max/2 can exceed it and are
    flagged here.
    """
    adaptive = adaptive_counts(stage_times, comm_times, epsilon)
    eager = eager_counts(len(stage_times))
    return [
        i + 1
        for i, (na, ne) in enumerate(zip(adaptive.counts, eager.counts))
        if na > ne
    ]


# ---------------------------------------------------------------------------
# Stage programs
# ---------------------------------------------------------------------------

FWD = "F"
BWD = "B"


@dataclass(frozen=True)
class StageOps:
    """Ordered operations of one stage over a batch: (op kind, microbatch)."""

    ops: tuple[tuple[str, int], ...]
    warmup: int  # first `warmup` ops are warm-up forwards
    steady: int  # next `steady` ops alternate B/F
    # remaining ops are cool-down backwards


@dataclass(frozen=True)
class StageProgram:
    stages: tuple[StageOps, ...]
    counts: LaunchCounts
    num_microbatches: int

    def validate(self) -> None:
        B = self.num_microbatches
        for s, stage in enumerate(self.stages):
            seen_f, seen_b = set(), set()
            last_f = {}
            pos = 0
            for kind, mb in stage.ops:
                if kind == FWD:
                    seen_f.add(mb)
                    last_f[mb] = pos
                else:
                    if mb not in seen_f:
                        raise ScheduleError(
                            f"stage {s + 1}: backward {mb} before its forward"
                        )
                    seen_b.add(mb)
                pos += 1
            if seen_f != set(range(1, B + 1)) or seen_b != seen_f:
                raise ScheduleError(f"stage {s + 1}: microbatch coverage broken")


def build_program(counts: LaunchCounts, num_microbatches: int) -> StageProgram:
    """Three-phase 1F1B order per stage: N_i warm-up forwards, then strict
    (backward, forward) alternation, then the remaining backwards drained in
    microbatch order."""
    B = num_microbatches
    if B < counts.counts[0]:
        raise ScheduleError(
            f"batch of {B} microbatches smaller than warm-up launch count "
            f"{counts.counts[0]} of stage 1"
        )
    stages = []
    for n in counts.counts:
        ops: list[tuple[str, int]] = [(FWD, j) for j in range(1, n + 1)]
        steady_pairs = B - n
        for j in range(1, steady_pairs + 1):
            ops.append((BWD, j))
            ops.append((FWD, n + j))
        for j in range(steady_pairs + 1, B + 1):
            ops.append((BWD, j))
        stages.append(StageOps(tuple(ops), warmup=n, steady=2 * steady_pairs))
    program = StageProgram(tuple(stages), counts, B)
    program.validate()
    return program


def program_to_text(program: StageProgram) -> str:
    lines = []
    for s, stage in enumerate(program.stages, start=1):
        toks = [f"{kind}{mb}" for kind, mb in stage.ops]
        w, t = stage.warmup, stage.warmup + stage.steady
        rendered = " ".join(toks[:w]) + " | " + " ".join(toks[w:t]) + " | " + " ".join(toks[t:])
        lines.append(f"stage {s} (N={program.counts.counts[s - 1]}): {rendered.strip(' |')}")
    return "\n".join(lines) + "\n"
