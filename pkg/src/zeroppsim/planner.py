"""Exhaustive configuration search under a per-device memory cap.

The planner fixes the cluster shape (P, D, inter-node width) and the batch
split (B micro-batches of b samples) and sweeps the knobs that trade memory
for time: unit size U, stages per device V, recomputation, and the outer
hybrid mode.  Every candidate is generated, validated, and simulated — the
grid is small enough that there is no reason to prune heuristically.
"""

from __future__ import annotations

import csv
import functools
import io
import math
import warnings
from dataclasses import dataclass, replace

from .config import (
    CommCostModel,
    ConfigError,
    HybridMode,
    ModelSpec,
    ParallelConfig,
    RecomputeMode,
    make_placement,
)
from .schedules import generate
from .simulation import simulate
from .tasks import ScheduleVariant
from .validation import validate


def _divisors(n: int) -> tuple[int, ...]:
    return tuple(d for d in range(1, n + 1) if n % d == 0)


@dataclass(frozen=True)
class SearchSpace:
    """Grid of candidate configurations derived from a base layout.

    ``base`` fixes everything the search does not touch.  Candidate lists
    default to every divisor of B (unit sizes) and of L/P (stage counts);
    pass explicit tuples to narrow the grid.  ``memory_cap`` is the largest
    acceptable per-device peak, in the same unit as the model's memory fields.
    """

    model: ModelSpec
    base: ParallelConfig
    costs: CommCostModel
    memory_cap: float = math.inf
    unit_sizes: tuple[int, ...] | None = None
    stage_counts: tuple[int, ...] | None = None
    recompute_modes: tuple[RecomputeMode, ...] = (RecomputeMode.NONE, RecomputeMode.FULL)
    hybrid_modes: tuple[HybridMode, ...] = (HybridMode.DP_OUTER, HybridMode.ZERO1_OUTER)

    def __post_init__(self):
        if self.memory_cap <= 0:
            raise ConfigError("memory_cap must be > 0")
        if self.model.num_layers % self.base.pp_size != 0:
            raise ConfigError("num_layers must be divisible by pp_size")

    def resolved_unit_sizes(self) -> tuple[int, ...]:
        if self.unit_sizes is not None:
            return self.unit_sizes
        return _divisors(self.base.microbatches)

    def resolved_stage_counts(self) -> tuple[int, ...]:
        if self.stage_counts is not None:
            return self.stage_counts
        return _divisors(self.model.num_layers // self.base.pp_size)

    def grid_size(self) -> int:
        return (len(self.resolved_unit_sizes()) * len(self.resolved_stage_counts())
                * len(self.recompute_modes) * len(self.hybrid_modes))


@dataclass(frozen=True)
class PlanRow:
    """One evaluated candidate: the swept knobs plus its simulated outcome."""

    unit_size: int
    stages_per_device: int
    recompute: RecomputeMode
    hybrid_mode: HybridMode
    time: float
    peak_mem: float
    feasible: bool


@dataclass(frozen=True)
class PlanResult:
    """Ranked search outcome.

    ``rows`` holds every candidate: the feasible block first, ordered by
    (time, peak memory, unit size), then the infeasible block ordered by peak
    memory so the closest miss leads.  ``best`` is None when nothing fits.
    """

    rows: tuple[PlanRow, ...]
    best: PlanRow | None
    memory_cap: float

    @property
    def feasible_rows(self) -> tuple[PlanRow, ...]:
        return tuple(r for r in self.rows if r.feasible)

    @property
    def min_memory_row(self) -> PlanRow:
        return min(self.rows, key=lambda r: (r.peak_mem, r.time, r.unit_size))


@functools.lru_cache(maxsize=4096)
def _evaluate(model: ModelSpec, cfg: ParallelConfig,
              costs: CommCostModel) -> tuple[float, float]:
    # Pure function of frozen inputs; cached so cap sweeps over the same grid
    # pay for generation/validation/simulation once per candidate.
    placement = make_placement(cfg, model)
    with warnings.catch_warnings():
        # recompute=full with V=1 is a legitimate grid point; it just warns.
        warnings.simplefilter("ignore")
        sched = generate(model, cfg, placement, ScheduleVariant.ZEROPP)
    violations = validate(sched, placement, cfg)
    if violations:  # generator bug, not a user error — fail loudly
        raise RuntimeError(f"generated candidate failed validation: {violations[0]}")
    result = simulate(sched, model, cfg, placement, costs)
    return result.makespan, max(result.peak_mem)


def search(space: SearchSpace) -> PlanResult:
    """Evaluate the full grid and rank candidates under the memory cap.

    Ranking is lexicographic: iteration time, then peak memory, then unit
    size (smaller U wins ties because it leaves more memory headroom).
    """
    rows = []
    for u in space.resolved_unit_sizes():
        for v in space.resolved_stage_counts():
            for rec in space.recompute_modes:
                for mode in space.hybrid_modes:
                    cfg = replace(space.base, unit_size=u, stages_per_device=v,
                                  recompute=rec, hybrid_mode=mode)
                    time, peak = _evaluate(space.model, cfg, space.costs)
                    rows.append(PlanRow(u, v, rec, mode, time, peak,
                                        peak <= space.memory_cap))
    feasible = sorted((r for r in rows if r.feasible),
                      key=lambda r: (r.time, r.peak_mem, r.unit_size,
                                     r.stages_per_device, r.recompute.value,
                                     r.hybrid_mode.value))
    infeasible = sorted((r for r in rows if not r.feasible),
                        key=lambda r: (r.peak_mem, r.time, r.unit_size,
                                       r.stages_per_device, r.recompute.value,
                                       r.hybrid_mode.value))
    ranked = tuple(feasible + infeasible)
    return PlanResult(ranked, feasible[0] if feasible else None, space.memory_cap)


def _fmt(x: float) -> str:
    return f"{x:.10g}"


def report(plan: PlanResult) -> tuple[str, str]:
    """Render a plan as (CSV table, one-paragraph summary)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["U", "V", "recompute", "mode", "time", "peak_mem", "feasible"])
    for r in plan.rows:
        writer.writerow([r.unit_size, r.stages_per_device, r.recompute.value,
                         r.hybrid_mode.value, _fmt(r.time), _fmt(r.peak_mem),
                         int(r.feasible)])
    cap = "unbounded" if math.isinf(plan.memory_cap) else _fmt(plan.memory_cap)
    n_ok = len(plan.feasible_rows)
    if plan.best is not None:
        b = plan.best
        summary = (
            f"best candidate: U={b.unit_size} V={b.stages_per_device} "
            f"recompute={b.recompute.value} mode={b.hybrid_mode.value} "
            f"time={_fmt(b.time)} peak_mem={_fmt(b.peak_mem)} "
            f"(cap={cap}; {n_ok}/{len(plan.rows)} candidates feasible)"
        )
    else:
        m = plan.min_memory_row
        summary = (
            f"no feasible candidate under cap={cap}; closest is "
            f"U={m.unit_size} V={m.stages_per_device} "
            f"recompute={m.recompute.value} mode={m.hybrid_mode.value} "
            f"with peak_mem={_fmt(m.peak_mem)} (time={_fmt(m.time)})"
        )
    return buf.getvalue(), summary
