"""Structural validation of schedules against the dependency contract.

The validator re-derives the expected task set and dependency edges from the
config rather than trusting whatever the schedule object carries, so a
corrupted schedule cannot vouch for itself.
"""

from __future__ import annotations

import random
import warnings
from collections import Counter
from dataclasses import dataclass
from enum import Enum

from .config import (
    HybridMode,
    ModelSpec,
    ParallelConfig,
    Placement,
    RecomputeMode,
    make_placement,
)
from .schedules import expected_edges, generate
from .tasks import Schedule, ScheduleVariant, Task, TaskKind


class ViolationKind(str, Enum):
    DEP_ORDER = "dep_order"
    MISSING_TASK = "missing_task"
    DUPLICATE_TASK = "duplicate_task"
    UNIT_LEAK = "unit_leak"
    RECOMPUTE_COUNT = "recompute_count"
    DEVICE_MISMATCH = "device_mismatch"


@dataclass(frozen=True)
class Violation:
    kind: ViolationKind
    tasks: tuple[Task, ...]
    message: str

    def __str__(self) -> str:
        return f"{self.kind.value}: {self.message}"


def _expected_outer(cfg: ParallelConfig) -> set[Task]:
    out: set[Task] = set()
    for d in range(cfg.pp_size):
        out.add(Task(TaskKind.OPT, d))
        if cfg.hybrid_mode is HybridMode.ZERO1_OUTER:
            out.add(Task(TaskKind.RS_GRAD_INTER, d))
            out.add(Task(TaskKind.AG_PARAM_INTER, d))
        elif cfg.inter_node_dp > 1:
            out.add(Task(TaskKind.AR_GRAD, d))
    return out


def _expected_tasks(variant: ScheduleVariant, placement: Placement,
                    cfg: ParallelConfig) -> set[Task]:
    S, U, Bm = cfg.num_stages, cfg.unit_size, cfg.microbatches
    P, V = cfg.pp_size, cfg.stages_per_device
    dev = placement.stage_to_device
    out: set[Task] = set()
    if variant is ScheduleVariant.ZEROPP:
        for s in range(S):
            rec = cfg.recompute is RecomputeMode.FULL and V > 1 and s // P < V - 1
            for m in range(Bm):
                u = m // U
                out.add(Task(TaskKind.F, dev[s], s, m, u))
                out.add(Task(TaskKind.B, dev[s], s, m, u))
                out.add(Task(TaskKind.W, dev[s], s, m, u))
                if rec:
                    out.add(Task(TaskKind.R, dev[s], s, m, u))
            for u in range(cfg.num_units):
                out.add(Task(TaskKind.AG_PARAM, dev[s], s, None, u, "fwd"))
                out.add(Task(TaskKind.AG_PARAM, dev[s], s, None, u, "bwd"))
                out.add(Task(TaskKind.RS_GRAD, dev[s], s, None, u))
        out |= _expected_outer(cfg)
    elif variant is ScheduleVariant.BFPP:
        for s in range(S):
            for m in range(Bm):
                out.add(Task(TaskKind.F, dev[s], s, m, 0))
                out.add(Task(TaskKind.B, dev[s], s, m, 0))
            out.add(Task(TaskKind.AG_PARAM, dev[s], s, None, 0, "fwd"))
            out.add(Task(TaskKind.AG_PARAM, dev[s], s, None, 0, "bwd"))
            out.add(Task(TaskKind.RS_GRAD, dev[s], s, None, 0))
        out |= _expected_outer(cfg)
    else:
        for s in range(S):
            for m in range(Bm):
                out.add(Task(TaskKind.F, dev[s], s, m, None))
                out.add(Task(TaskKind.B, dev[s], s, m, None))
        for d in range(cfg.pp_size):
            out.add(Task(TaskKind.OPT, d))
    return out


def validate(sched: Schedule, placement: Placement, cfg: ParallelConfig) -> list[Violation]:
    """Return all contract violations; an empty list means the schedule is valid."""
    violations: list[Violation] = []
    counts: Counter[Task] = Counter()
    for d, lst in enumerate(sched.per_device):
        for t in lst:
            counts[t] += 1
            if t.device != d:
                violations.append(Violation(
                    ViolationKind.DEVICE_MISMATCH, (t,),
                    f"{t!r} queued on device {d}"))
    for t, c in counts.items():
        if c > 1:
            violations.append(Violation(
                ViolationKind.DUPLICATE_TASK, (t,), f"{t!r} appears {c} times"))
        if t.stage is not None and t.device != placement.stage_to_device[t.stage]:
            violations.append(Violation(
                ViolationKind.DEVICE_MISMATCH, (t,),
                f"{t!r} not on stage {t.stage}'s device "
                f"{placement.stage_to_device[t.stage]}"))

    present = set(counts)
    expected = _expected_tasks(sched.variant, placement, cfg)
    for t in sorted(expected - present, key=lambda x: x.task_id):
        kind = (ViolationKind.RECOMPUTE_COUNT if t.kind is TaskKind.R
                else ViolationKind.MISSING_TASK)
        violations.append(Violation(kind, (t,), f"expected {t!r} is absent"))
    for t in sorted(present - expected, key=lambda x: x.task_id):
        kind = (ViolationKind.RECOMPUTE_COUNT if t.kind is TaskKind.R
                else ViolationKind.MISSING_TASK)
        violations.append(Violation(kind, (t,), f"unexpected {t!r}"))

    if sched.variant is ScheduleVariant.ZEROPP:
        violations.extend(_check_unit_isolation(sched))
    violations.extend(_check_comm_positions(sched))
    violations.extend(_check_dependency_order(sched, placement, cfg))
    return violations


def _check_unit_isolation(sched: Schedule) -> list[Violation]:
    # per device: every B/W of unit u precedes any compute of unit u+1
    out = []
    for lst in sched.per_device:
        first_cmp: dict[int, int] = {}
        last_bw: dict[int, int] = {}
        for i, t in enumerate(lst):
            if not t.is_compute or t.unit is None:
                continue
            first_cmp.setdefault(t.unit, i)
            if t.kind in (TaskKind.B, TaskKind.W):
                last_bw[t.unit] = i
        for u in sorted(first_cmp):
            tail = last_bw.get(u - 1)
            if tail is not None and first_cmp[u] < tail:
                out.append(Violation(
                    ViolationKind.UNIT_LEAK, (lst[first_cmp[u]], lst[tail]),
                    f"{lst[first_cmp[u]]!r} starts before {lst[tail]!r} retires"))
    return out


def _check_comm_positions(sched: Schedule) -> list[Violation]:
    out = []
    for lst in sched.per_device:
        first_f: dict[tuple, int] = {}
        first_bwd: dict[tuple, int] = {}
        last_w: dict[tuple, int] = {}
        last_b: dict[tuple, int] = {}
        grad_red: list[int] = []
        opt_pos = None
        for i, t in enumerate(lst):
            key = (t.stage, t.unit)
            if t.kind is TaskKind.F:
                first_f.setdefault(key, i)
            elif t.kind is TaskKind.R:
                first_bwd.setdefault(key, i)
            elif t.kind is TaskKind.B:
                first_bwd.setdefault(key, i)
                last_b[key] = i
            elif t.kind is TaskKind.W:
                last_w[key] = i
            elif t.kind in (TaskKind.RS_GRAD, TaskKind.AR_GRAD, TaskKind.RS_GRAD_INTER):
                grad_red.append(i)
            elif t.kind is TaskKind.OPT:
                opt_pos = i
        for i, t in enumerate(lst):
            key = (t.stage, t.unit)
            if t.kind is TaskKind.AG_PARAM:
                anchor = first_f.get(key) if t.phase == "fwd" else first_bwd.get(key)
                if anchor is not None and i > anchor:
                    out.append(Violation(
                        ViolationKind.DEP_ORDER, (t, lst[anchor]),
                        f"{t!r} gathered after first use {lst[anchor]!r}"))
            elif t.kind is TaskKind.RS_GRAD:
                anchor = last_w.get(key, last_b.get(key))
                if anchor is not None and i < anchor:
                    out.append(Violation(
                        ViolationKind.DEP_ORDER, (t, lst[anchor]),
                        f"{t!r} reduces before last gradient task {lst[anchor]!r}"))
            elif t.kind in (TaskKind.AR_GRAD, TaskKind.RS_GRAD_INTER):
                rs_after = [j for j in grad_red if lst[j].kind is TaskKind.RS_GRAD and j > i]
                if rs_after:
                    out.append(Violation(
                        ViolationKind.DEP_ORDER, (t, lst[rs_after[0]]),
                        f"{t!r} precedes {lst[rs_after[0]]!r}"))
            elif t.kind is TaskKind.AG_PARAM_INTER:
                if opt_pos is not None and i < opt_pos:
                    out.append(Violation(
                        ViolationKind.DEP_ORDER, (t, lst[opt_pos]),
                        f"{t!r} precedes the optimizer step"))
        if opt_pos is not None:
            late = [j for j in grad_red if j > opt_pos]
            if late:
                out.append(Violation(
                    ViolationKind.DEP_ORDER, (lst[opt_pos], lst[late[0]]),
                    f"optimizer step precedes {lst[late[0]]!r}"))
    return out


def _check_dependency_order(sched: Schedule, placement: Placement,
                            cfg: ParallelConfig) -> list[Violation]:
    """Cycle check over derived dependency edges plus per-device list order."""
    tasks: list[Task] = []
    index: dict[Task, int] = {}
    for lst in sched.per_device:
        for t in lst:
            if t not in index:   # duplicates already reported
                index[t] = len(tasks)
                tasks.append(t)
    n = len(tasks)
    adj: list[list[int]] = [[] for _ in range(n)]
    indeg = [0] * n
    seen: set[tuple[int, int]] = set()

    def add(a: int, b: int) -> None:
        if a != b and (a, b) not in seen:
            seen.add((a, b))
            adj[a].append(b)
            indeg[b] += 1

    for lst in sched.per_device:
        for x, y in zip(lst, lst[1:]):
            add(index[x], index[y])
    for a, b in expected_edges(sched.variant, placement, cfg):
        ia, ib = index.get(a), index.get(b)
        if ia is not None and ib is not None:
            add(ia, ib)

    ready = [i for i in range(n) if indeg[i] == 0]
    processed = 0
    while ready:
        i = ready.pop()
        processed += 1
        for j in adj[i]:
            indeg[j] -= 1
            if indeg[j] == 0:
                ready.append(j)
    if processed == n:
        return []
    stuck = tuple(tasks[i] for i in range(n) if indeg[i] > 0)
    shown = ", ".join(repr(t) for t in stuck[:6])
    return [Violation(
        ViolationKind.DEP_ORDER, stuck[:6],
        f"dependency cycle through device order; stuck: {shown}"
        + ("" if len(stuck) <= 6 else f" (+{len(stuck) - 6} more)"))]


# ---------------------------------------------------------------------------
# property fuzzing


@dataclass
class FuzzSummary:
    trials: int
    generated_clean: int
    mutations_caught: int
    failures: list[str]

    @property
    def ok(self) -> bool:
        return (not self.failures and self.generated_clean == self.trials
                and self.mutations_caught == self.trials)


def _random_case(rng: random.Random) -> tuple[ModelSpec, ParallelConfig, ScheduleVariant]:
    P = rng.choice((2, 3, 4, 6, 8))
    V = rng.randint(1, 4)
    U = rng.randint(1, 4)
    B = U * rng.randint(1, max(1, 32 // U))
    variant = ScheduleVariant.BFPP if rng.random() < 0.2 else ScheduleVariant.ZEROPP
    rec = (RecomputeMode.FULL
           if variant is ScheduleVariant.ZEROPP and rng.random() < 0.3
           else RecomputeMode.NONE)
    cfg = ParallelConfig(
        pp_size=P, dp_size=rng.choice((1, 2, 8)), microbatches=B, unit_size=U,
        stages_per_device=V, inter_node_dp=rng.choice((1, 2, 4)),
        hybrid_mode=rng.choice(tuple(HybridMode)), recompute=rec,
    )
    model = ModelSpec(num_layers=P * V * rng.choice((1, 2)), hidden_size=64, seq_len=16,
                      weight_mem_per_layer=1.0, act_mem_per_layer_per_microbatch=1.0)
    return model, cfg, variant


def _invert_edge(sched: Schedule, rng: random.Random) -> Schedule:
    """Swap a same-device (pred, succ) pair in the device order."""
    per_index = [{t: i for i, t in enumerate(lst)} for lst in sched.per_device]
    cands = []
    for a, b in sched.edges:
        if a.device != b.device:
            continue
        ia = per_index[a.device].get(a)
        ib = per_index[b.device].get(b)
        if ia is not None and ib is not None and ia < ib:
            cands.append((a.device, ia, ib))
    cands.sort()
    d, ia, ib = cands[rng.randrange(len(cands))]
    per_device = [list(lst) for lst in sched.per_device]
    per_device[d][ia], per_device[d][ib] = per_device[d][ib], per_device[d][ia]
    return Schedule(sched.variant, per_device, set(sched.edges))


def fuzz_check(seed: int, trials: int = 100) -> FuzzSummary:
    """Generate random configs; valid schedules must pass, mutations must not."""
    rng = random.Random(seed)
    clean = caught = 0
    failures: list[str] = []
    for trial in range(trials):
        model, cfg, variant = _random_case(rng)
        placement = make_placement(cfg, model)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            sched = generate(model, cfg, placement, variant)
        found = validate(sched, placement, cfg)
        if found:
            failures.append(f"trial {trial}: clean schedule flagged: {found[0]}")
        else:
            clean += 1
        mutated = _invert_edge(sched, rng)
        if validate(mutated, placement, cfg):
            caught += 1
        else:
            failures.append(f"trial {trial}: inverted edge not rejected")
    return FuzzSummary(trials, clean, caught, failures)
