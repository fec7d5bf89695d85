"""Discrete-event replay of a schedule: timing, utilization, memory, traffic.

Tasks on one device execute in list order per stream (compute and comm are
separate streams when the cost model allows overlap, one serial stream
otherwise); across devices only the dependency edges constrain timing, so the
whole replay is one longest-path pass over the combined DAG.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

from .config import CommCostModel, HybridMode, ModelSpec, ParallelConfig, Placement
from .tasks import (
    INTRA_COMM_KINDS,
    SHARDED_VARIANTS,
    Schedule,
    Task,
    TaskKind,
)

_GRAD_KINDS = (TaskKind.F, TaskKind.B, TaskKind.W, TaskKind.R)
_FREE, _ALLOC = 0, 1   # frees sort before allocs at equal timestamps


class SimulationDeadlock(RuntimeError):
    """The dependency graph plus stream order contains a cycle."""

    def __init__(self, frontier: list[str]):
        self.frontier = frontier
        shown = ", ".join(frontier[:8])
        more = "" if len(frontier) <= 8 else f" (+{len(frontier) - 8} more)"
        super().__init__(f"schedule cannot make progress; stuck tasks: {shown}{more}")


@dataclass
class MemoryBreakdown:
    """Per-component peaks, each taken independently over time.

    ``total`` is the peak of the concurrent sum, so it is generally smaller
    than the sum of the component peaks.
    """

    total: float
    weights: float
    activations: float
    gradients: float
    optimizer: float


@dataclass
class SimResult:
    task_times: dict[Task, tuple[float, float]]
    makespan: float
    per_device_busy: list[float]
    per_device_idle: list[float]
    peak_mem: list[float]
    peak_components: list[MemoryBreakdown]
    mem_trace: list[list[tuple[float, float]]]
    comm_bytes_intra: float
    comm_bytes_inter: float

    @property
    def bubble_ratios(self) -> list[float]:
        out = []
        for busy, idle in zip(self.per_device_busy, self.per_device_idle):
            if busy <= 0:
                out.append(math.inf if idle > 0 else 0.0)
            else:
                out.append(idle / busy)
        return out

    @property
    def bubble_ratio(self) -> float:
        return max(self.bubble_ratios)


def _duration(task: Task, costs: CommCostModel) -> float:
    if task.is_compute:
        return task.cost
    if task.bytes <= 0:
        return 0.0
    bw = (costs.intra_node_bandwidth if task.kind in INTRA_COMM_KINDS
          else costs.inter_node_bandwidth)
    return task.bytes / bw + costs.per_collective_latency


def simulate(sched: Schedule, model: ModelSpec, cfg: ParallelConfig,
             placement: Placement, costs: CommCostModel) -> SimResult:
    tasks = [t for lst in sched.per_device for t in lst]
    index = {t: i for i, t in enumerate(tasks)}
    if len(index) != len(tasks):
        raise ValueError("schedule contains duplicate tasks")
    n = len(tasks)
    dur = [_duration(t, costs) for t in tasks]

    adj: list[list[int]] = [[] for _ in range(n)]
    indeg = [0] * n
    seen: set[tuple[int, int]] = set()

    def add_edge(a: int, b: int) -> None:
        if a == b or (a, b) in seen:
            return
        seen.add((a, b))
        adj[a].append(b)
        indeg[b] += 1

    for lst in sched.per_device:
        if costs.overlap_with_compute:
            streams = ([t for t in lst if t.is_compute],
                       [t for t in lst if not t.is_compute])
        else:
            streams = (lst,)
        for stream in streams:
            for a, b in zip(stream, stream[1:]):
                add_edge(index[a], index[b])
    for a, b in sched.edges:
        ia, ib = index.get(a), index.get(b)
        if ia is None or ib is None:
            missing = a if ia is None else b
            raise ValueError(f"dependency references task missing from schedule: {missing!r}")
        add_edge(ia, ib)

    start = [0.0] * n
    ready = deque(i for i in range(n) if indeg[i] == 0)
    processed = 0
    while ready:
        i = ready.popleft()
        processed += 1
        end_i = start[i] + dur[i]
        for j in adj[i]:
            if start[j] < end_i:
                start[j] = end_i
            indeg[j] -= 1
            if indeg[j] == 0:
                ready.append(j)
    if processed != n:
        frontier = [tasks[i].task_id for i in range(n) if indeg[i] > 0]
        raise SimulationDeadlock(frontier)

    task_times = {tasks[i]: (start[i], start[i] + dur[i]) for i in range(n)}
    makespan = max((e for _, e in task_times.values()), default=0.0)

    num_dev = sched.num_devices
    busy = [0.0] * num_dev
    for t in tasks:
        if t.is_compute:
            busy[t.device] += task_times[t][1] - task_times[t][0]
    idle = [makespan - b for b in busy]

    intra = sum(t.bytes for t in tasks if t.is_comm and t.comm_scope == "intra")
    inter = sum(t.bytes for t in tasks if t.is_comm and t.comm_scope == "inter")

    peaks, components, traces = _memory_profile(sched, task_times, model, cfg, placement)
    return SimResult(task_times, makespan, busy, idle, peaks, components, traces,
                     intra, inter)


# ---------------------------------------------------------------------------
# memory accounting


def _memory_profile(sched, task_times, model, cfg, placement):
    num_dev = sched.num_devices
    sharded = sched.variant in SHARDED_VARIANTS
    L, M_w = model.num_layers, model.weight_mem_per_layer
    M_a = model.act_mem(cfg.microbatch_samples)
    if sharded:
        w_base = L * M_w / (cfg.pp_size * cfg.dp_size)
        opt_base = cfg.optimizer_state_multiplier * w_base
        if cfg.hybrid_mode is HybridMode.ZERO1_OUTER:
            opt_base /= cfg.inter_node_dp
    else:
        w_base = L * M_w / cfg.pp_size
        opt_base = cfg.optimizer_state_multiplier * w_base
    g_base = w_base

    peaks, components, traces = [], [], []
    for d in range(num_dev):
        events = []   # (time, order, delta, component): 0 = weights, 1 = activations
        for t0, t1, value in _gathered_spans(sched.per_device[d], task_times, model,
                                             placement, sharded):
            events.append((t0, _ALLOC, value, 0))
            events.append((t1, _FREE, -value, 0))
        for t0, t1, value in _activation_spans(sched.per_device[d], task_times, model,
                                               placement, M_a):
            events.append((t0, _ALLOC, value, 1))
            events.append((t1, _FREE, -value, 1))
        events.sort(key=lambda ev: (ev[0], ev[1]))

        cur_w, cur_a = w_base, 0.0
        static = g_base + opt_base
        peak_w, peak_a = cur_w, cur_a
        peak_total = cur_w + cur_a + static
        trace = [(0.0, peak_total)]
        i = 0
        while i < len(events):
            t = events[i][0]
            while i < len(events) and events[i][0] == t:
                _, _, delta, comp = events[i]
                if comp == 0:
                    cur_w += delta
                else:
                    cur_a += delta
                i += 1
            peak_w = max(peak_w, cur_w)
            peak_a = max(peak_a, cur_a)
            total = cur_w + cur_a + static
            peak_total = max(peak_total, total)
            trace.append((t, total))
        peaks.append(peak_total)
        components.append(MemoryBreakdown(peak_total, peak_w, peak_a, g_base, opt_base))
        traces.append(trace)
    return peaks, components, traces


def _gathered_spans(device_tasks, task_times, model, placement, sharded):
    """Full-stage parameter buffers: live from first forward use of the
    (stage, unit) through the last gradient task that reads them."""
    if not sharded:
        return
    fwd: dict[tuple, list[float]] = {}
    bwd: dict[tuple, list[float]] = {}
    for t in device_tasks:
        if t.kind is TaskKind.F:
            s0, e0 = task_times[t]
            span = fwd.setdefault((t.stage, t.unit), [s0, e0])
            span[0] = min(span[0], s0)
            span[1] = max(span[1], e0)
        elif t.kind in (TaskKind.B, TaskKind.R):
            s0, e0 = task_times[t]
            span = bwd.setdefault((t.stage, t.unit), [s0, e0])
            span[0] = min(span[0], s0)
            span[1] = max(span[1], e0)
    for key in sorted(set(fwd) | set(bwd)):
        stage = key[0]
        value = model.weight_mem_per_layer * placement.layers_in_stage(stage)
        spans = [fwd[key]] if key in fwd else []
        if key in bwd:
            spans.append(bwd[key])
        spans.sort()
        if len(spans) == 2 and spans[1][0] < spans[0][1]:
            spans = [[spans[0][0], max(spans[0][1], spans[1][1])]]
        for t0, t1 in spans:
            if t1 > t0 and value > 0:
                yield t0, t1, value


def _activation_spans(device_tasks, task_times, model, placement, M_a):
    """Per (stage, microbatch) activation slabs.

    A recomputed stage stashes only a boundary slab at forward time and
    materialises the full footprint again when its R task starts; both are
    released once the stage's B (and W, if split) for that microbatch finish.
    """
    f_start: dict[tuple, float] = {}
    r_start: dict[tuple, float] = {}
    free_at: dict[tuple, float] = {}
    for t in device_tasks:
        key = (t.stage, t.microbatch)
        if t.kind is TaskKind.F:
            f_start[key] = task_times[t][0]
        elif t.kind is TaskKind.R:
            r_start[key] = task_times[t][0]
        elif t.kind in (TaskKind.B, TaskKind.W):
            free_at[key] = max(free_at.get(key, 0.0), task_times[t][1])
    for key in sorted(f_start):
        if key not in free_at:
            continue   # forward-only stages never happen; defensive
        t1 = free_at[key]
        full = M_a * placement.layers_in_stage(key[0])
        if key in r_start:
            if t1 > f_start[key] and M_a > 0:
                yield f_start[key], t1, M_a          # stashed boundary slab
            if t1 > r_start[key] and full > 0:
                yield r_start[key], t1, full
        elif t1 > f_start[key] and full > 0:
            yield f_start[key], t1, full


# ---------------------------------------------------------------------------
# summary helpers


def bubble_count(result: SimResult) -> float:
    """Max per-device idle time expressed in whole task slots.

    Only meaningful when every F/B/W/R in the replay took the same time.
    """
    durs = [e - s for t, (s, e) in result.task_times.items() if t.kind in _GRAD_KINDS]
    if not durs:
        raise ValueError("no compute tasks to size a slot from")
    slot, hi = min(durs), max(durs)
    if slot <= 0 or hi - slot > 1e-9:
        raise ValueError(
            f"bubble counting needs uniform nonzero task durations (got {slot}..{hi})")
    return max(idle / slot for idle in result.per_device_idle)


def peak_memory(result: SimResult) -> float:
    return max(result.peak_mem)


def comm_volume(result: SimResult) -> tuple[float, float]:
    """Total (intra_node_bytes, inter_node_bytes) moved per training step."""
    return result.comm_bytes_intra, result.comm_bytes_inter
