"""Schedule generators for sharded pipeline training and classic baselines.

The central variant drains each unit of microbatches through three per-device
phases — breadth-first forwards, a forward/backward interleave on the device's
last stage, then paired input/weight-gradient work — so weight-gradient tasks
soak up pipeline idle time.  The remaining variants are comparison baselines
that reuse the same task vocabulary.
"""

from __future__ import annotations

import warnings
from collections import defaultdict, deque

from .config import (
    ConfigError,
    HybridMode,
    ModelSpec,
    ParallelConfig,
    Placement,
    RecomputeMode,
)
from .tasks import Schedule, ScheduleVariant, Task, TaskKind

_EPS = 1e-9


class _TaskFactory:
    """Stamps out tasks with compute costs and collective byte counts filled in."""

    def __init__(self, model: ModelSpec, cfg: ParallelConfig, placement: Placement):
        self.model = model
        self.cfg = cfg
        self.placement = placement
        dp = cfg.dp_size
        self._intra_frac = (dp - 1) / dp
        n = cfg.inter_node_dp
        self._inter_frac = (n - 1) / n
        # each device owns a 1/(P*D) slice of the full parameter set
        self._shard_bytes = model.num_layers * model.weight_mem_per_layer / (cfg.pp_size * dp)

    def _dev(self, s: int) -> int:
        return self.placement.stage_to_device[s]

    def _layers(self, s: int) -> int:
        return self.placement.layers_in_stage(s)

    def _stage_bytes(self, s: int) -> float:
        return self.model.weight_mem_per_layer * self._layers(s)

    def f(self, s: int, m: int, u: int | None) -> Task:
        return Task(TaskKind.F, self._dev(s), s, m, u,
                    cost=self.model.t_forward * self._layers(s))

    def b(self, s: int, m: int, u: int | None) -> Task:
        return Task(TaskKind.B, self._dev(s), s, m, u,
                    cost=self.model.t_input_grad * self._layers(s))

    def b_fused(self, s: int, m: int, u: int | None) -> Task:
        # baselines do not split the backward: W rides along with B
        cost = (self.model.t_input_grad + self.model.t_weight_grad) * self._layers(s)
        return Task(TaskKind.B, self._dev(s), s, m, u, cost=cost)

    def w(self, s: int, m: int, u: int | None) -> Task:
        return Task(TaskKind.W, self._dev(s), s, m, u,
                    cost=self.model.t_weight_grad * self._layers(s))

    def r(self, s: int, m: int, u: int | None) -> Task:
        return Task(TaskKind.R, self._dev(s), s, m, u,
                    cost=self.model.t_forward * self._layers(s))

    def ag_param(self, s: int, u: int, phase: str) -> Task:
        return Task(TaskKind.AG_PARAM, self._dev(s), s, None, u, phase,
                    bytes=self._intra_frac * self._stage_bytes(s))

    def rs_grad(self, s: int, u: int) -> Task:
        return Task(TaskKind.RS_GRAD, self._dev(s), s, None, u,
                    bytes=self._intra_frac * self._stage_bytes(s))

    def ar_grad(self, d: int) -> Task:
        return Task(TaskKind.AR_GRAD, d, bytes=2.0 * self._inter_frac * self._shard_bytes)

    def rs_inter(self, d: int) -> Task:
        return Task(TaskKind.RS_GRAD_INTER, d, bytes=self._inter_frac * self._shard_bytes)

    def ag_inter(self, d: int) -> Task:
        return Task(TaskKind.AG_PARAM_INTER, d, bytes=self._inter_frac * self._shard_bytes)

    def opt(self, d: int) -> Task:
        layers = sum(self._layers(s) for s in self.placement.device_stages(d))
        return Task(TaskKind.OPT, d, cost=self.model.t_optstep * layers)


# ---------------------------------------------------------------------------
# dependency edges


def build_dependency_edges(placement: Placement, cfg: ParallelConfig) -> set[tuple[Task, Task]]:
    """(pred, succ) pairs for the split-backward sharded variant.

    Honours ``cfg.recompute``: with full recompute every stage except a
    device's last one re-runs its forward before B/W may start.
    """
    P, V, U = cfg.pp_size, cfg.stages_per_device, cfg.unit_size
    S, num_units = cfg.num_stages, cfg.num_units
    dev = placement.stage_to_device

    def recomputed(s: int) -> bool:
        return cfg.recompute is RecomputeMode.FULL and V > 1 and (s // P) < V - 1

    def tk(kind, s, m):
        return Task(kind, dev[s], s, m, m // U)

    edges: set[tuple[Task, Task]] = set()
    for m in range(cfg.microbatches):
        for s in range(1, S):
            edges.add((tk(TaskKind.F, s - 1, m), tk(TaskKind.F, s, m)))
        for s in range(S):
            if s == S - 1:
                grad_src = tk(TaskKind.F, s, m)   # loss grad is local to the last stage
            else:
                grad_src = tk(TaskKind.B, s + 1, m)
            edges.add((grad_src, tk(TaskKind.B, s, m)))
            edges.add((grad_src, tk(TaskKind.W, s, m)))
            if recomputed(s):
                edges.add((tk(TaskKind.F, s, m), tk(TaskKind.R, s, m)))
                edges.add((tk(TaskKind.R, s, m), tk(TaskKind.B, s, m)))
                edges.add((tk(TaskKind.R, s, m), tk(TaskKind.W, s, m)))

    for s in range(S):
        for u in range(num_units):
            m0, m1 = u * U, u * U + U - 1
            ag_f = Task(TaskKind.AG_PARAM, dev[s], s, None, u, "fwd")
            ag_b = Task(TaskKind.AG_PARAM, dev[s], s, None, u, "bwd")
            edges.add((ag_f, tk(TaskKind.F, s, m0)))
            bwd_kind = TaskKind.R if recomputed(s) else TaskKind.B
            edges.add((ag_b, tk(bwd_kind, s, m0)))
            edges.add((tk(TaskKind.W, s, m1), Task(TaskKind.RS_GRAD, dev[s], s, None, u)))

    _add_outer_edges(edges, placement, cfg, num_units)
    return edges


def _add_outer_edges(edges, placement, cfg, num_units):
    last_u = num_units - 1
    for d in range(cfg.pp_size):
        opt = Task(TaskKind.OPT, d)
        rs_tasks = [Task(TaskKind.RS_GRAD, d, s, None, last_u)
                    for s in placement.device_stages(d)]
        if cfg.hybrid_mode is HybridMode.ZERO1_OUTER:
            rs_i = Task(TaskKind.RS_GRAD_INTER, d)
            for rs in rs_tasks:
                edges.add((rs, rs_i))
            edges.add((rs_i, opt))
            edges.add((opt, Task(TaskKind.AG_PARAM_INTER, d)))
        elif cfg.inter_node_dp > 1:
            ar = Task(TaskKind.AR_GRAD, d)
            for rs in rs_tasks:
                edges.add((rs, ar))
            edges.add((ar, opt))
        else:
            for rs in rs_tasks:
                edges.add((rs, opt))


def bfpp_edges(placement: Placement, cfg: ParallelConfig) -> set[tuple[Task, Task]]:
    """Edges for the breadth-first variant: fused backward, one unit per step."""
    S, Bm = cfg.num_stages, cfg.microbatches
    dev = placement.stage_to_device

    def tk(kind, s, m):
        return Task(kind, dev[s], s, m, 0)

    edges: set[tuple[Task, Task]] = set()
    for m in range(Bm):
        for s in range(1, S):
            edges.add((tk(TaskKind.F, s - 1, m), tk(TaskKind.F, s, m)))
        for s in range(S):
            src = tk(TaskKind.F, s, m) if s == S - 1 else tk(TaskKind.B, s + 1, m)
            edges.add((src, tk(TaskKind.B, s, m)))
    for s in range(S):
        edges.add((Task(TaskKind.AG_PARAM, dev[s], s, None, 0, "fwd"), tk(TaskKind.F, s, 0)))
        edges.add((Task(TaskKind.AG_PARAM, dev[s], s, None, 0, "bwd"), tk(TaskKind.B, s, 0)))
        # no W tasks: the grad reduce-scatter waits on the stage's last fused B
        edges.add((tk(TaskKind.B, s, Bm - 1), Task(TaskKind.RS_GRAD, dev[s], s, None, 0)))
    _add_outer_edges(edges, placement, cfg, num_units=1)
    return edges


def baseline_edges(placement: Placement, cfg: ParallelConfig) -> set[tuple[Task, Task]]:
    """Fused-backward pipeline edges with no sharding collectives."""
    S, Bm = cfg.num_stages, cfg.microbatches
    dev = placement.stage_to_device

    def tk(kind, s, m):
        return Task(kind, dev[s], s, m, None)

    edges: set[tuple[Task, Task]] = set()
    for m in range(Bm):
        for s in range(1, S):
            edges.add((tk(TaskKind.F, s - 1, m), tk(TaskKind.F, s, m)))
        for s in range(S):
            src = tk(TaskKind.F, s, m) if s == S - 1 else tk(TaskKind.B, s + 1, m)
            edges.add((src, tk(TaskKind.B, s, m)))
    for d in range(cfg.pp_size):
        for s in placement.device_stages(d):
            edges.add((tk(TaskKind.B, s, Bm - 1), Task(TaskKind.OPT, d)))
    return edges


def expected_edges(variant: ScheduleVariant, placement: Placement,
                   cfg: ParallelConfig) -> set[tuple[Task, Task]]:
    if variant is ScheduleVariant.ZEROPP:
        return build_dependency_edges(placement, cfg)
    if variant is ScheduleVariant.BFPP:
        return bfpp_edges(placement, cfg)
    return baseline_edges(placement, cfg)


# ---------------------------------------------------------------------------
# main generator: per-unit three-phase interleave


class _Interleave:
    """Last-stage F/B pointers plus oldest-first W fill for one unit."""

    def __init__(self, fs: list[Task], bs: list[Task], ws: list[Task]):
        self.fs, self.bs, self.ws = fs, bs, ws
        self.fi = 0
        self.bi = 0
        self.w_run = [False] * len(ws)

    def done(self) -> bool:
        return self.fi >= len(self.fs) and self.bi >= len(self.bs)

    def leftovers(self) -> list[Task]:
        return [w for w, run in zip(self.ws, self.w_run) if not run]

    def pick(self, t: float, ready) -> Task | None:
        # B as early as possible; F next keeps the forward wave moving;
        # W is pure fill and never blocks anything downstream of this unit.
        if self.bi < len(self.bs) and ready(self.bs[self.bi], t):
            task = self.bs[self.bi]
            self.bi += 1
            return task
        if self.fi < len(self.fs) and ready(self.fs[self.fi], t):
            task = self.fs[self.fi]
            self.fi += 1
            return task
        for i, w in enumerate(self.ws):
            if not self.w_run[i] and ready(w, t):
                self.w_run[i] = True
                return w
        return None


class _Unit:
    def __init__(self, phase_a: deque, inter: _Interleave, pairs: list[Task]):
        self.phase_a = phase_a
        self.inter = inter
        self.pairs = pairs
        self.phase_c: deque | None = None
        self.fill: deque | None = None


class _DeviceQueue:
    def __init__(self, device: int, cfg: ParallelConfig, placement: Placement,
                 fac: _TaskFactory):
        stages = placement.device_stages(device)
        last = stages[-1]
        self.units: list[_Unit] = []
        U = cfg.unit_size
        for u in range(cfg.num_units):
            ms = range(u * U, (u + 1) * U)
            phase_a = deque(fac.f(s, m, u) for s in stages[:-1] for m in ms)
            inter = _Interleave(
                fs=[fac.f(last, m, u) for m in ms],
                bs=[fac.b(last, m, u) for m in ms],
                ws=[fac.w(last, m, u) for m in ms],
            )
            pairs: list[Task] = []
            for s in reversed(stages[:-1]):
                for m in ms:
                    pairs.append(fac.b(s, m, u))
                    pairs.append(fac.w(s, m, u))
            self.units.append(_Unit(phase_a, inter, pairs))
        self.ui = 0

    def _skip_finished(self) -> None:
        while self.ui < len(self.units):
            unit = self.units[self.ui]
            if unit.phase_a or not unit.inter.done():
                return
            if unit.phase_c is None:
                unit.phase_c = deque(unit.pairs)
                # last-stage W's the interleave never got to; their inputs all
                # arrived during that phase, so they are pure fill from here on
                unit.fill = deque(unit.inter.leftovers())
            if unit.phase_c or unit.fill:
                return
            self.ui += 1

    def exhausted(self) -> bool:
        self._skip_finished()
        return self.ui >= len(self.units)

    def pick(self, t: float, ready) -> Task | None:
        self._skip_finished()
        if self.ui >= len(self.units):
            return None
        unit = self.units[self.ui]
        if unit.phase_a:
            head = unit.phase_a[0]
            if ready(head, t):
                unit.phase_a.popleft()
                return head
            return None
        if not unit.inter.done():
            return unit.inter.pick(t, ready)
        if unit.phase_c:
            head = unit.phase_c[0]
            if ready(head, t):
                unit.phase_c.popleft()
                return head
        if unit.fill:
            return unit.fill.popleft()
        return None


def _compute_preds(edges: set[tuple[Task, Task]]) -> dict[Task, list[Task]]:
    preds: dict[Task, list[Task]] = defaultdict(list)
    wanted = (TaskKind.F, TaskKind.B, TaskKind.W)
    for pred, succ in edges:
        if pred.kind in wanted and succ.kind in wanted:
            preds[succ].append(pred)
    return dict(preds)


def _zeropp_compute_orders(model: ModelSpec, cfg: ParallelConfig,
                           placement: Placement,
                           edges: set[tuple[Task, Task]]) -> list[list[Task]]:
    """Event-driven construction of the per-device compute order."""
    fac = _TaskFactory(model, cfg, placement)
    P = cfg.pp_size
    queues = [_DeviceQueue(d, cfg, placement, fac) for d in range(P)]
    preds = _compute_preds(edges)
    done_end: dict[Task, float] = {}
    busy = [0.0] * P
    orders: list[list[Task]] = [[] for _ in range(P)]

    def ready(task: Task, t: float) -> bool:
        for p in preds.get(task, ()):
            end = done_end.get(p)
            if end is None or end > t + _EPS:
                return False
        return True

    while True:
        cands = [d for d in range(P) if not queues[d].exhausted()]
        if not cands:
            break
        t = min(busy[d] for d in cands)
        free = [d for d in cands if busy[d] <= t + _EPS]
        progressed = False
        for d in free:
            task = queues[d].pick(t, ready)
            if task is None:
                continue
            orders[d].append(task)
            done_end[task] = t + task.cost
            busy[d] = t + task.cost
            progressed = True
        if not progressed:
            later = [busy[d] for d in range(P) if busy[d] > t + _EPS]
            if not later:
                raise RuntimeError("schedule generation deadlocked")  # pragma: no cover
            nxt = min(later)
            for d in free:
                busy[d] = nxt
    return orders


def _splice_comm(orders: list[list[Task]], cfg: ParallelConfig,
                 fac: _TaskFactory) -> list[list[Task]]:
    """Insert per-(stage, unit) collectives around their anchor compute tasks.

    Param all-gathers land immediately before the first forward / first
    backward-side task of the unit; the grad reduce-scatter lands right after
    the task that completes the stage's unit gradient (last W, or last fused B).
    """
    spliced = []
    for lst in orders:
        first_f: dict[tuple, int] = {}
        first_bwd: dict[tuple, int] = {}
        last_w: dict[tuple, int] = {}
        last_b: dict[tuple, int] = {}
        for i, task in enumerate(lst):
            key = (task.stage, task.unit)
            if task.kind is TaskKind.F:
                first_f.setdefault(key, i)
            elif task.kind is TaskKind.B:
                first_bwd.setdefault(key, i)
                last_b[key] = i
            elif task.kind is TaskKind.W:
                last_w[key] = i
        before = defaultdict(list)
        after = defaultdict(list)
        for (s, u), i in first_f.items():
            before[i].append(fac.ag_param(s, u, "fwd"))
        for (s, u), i in first_bwd.items():
            before[i].append(fac.ag_param(s, u, "bwd"))
        for key in first_bwd:
            s, u = key
            anchor = last_w.get(key, last_b[key])
            after[anchor].append(fac.rs_grad(s, u))
        out: list[Task] = []
        for i, task in enumerate(lst):
            out.extend(before[i])
            out.append(task)
            out.extend(after[i])
        spliced.append(out)
    return spliced


def _outer_tail(d: int, cfg: ParallelConfig, fac: _TaskFactory) -> list[Task]:
    if cfg.hybrid_mode is HybridMode.ZERO1_OUTER:
        return [fac.rs_inter(d), fac.opt(d), fac.ag_inter(d)]
    head = [fac.ar_grad(d)] if cfg.inter_node_dp > 1 else []
    return head + [fac.opt(d)]


def gen_zeropp(model: ModelSpec, cfg: ParallelConfig, placement: Placement) -> Schedule:
    """Three-phase per-unit schedule with split backward and ZeRO-3 collectives.

    Always generates the recompute-free order; :func:`apply_recompute` layers
    recompute on top so the interleave decisions stay cost-independent.
    """
    base = ParallelConfig(
        pp_size=cfg.pp_size, dp_size=cfg.dp_size, microbatches=cfg.microbatches,
        unit_size=cfg.unit_size, stages_per_device=cfg.stages_per_device,
        microbatch_samples=cfg.microbatch_samples, inter_node_dp=cfg.inter_node_dp,
        hybrid_mode=cfg.hybrid_mode, recompute=RecomputeMode.NONE,
        optimizer_state_multiplier=cfg.optimizer_state_multiplier,
    )
    fac = _TaskFactory(model, base, placement)
    edges = build_dependency_edges(placement, base)
    orders = _zeropp_compute_orders(model, base, placement, edges)
    per_device = _splice_comm(orders, base, fac)
    for d in range(base.pp_size):
        per_device[d].extend(_outer_tail(d, base, fac))
    return Schedule(ScheduleVariant.ZEROPP, per_device, edges)


def apply_recompute(sched: Schedule, model: ModelSpec, cfg: ParallelConfig,
                    placement: Placement) -> Schedule:
    """Insert recompute tasks before each B of every stage except device-last ones."""
    if sched.variant is not ScheduleVariant.ZEROPP:
        raise ConfigError(f"recompute only applies to the {ScheduleVariant.ZEROPP.value} variant")
    V, P = cfg.stages_per_device, cfg.pp_size
    if V == 1:
        warnings.warn("recompute=full has no effect with stages_per_device == 1",
                      stacklevel=2)
        return sched
    fac = _TaskFactory(model, cfg, placement)
    per_device = []
    for lst in sched.per_device:
        out = []
        for task in lst:
            if task.kind is TaskKind.B and task.stage // P < V - 1:
                out.append(fac.r(task.stage, task.microbatch, task.unit))
            out.append(task)
        per_device.append(out)
    return Schedule(ScheduleVariant.ZEROPP, per_device,
                    build_dependency_edges(placement, cfg))


# ---------------------------------------------------------------------------
# breadth-first sharded baseline


def gen_bfpp(model: ModelSpec, cfg: ParallelConfig, placement: Placement) -> Schedule:
    """Breadth-first variant: whole batch as a single unit, fused backward."""
    fac = _TaskFactory(model, cfg, placement)
    Bm = cfg.microbatches
    per_device = []
    for d in range(cfg.pp_size):
        stages = placement.device_stages(d)
        lst = [fac.f(s, m, 0) for s in stages for m in range(Bm)]
        lst += [fac.b_fused(s, m, 0) for s in reversed(stages) for m in range(Bm)]
        per_device.append(lst)
    per_device = _splice_comm(per_device, cfg, fac)
    for d in range(cfg.pp_size):
        per_device[d].extend(_outer_tail(d, cfg, fac))
    return Schedule(ScheduleVariant.BFPP, per_device, bfpp_edges(placement, cfg))


# ---------------------------------------------------------------------------
# classic pipeline baselines (no sharding collectives)


def gen_baseline(model: ModelSpec, cfg: ParallelConfig, placement: Placement,
                 variant: ScheduleVariant) -> Schedule:
    P, V, Bm = cfg.pp_size, cfg.stages_per_device, cfg.microbatches
    fac = _TaskFactory(model, cfg, placement)
    if variant in (ScheduleVariant.GPIPE, ScheduleVariant.ONE_F_ONE_B) and V != 1:
        raise ConfigError(f"{variant.value} requires stages_per_device == 1")
    if variant is ScheduleVariant.INTERLEAVED_1F1B and Bm % P != 0:
        raise ConfigError("interleaved_1f1b requires microbatches % pp_size == 0")

    per_device = []
    for d in range(P):
        if variant is ScheduleVariant.GPIPE:
            lst = [fac.f(d, m, None) for m in range(Bm)]
            lst += [fac.b_fused(d, m, None) for m in range(Bm)]
        elif variant is ScheduleVariant.ONE_F_ONE_B:
            warm = min(P - 1 - d, Bm)
            lst = [fac.f(d, m, None) for m in range(warm)]
            for m in range(Bm - warm):
                lst.append(fac.f(d, warm + m, None))
                lst.append(fac.b_fused(d, m, None))
            lst += [fac.b_fused(d, m, None) for m in range(Bm - warm, Bm)]
        else:
            lst = _interleaved_order(d, cfg, fac)
        lst.append(fac.opt(d))
        per_device.append(lst)
    return Schedule(variant, per_device, baseline_edges(placement, cfg))


def _interleaved_order(d: int, cfg: ParallelConfig, fac: _TaskFactory) -> list[Task]:
    # canonical interleaved 1F1B: microbatch groups of size P walk the V chunks
    P, V, Bm = cfg.pp_size, cfg.stages_per_device, cfg.microbatches
    total = Bm * V
    group = P * V

    def fwd_task(k: int) -> Task:
        chunk, mb = (k % group) // P, (k // group) * P + k % P
        return fac.f(d + chunk * P, mb, None)

    def bwd_task(k: int) -> Task:
        chunk, mb = V - 1 - (k % group) // P, (k // group) * P + k % P
        return fac.b_fused(d + chunk * P, mb, None)

    warm = min((P - d - 1) * 2 + (V - 1) * P, total)
    lst = [fwd_task(k) for k in range(warm)]
    for i in range(total - warm):
        lst.append(fwd_task(warm + i))
        lst.append(bwd_task(i))
    lst += [bwd_task(k) for k in range(total - warm, total)]
    return lst


# ---------------------------------------------------------------------------


def generate(model: ModelSpec, cfg: ParallelConfig, placement: Placement,
             variant: ScheduleVariant = ScheduleVariant.ZEROPP) -> Schedule:
    """Build the per-device task order and dependency set for one variant."""
    if cfg.recompute is RecomputeMode.FULL and variant is not ScheduleVariant.ZEROPP:
        raise ConfigError(f"recompute=full is not supported for {variant.value}")
    if variant is ScheduleVariant.ZEROPP:
        sched = gen_zeropp(model, cfg, placement)
        if cfg.recompute is RecomputeMode.FULL:
            sched = apply_recompute(sched, model, cfg, placement)
        return sched
    if variant is ScheduleVariant.BFPP:
        return gen_bfpp(model, cfg, placement)
    return gen_baseline(model, cfg, placement, variant)
