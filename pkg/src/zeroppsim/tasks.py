"""Task and schedule containers shared by the generators, validator and simulator."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator

from .config import (
    CommCostModel,
    ModelSpec,
    ParallelConfig,
    costs_from_dict,
    costs_to_dict,
    model_from_dict,
    model_to_dict,
    parallel_from_dict,
    parallel_to_dict,
)


class TaskKind(str, Enum):
    F = "F"                # forward
    B = "B"                # input gradient (fused with W for baseline variants)
    W = "W"                # weight gradient
    R = "R"                # recompute (re-runs a stage's forward before its backward)
    AG_PARAM = "AG_PARAM"  # intra-node all-gather of stage params
    RS_GRAD = "RS_GRAD"    # intra-node reduce-scatter of stage grads
    AR_GRAD = "AR_GRAD"    # inter-node all-reduce of the device's grad shard
    AG_PARAM_INTER = "AG_PARAM_INTER"
    RS_GRAD_INTER = "RS_GRAD_INTER"
    OPT = "OPT"            # optimizer step


COMPUTE_KINDS = frozenset({TaskKind.F, TaskKind.B, TaskKind.W, TaskKind.R, TaskKind.OPT})
INTRA_COMM_KINDS = frozenset({TaskKind.AG_PARAM, TaskKind.RS_GRAD})
INTER_COMM_KINDS = frozenset({TaskKind.AR_GRAD, TaskKind.AG_PARAM_INTER, TaskKind.RS_GRAD_INTER})
COMM_KINDS = INTRA_COMM_KINDS | INTER_COMM_KINDS


@dataclass(frozen=True)
class Task:
    """One schedulable unit of work.

    Identity (equality/hash) is the tuple (kind, device, stage, microbatch,
    unit, phase); ``cost`` and ``bytes`` are payload and deliberately excluded
    so edge sets built without cost information unify with generated tasks.
    ``phase`` distinguishes the two per-unit param all-gathers ("fwd"/"bwd").
    """

    kind: TaskKind
    device: int
    stage: int | None = None
    microbatch: int | None = None
    unit: int | None = None
    phase: str | None = None
    cost: float = field(default=0.0, compare=False)
    bytes: float = field(default=0.0, compare=False)

    def __post_init__(self):
        # Tasks live in many large sets/dicts; cache the identity tuple and
        # its hash instead of recomputing them on every membership test.
        key = (self.kind, self.device, self.stage, self.microbatch, self.unit,
               self.phase)
        object.__setattr__(self, "_key", key)
        object.__setattr__(self, "_hash", hash(key))

    def __eq__(self, other):
        if other.__class__ is not Task:
            return NotImplemented
        return self._key == other._key

    def __hash__(self) -> int:
        return self._hash

    @property
    def is_compute(self) -> bool:
        return self.kind in COMPUTE_KINDS

    @property
    def is_comm(self) -> bool:
        return self.kind in COMM_KINDS

    @property
    def comm_scope(self) -> str | None:
        if self.kind in INTRA_COMM_KINDS:
            return "intra"
        if self.kind in INTER_COMM_KINDS:
            return "inter"
        return None

    @property
    def task_id(self) -> str:
        parts = [self.kind.value, f"d{self.device}"]
        if self.stage is not None:
            parts.append(f"s{self.stage}")
        if self.microbatch is not None:
            parts.append(f"m{self.microbatch}")
        if self.unit is not None:
            parts.append(f"u{self.unit}")
        if self.phase is not None:
            parts.append(self.phase)
        return ".".join(parts)

    def __repr__(self) -> str:  # compact, for violation messages and tests
        return self.task_id


class ScheduleVariant(str, Enum):
    ZEROPP = "zeropp"
    BFPP = "bfpp"
    GPIPE = "gpipe"
    ONE_F_ONE_B = "1f1b"
    INTERLEAVED_1F1B = "interleaved_1f1b"


# Variants whose backward is split into B and W tasks and that carry sharding
# collectives; the remaining variants fuse W into B and emit no comm tasks.
SPLIT_BACKWARD_VARIANTS = frozenset({ScheduleVariant.ZEROPP})
SHARDED_VARIANTS = frozenset({ScheduleVariant.ZEROPP, ScheduleVariant.BFPP})


@dataclass
class Schedule:
    """Per-device ordered task lists (compute and comm interleaved in intended
    order) plus the dependency edge set as (predecessor, successor) pairs."""

    variant: ScheduleVariant
    per_device: list[list[Task]]
    edges: set[tuple[Task, Task]]

    @property
    def num_devices(self) -> int:
        return len(self.per_device)

    def tasks(self) -> Iterator[Task]:
        for device_tasks in self.per_device:
            yield from device_tasks

    def compute_tasks(self) -> Iterator[Task]:
        return (t for t in self.tasks() if t.is_compute)

    def task_count(self) -> int:
        return sum(len(lst) for lst in self.per_device)


def _task_to_dict(task: Task) -> dict:
    return {
        "id": task.task_id,
        "kind": task.kind.value,
        "device": task.device,
        "stage": task.stage,
        "microbatch": task.microbatch,
        "unit": task.unit,
        "phase": task.phase,
        "cost": task.cost,
        "bytes": task.bytes,
    }


def _task_from_dict(data: dict) -> Task:
    return Task(
        kind=TaskKind(data["kind"]),
        device=data["device"],
        stage=data["stage"],
        microbatch=data["microbatch"],
        unit=data["unit"],
        phase=data["phase"],
        cost=data["cost"],
        bytes=data["bytes"],
    )


def schedule_to_json(
    sched: Schedule,
    model: ModelSpec,
    cfg: ParallelConfig,
    costs: CommCostModel,
) -> dict:
    """Machine-readable dump: tasks + edges + the config that produced them."""
    return {
        "variant": sched.variant.value,
        "model": model_to_dict(model),
        "parallel": parallel_to_dict(cfg),
        "costs": costs_to_dict(costs),
        "devices": [[_task_to_dict(t) for t in lst] for lst in sched.per_device],
        "edges": [[a.task_id, b.task_id] for a, b in sorted(
            sched.edges, key=lambda e: (e[0].task_id, e[1].task_id)
        )],
    }


def schedule_from_json(data: dict) -> tuple[Schedule, ModelSpec, ParallelConfig, CommCostModel]:
    model = model_from_dict(data["model"])
    cfg = parallel_from_dict(data["parallel"])
    costs = costs_from_dict(data["costs"])
    per_device = [[_task_from_dict(t) for t in lst] for lst in data["devices"]]
    by_id = {t.task_id: t for lst in per_device for t in lst}
    edges = set()
    for a_id, b_id in data["edges"]:
        try:
            edges.add((by_id[a_id], by_id[b_id]))
        except KeyError as exc:
            raise ValueError(f"edge references unknown task id {exc}") from exc
    sched = Schedule(ScheduleVariant(data["variant"]), per_device, edges)
    return sched, model, cfg, costs


def export_text(sched: Schedule, task_times: dict[Task, tuple[float, float]] | None = None) -> str:
    """Line-oriented export: ``device kind stage microbatch unit start_slot``."""
    lines = ["# device kind stage microbatch unit start_slot"]
    for device_tasks in sched.per_device:
        for task in device_tasks:
            start = "-"
            if task_times is not None and task in task_times:
                start = f"{task_times[task][0]:.10g}"
            fields = [
                str(task.device),
                task.kind.value,
                "-" if task.stage is None else str(task.stage),
                "-" if task.microbatch is None else str(task.microbatch),
                "-" if task.unit is None else str(task.unit),
                start,
            ]
            lines.append(" ".join(fields))
    return "\n".join(lines) + "\n"
