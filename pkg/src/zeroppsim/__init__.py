"""Schedule generation, simulation, and planning for pipeline-parallel
training with intra-node parameter sharding — all analytical, no GPUs.

The public surface mirrors the pipeline: configure (:mod:`zeroppsim.config`),
generate (:mod:`zeroppsim.schedules`), check (:mod:`zeroppsim.validation`),
simulate (:mod:`zeroppsim.simulation`), compare (:mod:`zeroppsim.costmodel`),
plan (:mod:`zeroppsim.planner`), draw (:mod:`zeroppsim.render`).
"""

from .config import (
    CommCostModel,
    ConfigError,
    HybridMode,
    ModelSpec,
    ParallelConfig,
    Placement,
    RecomputeMode,
    load_config,
    make_placement,
)
from .costmodel import (
    TABLE_METHODS,
    CostReport,
    Method,
    bubble_formula,
    crossover,
    figure1_curve,
    memory_formula,
    table2_row,
    tp_comm_volume,
    zeropp_comm_volume,
)
from .planner import PlanResult, PlanRow, SearchSpace, report, search
from .render import RenderFormat, render_timeline
from .schedules import apply_recompute, build_dependency_edges, expected_edges, generate
from .simulation import (
    MemoryBreakdown,
    SimResult,
    SimulationDeadlock,
    bubble_count,
    comm_volume,
    peak_memory,
    simulate,
)
from .tasks import (
    Schedule,
    ScheduleVariant,
    Task,
    TaskKind,
    export_text,
    schedule_from_json,
    schedule_to_json,
)
from .validation import FuzzSummary, Violation, ViolationKind, fuzz_check, validate

__version__ = "0.1.0"

__all__ = [
    "CommCostModel",
    "ConfigError",
    "CostReport",
    "FuzzSummary",
    "HybridMode",
    "MemoryBreakdown",
    "Method",
    "ModelSpec",
    "ParallelConfig",
    "Placement",
    "PlanResult",
    "PlanRow",
    "RecomputeMode",
    "RenderFormat",
    "Schedule",
    "ScheduleVariant",
    "SearchSpace",
    "SimResult",
    "SimulationDeadlock",
    "TABLE_METHODS",
    "Task",
    "TaskKind",
    "Violation",
    "ViolationKind",
    "apply_recompute",
    "bubble_count",
    "bubble_formula",
    "build_dependency_edges",
    "comm_volume",
    "crossover",
    "expected_edges",
    "export_text",
    "figure1_curve",
    "fuzz_check",
    "generate",
    "load_config",
    "make_placement",
    "memory_formula",
    "peak_memory",
    "report",
    "render_timeline",
    "schedule_from_json",
    "schedule_to_json",
    "search",
    "simulate",
    "table2_row",
    "tp_comm_volume",
    "validate",
    "zeropp_comm_volume",
    "__version__",
]
