"""Configuration types: model shape/costs, parallel layout, stage placement, comm costs.

All types are frozen dataclasses validated on construction; every invariant
violation raises :class:`ConfigError` naming the broken constraint.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict
from enum import Enum
from pathlib import Path


class ConfigError(ValueError):
    """A config file or config object violates an invariant."""


class HybridMode(str, Enum):
    """How gradients are synchronized across nodes (outside the sharding group)."""

    DP_OUTER = "dp_outer"        # plain all-reduce of gradient shards across nodes
    ZERO1_OUTER = "zero1_outer"  # reduce-scatter + optimizer + all-gather across nodes


class RecomputeMode(str, Enum):
    NONE = "none"
    FULL = "full"


# Default multiplier C in the activation-bytes estimate s*b*h*bytes_per_element*C.
DEFAULT_ACTIVATION_CONSTANT = 34.0


@dataclass(frozen=True)
class ModelSpec:
    """Per-layer shape, memory footprint, and abstract per-task compute costs.

    ``weight_mem_per_layer`` defaults to ``12*h^2*bytes_per_element`` (the usual
    transformer-block parameter count); ``act_mem_per_layer_per_microbatch``
    defaults to ``s*b*h*bytes_per_element*activation_constant`` and needs the
    micro-batch size ``b``, so it is resolved through :meth:`act_mem`.
    Compute costs are abstract time units per layer per micro-batch.
    """

    num_layers: int
    hidden_size: int
    seq_len: int
    bytes_per_element: int = 2
    weight_mem_per_layer: float | None = None
    act_mem_per_layer_per_microbatch: float | None = None
    activation_constant: float = DEFAULT_ACTIVATION_CONSTANT
    t_forward: float = 1.0
    t_input_grad: float = 1.0
    t_weight_grad: float = 1.0
    t_optstep: float = 0.0

    def __post_init__(self):
        for name in ("num_layers", "hidden_size", "seq_len", "bytes_per_element"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.weight_mem_per_layer is None:
            object.__setattr__(
                self,
                "weight_mem_per_layer",
                float(12 * self.hidden_size**2 * self.bytes_per_element),
            )
        if self.weight_mem_per_layer <= 0:
            raise ConfigError("weight_mem_per_layer must be > 0")
        if self.act_mem_per_layer_per_microbatch is not None and self.act_mem_per_layer_per_microbatch <= 0:
            raise ConfigError("act_mem_per_layer_per_microbatch must be > 0")
        if self.activation_constant <= 0:
            raise ConfigError("activation_constant must be > 0")
        for name in ("t_forward", "t_input_grad", "t_weight_grad", "t_optstep"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")

    def act_mem(self, microbatch_samples: int) -> float:
        """Activation bytes per layer per micro-batch of ``microbatch_samples`` samples."""
        if self.act_mem_per_layer_per_microbatch is not None:
            return float(self.act_mem_per_layer_per_microbatch)
        return float(
            self.seq_len
            * microbatch_samples
            * self.hidden_size
            * self.bytes_per_element
            * self.activation_constant
        )


@dataclass(frozen=True)
class ParallelConfig:
    """Parallel layout: P pipeline devices, D-way intra-node sharding, V stages per
    device, B micro-batches split into units of U."""

    pp_size: int
    dp_size: int
    microbatches: int
    unit_size: int
    stages_per_device: int = 1
    microbatch_samples: int = 1
    inter_node_dp: int = 1
    hybrid_mode: HybridMode = HybridMode.DP_OUTER
    recompute: RecomputeMode = RecomputeMode.NONE
    optimizer_state_multiplier: float = 2.0

    def __post_init__(self):
        for name in (
            "pp_size", "dp_size", "microbatches", "unit_size",
            "stages_per_device", "microbatch_samples", "inter_node_dp",
        ):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.unit_size > self.microbatches:
            raise ConfigError("unit_size (U) must be <= microbatches (B)")
        if self.microbatches % self.unit_size != 0:
            raise ConfigError(
                f"B mod U != 0 (B={self.microbatches}, U={self.unit_size}); "
                "micro-batches must divide evenly into scheduling units"
            )
        if self.optimizer_state_multiplier < 0:
            raise ConfigError("optimizer_state_multiplier must be >= 0")
        if not isinstance(self.hybrid_mode, HybridMode):
            raise ConfigError(f"unknown hybrid_mode: {self.hybrid_mode!r}")
        if not isinstance(self.recompute, RecomputeMode):
            raise ConfigError(f"unknown recompute mode: {self.recompute!r}")

    @property
    def num_units(self) -> int:
        return self.microbatches // self.unit_size

    @property
    def num_stages(self) -> int:
        return self.pp_size * self.stages_per_device


@dataclass(frozen=True)
class Placement:
    """Looping stage placement: stage i lives on device i mod P."""

    num_stages: int
    stage_to_device: tuple[int, ...]
    stage_to_layers: tuple[tuple[int, int], ...]  # half-open [lo, hi) layer ranges

    def device_stages(self, device: int) -> tuple[int, ...]:
        return tuple(s for s, d in enumerate(self.stage_to_device) if d == device)

    def layers_in_stage(self, stage: int) -> int:
        lo, hi = self.stage_to_layers[stage]
        return hi - lo


@dataclass(frozen=True)
class CommCostModel:
    """Bandwidth/latency cost of collectives plus the overlap switch.

    Bandwidths are bytes per abstract time unit; ``float('inf')`` gives
    zero-cost collectives. ``overlap_with_compute=False`` serializes the comm
    stream against the compute stream on each device.
    """

    intra_node_bandwidth: float
    inter_node_bandwidth: float
    per_collective_latency: float = 0.0
    overlap_with_compute: bool = True

    def __post_init__(self):
        if not self.intra_node_bandwidth > 0:
            raise ConfigError("intra_node_bandwidth must be > 0")
        if not self.inter_node_bandwidth > 0:
            raise ConfigError("inter_node_bandwidth must be > 0")
        if self.per_collective_latency < 0:
            raise ConfigError("per_collective_latency must be >= 0")


def make_placement(cfg: ParallelConfig, model: ModelSpec) -> Placement:
    """Build the looping placement; requires L divisible by P*V."""
    P, V, L = cfg.pp_size, cfg.stages_per_device, model.num_layers
    if L % (P * V) != 0:
        raise ConfigError(f"L mod (P*V) != 0 (L={L}, P={P}, V={V})")
    num_stages = P * V
    per_stage = L // num_stages
    return Placement(
        num_stages=num_stages,
        stage_to_device=tuple(s % P for s in range(num_stages)),
        stage_to_layers=tuple((s * per_stage, (s + 1) * per_stage) for s in range(num_stages)),
    )


# --- JSON config files -------------------------------------------------------
#
# Layout: {"model": {...}, "parallel": {...}, "costs": {...}}.
# Unknown keys are rejected to catch typos; bandwidths accept the string "inf".

_MODEL_KEYS = {
    "num_layers", "hidden_size", "seq_len", "bytes_per_element",
    "weight_mem_per_layer", "act_mem_per_layer_per_microbatch",
    "activation_constant", "t_forward", "t_input_grad", "t_weight_grad",
    "t_optstep",
}
_PARALLEL_KEYS = {
    "pp_size", "dp_size", "microbatches", "unit_size", "stages_per_device",
    "microbatch_samples", "inter_node_dp", "hybrid_mode", "recompute",
    "optimizer_state_multiplier",
}
_COSTS_KEYS = {
    "intra_node_bandwidth", "inter_node_bandwidth", "per_collective_latency",
    "overlap_with_compute",
}


def _check_keys(section: str, data: dict, allowed: set[str]) -> None:
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in '{section}' section: {', '.join(unknown)}")


def _num(value):
    if isinstance(value, str):
        if value.lower() in ("inf", "infinity"):
            return math.inf
        raise ConfigError(f"expected a number, got {value!r}")
    return value


def model_from_dict(data: dict) -> ModelSpec:
    _check_keys("model", data, _MODEL_KEYS)
    try:
        return ModelSpec(**data)
    except TypeError as exc:
        raise ConfigError(f"bad 'model' section: {exc}") from exc


def parallel_from_dict(data: dict) -> ParallelConfig:
    _check_keys("parallel", data, _PARALLEL_KEYS)
    data = dict(data)
    if "hybrid_mode" in data:
        try:
            data["hybrid_mode"] = HybridMode(data["hybrid_mode"])
        except ValueError as exc:
            raise ConfigError(f"unknown hybrid_mode: {data['hybrid_mode']!r}") from exc
    if "recompute" in data:
        try:
            data["recompute"] = RecomputeMode(data["recompute"])
        except ValueError as exc:
            raise ConfigError(f"unknown recompute mode: {data['recompute']!r}") from exc
    try:
        return ParallelConfig(**data)
    except TypeError as exc:
        raise ConfigError(f"bad 'parallel' section: {exc}") from exc


def costs_from_dict(data: dict) -> CommCostModel:
    _check_keys("costs", data, _COSTS_KEYS)
    data = {k: (_num(v) if k != "overlap_with_compute" else v) for k, v in data.items()}
    try:
        return CommCostModel(**data)
    except TypeError as exc:
        raise ConfigError(f"bad 'costs' section: {exc}") from exc


def load_config(path: str | Path) -> tuple[ModelSpec, ParallelConfig, CommCostModel]:
    """Load and validate a JSON config file; returns (model, parallel, costs)."""
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    for section in ("model", "parallel", "costs"):
        if section not in raw:
            raise ConfigError(f"config is missing the '{section}' section")
        if not isinstance(raw[section], dict):
            raise ConfigError(f"'{section}' section must be a JSON object")
    extra = sorted(set(raw) - {"model", "parallel", "costs"})
    if extra:
        raise ConfigError(f"unknown top-level section(s): {', '.join(extra)}")

    model = model_from_dict(raw["model"])
    parallel = parallel_from_dict(raw["parallel"])
    costs = costs_from_dict(raw["costs"])
    make_placement(parallel, model)  # cross-check L mod (P*V)
    return model, parallel, costs


def model_to_dict(model: ModelSpec) -> dict:
    return asdict(model)


def parallel_to_dict(cfg: ParallelConfig) -> dict:
    data = asdict(cfg)
    data["hybrid_mode"] = cfg.hybrid_mode.value
    data["recompute"] = cfg.recompute.value
    return data


def costs_to_dict(costs: CommCostModel) -> dict:
    data = asdict(costs)
    for key in ("intra_node_bandwidth", "inter_node_bandwidth"):
        if math.isinf(data[key]):
            data[key] = "inf"
    return data
