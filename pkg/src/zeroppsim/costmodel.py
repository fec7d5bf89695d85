"""Closed-form bubble/memory/traffic formulas for comparing parallelism methods.

Everything here is analytical: no schedule is built and no simulation runs.
The formulas mirror what the simulator measures (see tests for the
equivalences), so they are useful for quick what-if comparisons and for the
method table emitted by ``zeroppsim analyze``.

Units: memory results are bytes (or whatever unit ``weight_mem_per_layer`` /
``act_mem_per_layer_per_microbatch`` are expressed in); communication volumes
are bytes per transformer block per iteration.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .config import ConfigError, ModelSpec, ParallelConfig


class Method(str, Enum):
    """Parallelization strategies the analytical model can compare."""

    TP3D = "tp3d"
    GPIPE = "gpipe"
    ONE_F_ONE_B = "1f1b"
    INTERLEAVED_1F1B = "interleaved_1f1b"
    ZEROPP = "zeropp"
    ZEROPP_RECOMP = "zeropp_recomp"
    BFPP = "bfpp"


# Methods with a closed-form row in the comparison table, in emission order.
TABLE_METHODS: tuple[Method, ...] = (
    Method.GPIPE,
    Method.ONE_F_ONE_B,
    Method.INTERLEAVED_1F1B,
    Method.ZEROPP,
    Method.ZEROPP_RECOMP,
)


@dataclass(frozen=True)
class CostReport:
    """One row of the analytical comparison: predicted bubble, memory, traffic."""

    method: Method
    bubble_ratio: float
    weight_mem: float
    activation_mem: float
    comm_volume_per_block: float
    crossover_satisfied: bool

    def __post_init__(self):
        if not 0.0 <= self.bubble_ratio <= 1.0:
            raise ConfigError(
                f"bubble ratio {self.bubble_ratio} outside [0, 1]; "
                "the closed forms assume B >= P-1"
            )
        for name in ("weight_mem", "activation_mem", "comm_volume_per_block"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")


def tp_comm_volume(model: ModelSpec, cfg: ParallelConfig) -> float:
    """Tensor-parallel traffic per transformer block per iteration, in bytes.

    Four all-reduces per block per micro-batch (two in forward, two in
    backward), each moving ``2*b*s*h`` elements in a ring: ``8*B*b*s*h``
    elements total.
    """
    return float(
        8
        * cfg.microbatches
        * cfg.microbatch_samples
        * model.seq_len
        * model.hidden_size
        * model.bytes_per_element
    )


def zeropp_comm_volume(model: ModelSpec, cfg: ParallelConfig) -> float:
    """Sharded-layer traffic per transformer block per iteration, in bytes.

    Each scheduling unit re-gathers parameters twice (forward, backward) and
    reduce-scatters gradients once: three movements of the ``12*h^2`` block
    parameters, amortized over U micro-batches -> ``36*B*h^2/U`` elements.
    """
    return float(
        36
        * cfg.microbatches
        * model.hidden_size**2
        * model.bytes_per_element
        / cfg.unit_size
    )


def crossover(model: ModelSpec, cfg: ParallelConfig) -> bool:
    """True when sharding traffic drops below TP traffic: ``2*s*U*b > 9*h``."""
    return 2 * model.seq_len * cfg.unit_size * cfg.microbatch_samples > 9 * model.hidden_size


def bubble_formula(cfg: ParallelConfig) -> float:
    """Idle slots per device for the unit-scheduled pipeline, uniform costs.

    Units of at least ``2P-1`` micro-batches fill every dependency gap, so the
    bubble vanishes; below that each unit leaves ``2P-1-U`` idle slots.
    """
    P, U, B = cfg.pp_size, cfg.unit_size, cfg.microbatches
    if U >= 2 * P - 1:
        return 0.0
    return B * (2 * P - 1 - U) / U


def memory_formula(model: ModelSpec, cfg: ParallelConfig) -> tuple[float, float]:
    """Per-device (weight_peak, activation_peak) for the sharded pipeline.

    Weights: the persistent ``1/(P*D)`` shard plus one stage gathered
    (``1/(P*V)`` of the model).  Activations: at most ``min(B, U)``
    micro-batches are ever live per pipeline rank.
    """
    L = model.num_layers
    P, D, V = cfg.pp_size, cfg.dp_size, cfg.stages_per_device
    weight = L * model.weight_mem_per_layer * (1.0 / (P * D) + 1.0 / (P * V))
    act = min(cfg.microbatches, cfg.unit_size) * L * model.act_mem(cfg.microbatch_samples) / P
    return weight, act


def table2_row(method: Method, model: ModelSpec, cfg: ParallelConfig) -> CostReport:
    """Closed-form comparison row for one method under one configuration.

    GPipe and 1F1B are single-stage-per-device schedules, so they reject
    ``stages_per_device != 1``; the interleaved and sharded rows use V from the
    config.  Baseline rows carry the TP traffic they would need to shard
    within the node; the sharded rows carry the gather/scatter traffic.
    """
    P, V, B, D = cfg.pp_size, cfg.stages_per_device, cfg.microbatches, cfg.dp_size
    L = model.num_layers
    w_total = L * model.weight_mem_per_layer
    a_layer = model.act_mem(cfg.microbatch_samples)
    cross = crossover(model, cfg)

    if method is Method.GPIPE:
        if V != 1:
            raise ConfigError("gpipe assumes stages_per_device == 1")
        return CostReport(method, (P - 1) / B, w_total / P, B * L * a_layer / P,
                          tp_comm_volume(model, cfg), cross)
    if method is Method.ONE_F_ONE_B:
        if V != 1:
            raise ConfigError("1f1b assumes stages_per_device == 1")
        return CostReport(method, (P - 1) / B, w_total / P, L * a_layer,
                          tp_comm_volume(model, cfg), cross)
    if method is Method.INTERLEAVED_1F1B:
        return CostReport(method, (P - 1) / (V * B), w_total / P,
                          L * a_layer * (1.0 + (P - 1) / (V * P)),
                          tp_comm_volume(model, cfg), cross)

    sharded_w = w_total * (1.0 / (P * D) + 1.0 / (P * V))
    if method is Method.ZEROPP:
        # Activation peak at the bubble-free operating point U = 2P-1.
        return CostReport(method, 0.0, sharded_w, L * a_layer * (2.0 - 1.0 / P),
                          zeropp_comm_volume(model, cfg), cross)
    if method is Method.ZEROPP_RECOMP:
        return CostReport(method, 0.0, sharded_w,
                          L * a_layer * (2.0 / V - 1.0 / (V * P)),
                          zeropp_comm_volume(model, cfg), cross)
    raise ConfigError(f"no closed-form table row for method {method.value}")


def figure1_curve(
    model: ModelSpec, batch_sizes: list[int]
) -> list[tuple[int, float, float]]:
    """Per-GPU traffic vs. global batch: TP grows linearly, pure sharding is flat.

    Returns ``(batch, tp_bytes, sharded_dp_bytes)`` per entry.  The sharded
    series models single-device-pipeline fully sharded data parallelism: three
    parameter-volume movements per iteration regardless of batch.
    """
    if not batch_sizes:
        raise ConfigError("batch_sizes must be non-empty")
    h, s, bpe, L = (model.hidden_size, model.seq_len,
                    model.bytes_per_element, model.num_layers)
    sharded = 36.0 * h * h * bpe * L
    out = []
    for batch in batch_sizes:
        if batch < 1:
            raise ConfigError("batch sizes must be >= 1")
        out.append((batch, 8.0 * batch * s * h * bpe * L, sharded))
    return out
