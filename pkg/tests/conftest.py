"""Shared factories: abstract-unit models and zero-cost communication.

Most tests want uniform task costs (t=1 per layer) and memory in abstract
units (M_w = M_a = 1), so peaks and idle times come out as small integers.
"""

import math

from zeroppsim import CommCostModel, ModelSpec, ParallelConfig


def mk_model(layers=8, **kw):
    kw.setdefault("hidden_size", 64)
    kw.setdefault("seq_len", 16)
    kw.setdefault("weight_mem_per_layer", 1.0)
    kw.setdefault("act_mem_per_layer_per_microbatch", 1.0)
    return ModelSpec(num_layers=layers, **kw)


def mk_cfg(P=2, D=2, B=4, U=2, V=1, **kw):
    return ParallelConfig(pp_size=P, dp_size=D, microbatches=B, unit_size=U,
                          stages_per_device=V, **kw)


def zero_comm():
    return CommCostModel(intra_node_bandwidth=math.inf,
                         inter_node_bandwidth=math.inf)
