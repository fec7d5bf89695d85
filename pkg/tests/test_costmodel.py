import pytest
from hypothesis import given
from hypothesis import strategies as st

from zeroppsim import (
    ConfigError,
    Method,
    ModelSpec,
    ParallelConfig,
    TABLE_METHODS,
    bubble_formula,
    crossover,
    figure1_curve,
    memory_formula,
    table2_row,
    tp_comm_volume,
    zeropp_comm_volume,
)

H5120 = ModelSpec(num_layers=48, hidden_size=5120, seq_len=1024, bytes_per_element=1)
ABSTRACT = ModelSpec(num_layers=48, hidden_size=8, seq_len=8,
                     weight_mem_per_layer=1.0, act_mem_per_layer_per_microbatch=1.0)


def cfg(P=4, D=8, B=16, U=16, V=1, b=1):
    return ParallelConfig(pp_size=P, dp_size=D, microbatches=B, unit_size=U,
                          stages_per_device=V, microbatch_samples=b)


def test_tp_volume_counts_eight_batch_passes():
    # bytes_per_element=1 so the result is an element count
    assert tp_comm_volume(H5120, cfg(B=16, U=16, b=4)) == 2_684_354_560


def test_zeropp_volume_amortizes_over_unit():
    assert zeropp_comm_volume(H5120, cfg(B=16, U=16)) == 943_718_400
    # halving the unit doubles the re-gather traffic
    assert zeropp_comm_volume(H5120, cfg(B=16, U=8)) == 2 * 943_718_400


def test_crossover_threshold_unit():
    hits = [u for u in range(1, 17)
            if crossover(H5120, cfg(B=4 * u, U=u, b=2))]
    assert min(hits) == 12  # 2*1024*12*2 > 9*5120


def test_bubble_formula_values():
    assert bubble_formula(cfg(P=4, B=8, U=4)) == 6.0
    assert bubble_formula(cfg(P=4, B=14, U=7)) == 0.0  # U = 2P-1
    assert bubble_formula(cfg(P=1, B=4, U=1)) == 0.0


def test_memory_formula_oracle():
    assert memory_formula(ABSTRACT, cfg(B=12, U=6, V=2)) == (7.5, 72.0)


def test_table_rows_reproduce_closed_forms():
    c1 = cfg(B=8, U=8, V=1)
    c2 = cfg(B=8, U=8, V=2)
    La = 48.0  # L * M_a in abstract units

    row = table2_row(Method.GPIPE, ABSTRACT, c1)
    assert row.bubble_ratio == 0.375 and row.activation_mem == 8 * La / 4

    row = table2_row(Method.ONE_F_ONE_B, ABSTRACT, c1)
    assert row.bubble_ratio == 0.375 and row.activation_mem == La

    row = table2_row(Method.INTERLEAVED_1F1B, ABSTRACT, c2)
    assert row.bubble_ratio == 3 / 16
    assert row.activation_mem == pytest.approx(La * (1 + 3 / 8))

    row = table2_row(Method.ZEROPP, ABSTRACT, c2)
    assert row.bubble_ratio == 0.0 and row.activation_mem == 1.75 * La
    assert row.weight_mem == 7.5

    row = table2_row(Method.ZEROPP_RECOMP, ABSTRACT, c2)
    assert row.activation_mem == 0.875 * La


def test_table_comm_columns_pair_methods_with_their_traffic():
    c = cfg(B=8, U=8, V=1)
    for method in (Method.GPIPE, Method.ONE_F_ONE_B):
        assert table2_row(method, ABSTRACT, c).comm_volume_per_block == \
            tp_comm_volume(ABSTRACT, c)
    c2 = cfg(B=8, U=8, V=2)
    for method in (Method.ZEROPP, Method.ZEROPP_RECOMP):
        assert table2_row(method, ABSTRACT, c2).comm_volume_per_block == \
            zeropp_comm_volume(ABSTRACT, c2)


def test_single_stage_rows_reject_v2():
    for method in (Method.GPIPE, Method.ONE_F_ONE_B):
        with pytest.raises(ConfigError):
            table2_row(method, ABSTRACT, cfg(V=2))


def test_methods_without_rows_are_rejected():
    for method in (Method.TP3D, Method.BFPP):
        assert method not in TABLE_METHODS
        with pytest.raises(ConfigError):
            table2_row(method, ABSTRACT, cfg())


@given(P=st.integers(2, 8), V=st.integers(1, 4), k=st.integers(1, 6))
def test_interleaving_never_hurts_the_bubble(P, V, k):
    c = cfg(P=P, B=P * k, U=P * k, V=V)
    c1 = cfg(P=P, B=P * k, U=P * k, V=1)
    il = table2_row(Method.INTERLEAVED_1F1B, ABSTRACT, c)
    gp = table2_row(Method.GPIPE, ABSTRACT, c1)
    assert il.bubble_ratio <= gp.bubble_ratio


@given(P=st.integers(2, 8), V=st.integers(1, 4))
def test_recompute_never_raises_activation_row(P, V):
    c = cfg(P=P, B=8, U=8, V=V)
    z = table2_row(Method.ZEROPP, ABSTRACT, c)
    zr = table2_row(Method.ZEROPP_RECOMP, ABSTRACT, c)
    assert zr.activation_mem <= z.activation_mem
    assert zr.weight_mem == z.weight_mem


@given(h=st.sampled_from([256, 1024, 4096, 5120]),
       s=st.sampled_from([128, 512, 2048]),
       u=st.sampled_from([1, 2, 4, 8, 16]),
       b=st.integers(1, 8), bpe=st.sampled_from([1, 2, 4]))
def test_crossover_agrees_with_volume_ordering(h, s, u, b, bpe):
    m = ModelSpec(num_layers=8, hidden_size=h, seq_len=s, bytes_per_element=bpe)
    c = cfg(B=4 * u, U=u, b=b)
    assert crossover(m, c) == (zeropp_comm_volume(m, c) < tp_comm_volume(m, c))


def test_figure1_shape():
    m = ModelSpec(num_layers=32, hidden_size=4096, seq_len=2048)
    pts = figure1_curve(m, [1, 2, 4, 8])
    assert [p[0] for p in pts] == [1, 2, 4, 8]
    slopes = {p[1] / p[0] for p in pts}
    assert len(slopes) == 1          # strictly linear through the origin
    assert len({p[2] for p in pts}) == 1  # batch-independent
    with pytest.raises(ConfigError):
        figure1_curve(m, [])


def test_report_rejects_degenerate_bubble():
    # fewer micro-batches than pipeline depth would push the ratio past 1
    with pytest.raises(ConfigError, match="bubble"):
        table2_row(Method.GPIPE, ABSTRACT, cfg(P=4, B=2, U=2, V=1))
