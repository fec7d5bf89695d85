import logging

from conftest import mk_cfg, mk_model, zero_comm
from zeroppsim import (
    RenderFormat,
    ScheduleVariant,
    generate,
    make_placement,
    render_timeline,
    simulate,
)


def rendered(m, cfg, variant=ScheduleVariant.ZEROPP, fmt=RenderFormat.ASCII, costs=None):
    pl = make_placement(cfg, m)
    sched = generate(m, cfg, pl, variant)
    result = simulate(sched, m, cfg, pl, costs or zero_comm())
    return render_timeline(result, sched, fmt), result, sched


def lanes_of(text):
    return [line.split("|")[1] for line in text.splitlines() if line.startswith("d")]


def test_trivial_pipeline_renders_f_b_w():
    m = mk_model(layers=1)
    text, _, _ = rendered(m, mk_cfg(P=1, D=1, B=1, U=1))
    assert lanes_of(text) == ["FBW"]
    assert "legend:" in text


def test_weight_tasks_fill_former_idle_columns():
    m = mk_model(layers=4)
    text, result, _ = rendered(m, mk_cfg(P=2, D=2, B=4, U=4, V=2))
    lanes = lanes_of(text)
    assert len(lanes) == 2
    for d, lane in enumerate(lanes):
        assert "W" in lane
        # column accounting is exact: '.' columns == simulated idle slots
        assert lane.count(".") == round(result.per_device_idle[d])


def test_render_is_deterministic():
    m = mk_model(layers=4)
    a, _, _ = rendered(m, mk_cfg(P=2, D=2, B=4, U=2, V=2))
    b, _, _ = rendered(m, mk_cfg(P=2, D=2, B=4, U=2, V=2))
    assert a == b


def test_recompute_glyph_is_lowercase_r():
    from zeroppsim import RecomputeMode
    m = mk_model(layers=8)
    text, _, _ = rendered(m, mk_cfg(P=2, D=2, B=4, U=4, V=2,
                                    recompute=RecomputeMode.FULL))
    assert "r" in "".join(lanes_of(text))


def test_comm_sublane_appears_with_finite_bandwidth():
    from zeroppsim import CommCostModel
    m = mk_model(layers=4, weight_mem_per_layer=64.0)
    costs = CommCostModel(intra_node_bandwidth=64.0, inter_node_bandwidth=64.0)
    text, _, _ = rendered(m, mk_cfg(P=2, D=4, B=4, U=2, V=2), costs=costs)
    comm_lines = [l for l in text.splitlines() if l.lstrip().startswith("~")]
    assert comm_lines and any("~" in l.split("|")[1] for l in comm_lines)


def test_non_uniform_costs_fall_back_with_warning(caplog):
    m = mk_model(layers=1, t_input_grad=0.7)
    with caplog.at_level(logging.WARNING, logger="zeroppsim.render"):
        text, _, _ = rendered(m, mk_cfg(P=1, D=1, B=1, U=1))
    assert "(proportional)" in text.splitlines()[0]
    assert any("proportional" in r.message for r in caplog.records)


def test_svg_has_one_rect_per_visible_task():
    m = mk_model(layers=4)
    text, result, sched = rendered(m, mk_cfg(P=2, D=2, B=4, U=2, V=2),
                                   fmt=RenderFormat.SVG)
    visible = sum(1 for t in sched.tasks()
                  if result.task_times[t][1] > result.task_times[t][0])
    assert text.startswith("<svg ")
    assert text.count("<rect") == visible
    assert text.count("</svg>") == 1
    # task ids ride along as tooltips
    assert "<title>F.d0.s0.m0.u0</title>" in text
