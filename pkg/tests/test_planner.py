import csv
import io
import math

import pytest

from conftest import mk_cfg, mk_model, zero_comm
from zeroppsim import (
    CommCostModel,
    ConfigError,
    HybridMode,
    RecomputeMode,
    SearchSpace,
    report,
    search,
)


def small_space(cap=math.inf, **kw):
    m = mk_model(layers=4, weight_mem_per_layer=64.0)
    base = mk_cfg(P=2, D=4, B=4, U=2, inter_node_dp=2)
    costs = CommCostModel(intra_node_bandwidth=256.0, inter_node_bandwidth=64.0)
    return SearchSpace(model=m, base=base, costs=costs, memory_cap=cap, **kw)


def test_search_enumerates_the_whole_grid():
    space = small_space()
    plan = search(space)
    assert len(plan.rows) == space.grid_size() == 3 * 2 * 2 * 2  # U x V x rec x mode
    combos = {(r.unit_size, r.stages_per_device, r.recompute, r.hybrid_mode)
              for r in plan.rows}
    assert len(combos) == len(plan.rows)


def test_feasible_block_is_sorted_and_leads():
    plan = search(small_space())
    keys = [(r.time, r.peak_mem, r.unit_size) for r in plan.feasible_rows]
    assert keys == sorted(keys)
    assert plan.best == plan.rows[0]
    assert all(r.feasible for r in plan.rows[:len(plan.feasible_rows)])


def test_cap_marks_feasibility_exactly():
    unbounded = search(small_space())
    cap = sorted(r.peak_mem for r in unbounded.rows)[len(unbounded.rows) // 2]
    plan = search(small_space(cap=cap))
    for r in plan.rows:
        assert r.feasible == (r.peak_mem <= cap)


def test_best_time_improves_with_memory():
    caps = [24.0, 32.0, 64.0, 512.0, math.inf]
    times = []
    for cap in caps:
        plan = search(small_space(cap=cap))
        times.append(plan.best.time if plan.best else math.inf)
    assert times == sorted(times, reverse=True) or \
        all(times[i + 1] <= times[i] for i in range(len(times) - 1))


def test_all_infeasible_reports_closest_candidate():
    plan = search(small_space(cap=1.0))
    assert plan.best is None
    assert not plan.feasible_rows
    csv_text, summary = report(plan)
    m = plan.min_memory_row
    assert "no feasible candidate" in summary
    assert f"U={m.unit_size}" in summary
    # infeasible block is ordered by how close it came to fitting
    peaks = [r.peak_mem for r in plan.rows]
    assert peaks == sorted(peaks)


def test_report_csv_shape():
    plan = search(small_space())
    csv_text, summary = report(plan)
    rows = list(csv.reader(io.StringIO(csv_text)))
    assert rows[0] == ["U", "V", "recompute", "mode", "time", "peak_mem", "feasible"]
    assert len(rows) - 1 == len(plan.rows)
    assert {r[6] for r in rows[1:]} <= {"0", "1"}
    assert "best candidate" in summary


def test_candidate_lists_can_be_narrowed():
    space = small_space(unit_sizes=(4,), stage_counts=(2,),
                        recompute_modes=(RecomputeMode.NONE,),
                        hybrid_modes=(HybridMode.DP_OUTER,))
    plan = search(space)
    assert len(plan.rows) == 1
    r = plan.rows[0]
    assert (r.unit_size, r.stages_per_device) == (4, 2)


def test_search_space_validation():
    with pytest.raises(ConfigError):
        small_space(cap=0.0)
    m = mk_model(layers=9)
    base = mk_cfg(P=2, D=1, B=2, U=2)
    with pytest.raises(ConfigError, match="divisible"):
        SearchSpace(model=m, base=base, costs=zero_comm())


def test_search_is_deterministic():
    a = search(small_space(cap=64.0))
    b = search(small_space(cap=64.0))
    assert a == b
