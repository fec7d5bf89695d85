import json

import pytest

from zeroppsim.cli import main

SMALL = {
    "model": {"num_layers": 4, "hidden_size": 64, "seq_len": 16,
              "weight_mem_per_layer": 1.0,
              "act_mem_per_layer_per_microbatch": 1.0},
    "parallel": {"pp_size": 2, "dp_size": 2, "microbatches": 4, "unit_size": 2,
                 "stages_per_device": 2},
    "costs": {"intra_node_bandwidth": "inf", "inter_node_bandwidth": "inf"},
}


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(SMALL))
    return str(path)


def test_no_arguments_is_a_usage_error(capsys):
    assert main([]) == 2
    assert "usage" in capsys.readouterr().err


def test_unknown_flag_is_a_usage_error(capsys):
    assert main(["plan", "--config", "x.json", "--bogus"]) == 2


def test_missing_config_file(capsys):
    assert main(["plan", "--config", "/nonexistent/c.json"]) == 2
    assert "error" in capsys.readouterr().err


def test_bad_config_key_is_a_usage_error(tmp_path, capsys):
    bad = dict(SMALL, model=dict(SMALL["model"], hidden=1))
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(bad))
    assert main(["plan", "--config", str(path)]) == 2
    assert "config error" in capsys.readouterr().err


def test_plan_prints_metrics_and_writes_schedule(config, tmp_path, capsys):
    out = tmp_path / "sched.json"
    assert main(["plan", "--config", config, "--out", str(out)]) == 0
    stdout = capsys.readouterr().out
    assert "makespan=" in stdout and "bubble_ratio=" in stdout
    payload = json.loads(out.read_text())
    assert payload["variant"] == "zeropp"
    assert len(payload["devices"]) == 2


def test_validate_round_trip(config, tmp_path, capsys):
    out = tmp_path / "sched.json"
    assert main(["plan", "--config", config, "--out", str(out)]) == 0
    capsys.readouterr()
    assert main(["validate", "--schedule", str(out)]) == 0
    assert "OK" in capsys.readouterr().out


def test_validate_rejects_mutated_schedule(config, tmp_path, capsys):
    out = tmp_path / "sched.json"
    main(["plan", "--config", config, "--out", str(out)])
    payload = json.loads(out.read_text())
    payload["devices"][0].reverse()  # breaks every dependency on device 0
    out.write_text(json.dumps(payload))
    capsys.readouterr()
    assert main(["validate", "--schedule", str(out)]) == 1
    assert "INVALID" in capsys.readouterr().out


def test_validate_fuzz_smoke(config, capsys, monkeypatch):
    monkeypatch.setenv("ZEROPP_SEED", "123")
    assert main(["validate", "--config", config, "--fuzz", "5"]) == 0
    assert "seed=123" in capsys.readouterr().out


def test_analyze_emits_five_method_rows(config, capsys):
    assert main(["analyze", "--config", config]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0].startswith("method,")
    assert [l.split(",")[0] for l in lines[1:]] == \
        ["gpipe", "1f1b", "interleaved_1f1b", "zeropp", "zeropp_recomp"]


def test_analyze_is_byte_identical_across_runs(config, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["analyze", "--config", config, "--csv", str(a)]) == 0
    assert main(["analyze", "--config", config, "--csv", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_analyze_method_subset(config, capsys):
    assert main(["analyze", "--config", config, "--methods", "zeropp"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 2


def test_simulate_writes_metrics_json(config, tmp_path, capsys):
    out = tmp_path / "metrics.json"
    assert main(["simulate", "--config", config, "--json", str(out)]) == 0
    metrics = json.loads(out.read_text())
    assert metrics["makespan"] > 0
    assert len(metrics["per_device_busy"]) == 2


def test_search_writes_ranked_csv(config, tmp_path, capsys):
    out = tmp_path / "plan.csv"
    assert main(["search", "--config", config, "--csv", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "U,V,recompute,mode,time,peak_mem,feasible"
    assert len(lines) == 1 + 3 * 2 * 2 * 2  # divisors(4) x divisors(2) x rec x mode
    assert "best candidate" in capsys.readouterr().out


def test_search_with_tiny_cap_reports_infeasible(config, capsys):
    assert main(["search", "--config", config, "--mem-cap-gb", "1e-9"]) == 0
    assert "no feasible candidate" in capsys.readouterr().out


def test_render_ascii_and_svg(config, capsys):
    assert main(["render", "--config", config]) == 0
    out = capsys.readouterr().out
    assert out.splitlines()[1].startswith("d0 |")
    assert main(["render", "--config", config, "--format", "svg"]) == 0
    assert capsys.readouterr().out.startswith("<svg ")


def test_figure1_ratio_grows_with_batch(config, capsys):
    assert main(["figure1", "--config", config, "--batches", "1,2,4,8"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "batch,tp_bytes_per_gpu,sharded_dp_bytes_per_gpu"
    ratios = [float(l.split(",")[1]) / float(l.split(",")[2]) for l in lines[1:]]
    assert ratios == sorted(ratios) and ratios[0] < ratios[-1]


def test_module_entry_point():
    import subprocess
    import sys
    proc = subprocess.run([sys.executable, "-m", "zeroppsim"],
                          capture_output=True, text=True)
    assert proc.returncode == 2
    assert "usage" in proc.stderr
