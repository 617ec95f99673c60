# test_cli.py
from pathlib import Path

from cli import main
from utils import read_csv

ROOT = Path(__file__).parent
BENCHMARK = str(ROOT / "data" / "benchmark.yaml")


def cli(*argv) -> int:
    return main(["--no-log-file", *map(str, argv)])


def test_generate_is_reproducible(tmp_path, capsys):
    """Même graine => mêmes fichiers"""
    assert cli("generate", "--count", 2, "--seed", 7, "--out", tmp_path / "a") == 0
    assert cli("generate", "--count", 2, "--seed", 7, "--out", tmp_path / "b") == 0
    names = sorted(path.name for path in (tmp_path / "a").iterdir())
    assert names == ["taskset_0000.yaml", "taskset_0001.yaml"]
    for name in names:
        assert (tmp_path / "a" / name).read_text() == (tmp_path / "b" / name).read_text()
    assert "taskset_0000.yaml" in capsys.readouterr().out


def test_generate_rejects_zero_utilization(tmp_path, capsys):
    assert cli("generate", "--utilization", 0, "--out", tmp_path) == 2
    assert capsys.readouterr().err.startswith("error:")


def test_simulate_missing_taskset(tmp_path):
    assert cli("simulate", tmp_path / "absent.yaml", "--out", tmp_path) == 2


def test_analyze_benchmark(tmp_path, capsys):
    """Verdict de l'analyse bornée ; l'utilisation brute n'est qu'une mesure"""
    assert cli("analyze", BENCHMARK, "--rate", 0.015, "--out", tmp_path) == 0
    assert capsys.readouterr().out.strip() == "utilization 1.167, schedulable false"
    assert len(read_csv(tmp_path / "analysis.csv")) == 7


def test_analyze_scarce_harvest(tmp_path, capsys):
    assert cli("analyze", BENCHMARK, "--rate", 0.008, "--out", tmp_path) == 0
    assert capsys.readouterr().out.strip().endswith("schedulable false")


def test_analyze_raw_utilization(tmp_path, capsys):
    assert cli("analyze", BENCHMARK, "--rate", 0.015, "--raw-utilization", "--out", tmp_path) == 0
    assert capsys.readouterr().out.splitlines() == [
        "utilization 1.167, schedulable false",
        "raw utilization 0.979 (metric, not a schedulability verdict)",
    ]


def test_analyze_thresholds(tmp_path):
    assert cli("analyze", BENCHMARK, "--rate", 0.015, "--thresholds", "--out", tmp_path) == 0
    rows = {row["task"]: row for row in read_csv(tmp_path / "thresholds.csv")}
    assert set(rows) == {"Sensor", "Camera"}
    assert rows["Camera"]["threshold_v"] == "3.9122"


def test_simulate_zero_horizon(tmp_path, capsys):
    assert cli("simulate", BENCHMARK, "--horizon", 0, "--out", tmp_path) == 0
    assert read_csv(tmp_path / "trace.csv") == []
    metrics = read_csv(tmp_path / "metrics.csv")
    assert metrics[-1]["chain"] == "summary"
    assert capsys.readouterr().out.strip().endswith("metrics.csv")


def test_simulate_without_config(tmp_path):
    """Configuration par défaut : récolte idéale, toutes les échéances respectées"""
    assert cli("simulate", BENCHMARK, "--horizon", 120, "--out", tmp_path) == 0
    rows = {row["chain"]: row for row in read_csv(tmp_path / "metrics.csv")}
    assert rows["CRC"]["success_ratio"] == "1.0000"
    assert rows["summary"]["power_cycles"] == "0"


def test_simulate_with_config(tmp_path):
    config = ROOT / "configs" / "sim_moderate.yaml"
    assert cli("simulate", BENCHMARK, "--config", config, "--horizon", 60, "--policy", "event_first",
               "--out", tmp_path) == 0
    events = {row["event"] for row in read_csv(tmp_path / "trace.csv")}
    assert {"Release", "Dispatch", "Complete"} <= events


def test_simulate_with_trace_config(tmp_path):
    config = ROOT / "configs" / "sim_trace.yaml"
    assert cli("simulate", BENCHMARK, "--config", config, "--horizon", 30, "--out", tmp_path) == 0
    assert read_csv(tmp_path / "metrics.csv")


def test_experiment_smoke(tmp_path, capsys):
    assert cli("experiment", ROOT / "configs" / "experiments" / "smoke.yaml", "--out", tmp_path) == 0
    rows = read_csv(tmp_path / "smoke.csv")
    assert [(row["utilization"], row["policy"]) for row in rows] == [
        ("0.3000", "mixed_preemption"), ("0.3000", "all_atomic"),
        ("0.6000", "mixed_preemption"), ("0.6000", "all_atomic"),
    ]
    assert all(row["error"] == "" for row in rows)


def test_unknown_experiment_file(tmp_path):
    assert cli("experiment", tmp_path / "absent.yaml") == 2
