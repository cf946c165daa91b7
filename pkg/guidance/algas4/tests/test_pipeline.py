"""
End-to-end tests: scenario runs, traces, accuracy report, benchmark and CLI.
"""

import json

import pandas as pd
import pytest

from ..cli import EXIT_ACCURACY, EXIT_CONFIG, EXIT_OK, main
from ..config import config_from_dict
from ..fabric import SystemMode
from ..pipeline import (
    bench,
    export_surface,
    output_digest,
    run_scenario,
    simulate,
    sweep_eww,
    verify_accuracy,
)
from ..trace_storage import TRACE_COLUMNS, read_trace, trace_rows, write_trace


def alarm_ticks(trace: pd.DataFrame, core: int) -> list:
    rows = trace[(trace["core_id"] == str(core)) & (trace["apmu_alarm"] == "1")]
    return [int(t) for t in rows["tick"]]


class TestRadarOffsetScenario:
    @pytest.fixture
    def result(self, radar_offset_settings, tmp_path):
        config = config_from_dict(radar_offset_settings)
        summary = run_scenario(config, tmp_path / "trace.csv")
        return summary, read_trace(summary["trace"])

    def test_alarm_window(self, result):
        summary, trace = result
        alarms = alarm_ticks(trace, 0)
        assert alarms
        assert min(alarms) >= 300
        assert 300 <= summary["first_alarm_tick"]["0"] <= 316
        assert max(alarms) < 424

    def test_other_corners_stay_quiet(self, result):
        summary, trace = result
        for core in (1, 2, 3):
            assert alarm_ticks(trace, core) == []
            assert summary["first_alarm_tick"][str(core)] is None

    def test_sustained_alarm_advises_handover(self, result):
        summary, trace = result
        assert summary["final_mode"] == SystemMode.SEMI_AUTO_HANDOVER.value
        (transition,) = summary["mode_transitions"]
        assert transition["from"] == SystemMode.FULL_AUTO.value
        assert transition["tick"] == summary["first_alarm_tick"]["0"] + 7
        assert set(trace["mode"]) == {"FullAuto", "SemiAutoHandover"}

    def test_pair_flag_raised(self, result):
        summary, trace = result
        assert summary["inclination_flag_ticks"] > 0
        flagged = trace[(trace["core_id"] == "0") & (trace["incl_flag_pair"] == "1")]
        assert flagged["tick"].astype(int).min() > 300


class TestCleanRuns:
    def test_short_clean_run(self, clean_config, tmp_path):
        summary = run_scenario(clean_config, tmp_path / "clean.csv")
        assert summary["success"]
        assert summary["alarm_ticks"] == {"0": 0, "1": 0, "2": 0, "3": 0}
        assert summary["final_mode"] == SystemMode.FULL_AUTO.value
        assert summary["mode_transitions"] == []
        assert summary["backpressure"] == summary["checksum_failures"] == 0
        trace = read_trace(summary["trace"])
        assert list(trace.columns) == TRACE_COLUMNS
        assert len(trace) == 200 * 4

    @pytest.mark.slow
    def test_long_clean_twin_never_alarms(self, radar_offset_settings, tmp_path):
        settings = dict(radar_offset_settings, faults=[])
        settings["scenario"] = dict(
            settings["scenario"],
            duration_ticks=10_000,
            profile={"kind": "linear", "rate": 0.00008},
        )
        summary = run_scenario(config_from_dict(settings), tmp_path / "twin.csv")
        assert sum(summary["alarm_ticks"].values()) == 0

    def test_core_failure_degrades_pair(self, clean_settings, tmp_path):
        settings = dict(clean_settings, core_failures=[{"core": 1, "at_tick": 100}])
        summary = run_scenario(config_from_dict(settings), tmp_path / "failed.csv")
        assert summary["final_mode"] == SystemMode.DEGRADED_PAIR.value
        assert summary["mode_transitions"][0]["tick"] == 100
        trace = read_trace(summary["trace"])
        core1 = trace[trace["core_id"] == "1"]["tick"].astype(int)
        assert core1.max() == 99
        assert set(trace[trace["core_id"] == "3"]["incl_flag_pair"].iloc[-10:]) == {""}


class TestTraces:
    def test_same_seed_identical_bytes(self, clean_config, tmp_path):
        first = run_scenario(clean_config, tmp_path / "a.csv")["trace"]
        second = run_scenario(clean_config, tmp_path / "b.csv")["trace"]
        with open(first, "rb") as a, open(second, "rb") as b:
            assert a.read() == b.read()

    def test_seed_override_changes_trace(self, clean_config, tmp_path):
        first = run_scenario(clean_config, tmp_path / "a.csv")["trace"]
        other = clean_config.with_overrides(seed=4)
        second = run_scenario(other, tmp_path / "b.csv")["trace"]
        assert not read_trace(first).equals(read_trace(second))

    def test_csv_round_trip(self, clean_config, tmp_path):
        path = run_scenario(clean_config, tmp_path / "a.csv")["trace"]
        frame = read_trace(path)
        rows = trace_rows(frame)
        assert rows[0].tick == 1 and rows[0].core_id == 0
        copy = write_trace(rows, tmp_path / "copy.csv")
        with open(path, "rb") as a, open(copy, "rb") as b:
            assert a.read() == b.read()

    def test_workers_do_not_change_results(self, clean_config):
        sequential = output_digest(o for o, _ in simulate(clean_config, workers=1))
        parallel = output_digest(o for o, _ in simulate(clean_config, workers=4))
        assert sequential == parallel


class TestReports:
    def test_accuracy_passes_by_default(self):
        report = verify_accuracy(grid=64)
        assert report["passed"]
        assert report["max_relative_deviation"] <= 0.05
        assert report["points_compared"] > 0

    def test_coarse_resolution_fails_gate(self):
        report = verify_accuracy(grid=64, frac_bits=4)
        assert not report["passed"]
        assert report["max_relative_deviation"] > 0.05

    @pytest.mark.slow
    def test_full_grid_accuracy(self):
        assert verify_accuracy(grid=512)["passed"]

    def test_bench_reports_identical_runs(self, clean_config):
        report = bench(clean_config, ticks=300, workers=4)
        assert [run["workers"] for run in report["runs"]] == [1, 4]
        assert report["identical"]

    @pytest.mark.slow
    def test_bench_hundred_thousand_ticks(self, clean_config):
        assert bench(clean_config, ticks=100_000, workers=4)["identical"]

    def test_surface_export(self, tmp_path):
        report = export_surface(out_path=tmp_path / "surface.csv", n=16)
        assert report["points"] == 256
        assert report["no_rule_fired"] > 0
        frame = pd.read_csv(report["surface"])
        assert list(frame.columns) == ["lidar", "radar", "crisp", "status"]

    def test_sweep_eww(self, radar_offset_settings):
        settings = dict(radar_offset_settings)
        settings["scenario"] = dict(settings["scenario"], duration_ticks=420)
        frame = sweep_eww(config_from_dict(settings))
        assert list(frame["eww"]) == list(range(1, 17))
        full = frame[frame["eww"] == 16].iloc[0]
        assert full["false_alarm_ticks"] == 0
        assert 0 <= full["detection_latency"] <= 16


class TestCli:
    def test_validate(self, write_config, capsys):
        path = write_config({"scenario": {"duration_ticks": 10}})
        assert main(["validate", "--config", str(path)]) == EXIT_OK
        assert json.loads(capsys.readouterr().out)["valid"]

    def test_invalid_config_exit_code(self, write_config, capsys):
        path = write_config({"apmu": {"eww": 17}})
        assert main(["validate", "--config", str(path)]) == EXIT_CONFIG
        assert "apmu.eww" in capsys.readouterr().err

    def test_missing_config_exit_code(self, tmp_path):
        missing = str(tmp_path / "nope.json")
        assert main(["run", "--config", missing]) == EXIT_CONFIG

    def test_accuracy_gate_exit_code(self, capsys):
        argv = ["verify-accuracy", "--grid", "32", "--frac-bits", "4"]
        assert main(argv) == EXIT_ACCURACY
        assert not json.loads(capsys.readouterr().out)["passed"]

    def test_run(self, write_config, tmp_path, capsys):
        path = write_config({"scenario": {"duration_ticks": 40}, "workers": 1})
        out = tmp_path / "run.csv"
        argv = ["run", "--config", str(path), "--out", str(out), "--seed", "5"]
        assert main(argv) == EXIT_OK
        summary = json.loads(capsys.readouterr().out)
        assert summary["seed"] == 5
        assert out.exists()

    def test_window_rounding_to_nothing_is_a_config_error(self, write_config, capsys):
        fault = {
            "corner": 0,
            "sensor": "radar",
            "kind": "offset",
            "value": 0.1,
            "start_time": 3.001,
            "end_time": 3.004,
        }
        path = write_config({"scenario": {"duration_ticks": 500}, "faults": [fault]})
        assert main(["validate", "--config", str(path)]) == EXIT_CONFIG
        assert main(["run", "--config", str(path)]) == EXIT_CONFIG
        assert "faults.0" in capsys.readouterr().err

    def test_print_schema(self, capsys):
        assert main(["validate", "--print-schema"]) == EXIT_OK
        assert "properties" in json.loads(capsys.readouterr().out)
