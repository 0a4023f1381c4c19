import csv
import json
import logging
from pathlib import Path

import pytest
from click.testing import CliRunner

from roistream import cli as cli_module
from roistream.cli import cli, main
from roistream.sim.scenario import generate_synthetic_scenario
from roistream.utility import write_profiling_csv
from roistream.utils.frames import write_pgm

TABLES = {
    "bitrates": [100, 200],
    "resolutions": [0, 1],
    "cameras": [
        {"camera_id": 0, "weight": 1.0, "table": [[0.3, 0.2], [0.5, 0.7]]},
        {"camera_id": 1, "weight": 2.0, "table": [[0.4, 0.1], [0.65, 0.5]]},
    ],
}

RUN_CONFIG = {
    "sim": {"cameras": 3, "horizon": 20, "profiling_slots": 10},
    "train": {"epochs": 5, "hidden_size": 4},
}


@pytest.fixture(autouse=True)
def _restore_logging():
    root = logging.getLogger()
    level = root.level
    yield
    for handler in [h for h in root.handlers if h.get_name() == cli_module._HANDLER_NAME]:
        root.removeHandler(handler)
    root.setLevel(level)


@pytest.fixture
def runner():
    return CliRunner(mix_stderr=False)


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps(RUN_CONFIG))
    return path


def _rows(path):
    with path.open(newline="") as f:
        return list(csv.DictReader(f))


def test_help(capsys):
    assert main(["--help"]) == 0
    assert "simulate" in capsys.readouterr().out


def test_missing_required_option(capsys, tmp_path):
    code = main(["simulate", "--scenario", "synthetic:0", "--trace", "profile:low", "--out", str(tmp_path)])
    assert code == 2
    assert capsys.readouterr().err.startswith("error:")


def test_unknown_command(capsys):
    assert main(["transmit"]) == 2
    assert "error:" in capsys.readouterr().err


def test_allocate(runner, tmp_path):
    tables = tmp_path / "tables.json"
    tables.write_text(json.dumps(TABLES))
    result = runner.invoke(cli, ["allocate", "--tables", str(tables), "--budget", "300"])
    assert result.exit_code == 0, result.stderr
    decision = json.loads(result.stdout)
    assert decision["total_bitrate"] == 300
    assert [c["bitrate"] for c in decision["cameras"]] == [100, 200]
    assert decision["cameras"][0]["resolution"] == 0


@pytest.mark.parametrize("mode", ["dp", "fair", "agnostic", "brute"])
def test_allocate_modes_write_file(runner, tmp_path, mode):
    tables = tmp_path / "tables.json"
    tables.write_text(json.dumps(TABLES))
    out = tmp_path / "decision.json"
    result = runner.invoke(
        cli, ["allocate", "--tables", str(tables), "--budget", "400", "--mode", mode, "--out", str(out)]
    )
    assert result.exit_code == 0, result.stderr
    assert json.loads(out.read_text())["budget"] == 400.0


def test_allocate_bad_tables(runner, tmp_path):
    tables = tmp_path / "tables.json"
    tables.write_text(json.dumps(TABLES | {"bitrates": [100]}))
    result = runner.invoke(cli, ["allocate", "--tables", str(tables), "--budget", "300"])
    assert result.exit_code == 1
    assert "error:" in result.stderr


def test_allocate_bad_mode(runner, tmp_path):
    tables = tmp_path / "tables.json"
    tables.write_text(json.dumps(TABLES))
    result = runner.invoke(cli, ["allocate", "--tables", str(tables), "--budget", "1", "--mode", "x"])
    assert result.exit_code == 2


def test_scenario_thresholds_and_profile(runner, tmp_path):
    scenario_dir = tmp_path / "scenario"
    result = runner.invoke(
        cli,
        ["scenario", "--seed", "2", "--cameras", "2", "--horizon", "10", "--profiling-slots", "5",
         "--out", str(scenario_dir)],
    )
    assert result.exit_code == 0, result.stderr
    assert (scenario_dir / "features.csv").exists()

    out = tmp_path / "thresholds.json"
    result = runner.invoke(
        cli, ["thresholds", "--profiling", str(scenario_dir / "profiling.csv"), "--out", str(out)]
    )
    assert result.exit_code == 0, result.stderr
    report = json.loads(out.read_text())
    assert len(report["cameras"]) == 2
    assert report["tau_wl"] > 0

    models = tmp_path / "models"
    config = tmp_path / "train.json"
    config.write_text(json.dumps({"train": {"epochs": 3, "hidden_size": 4}}))
    result = runner.invoke(
        cli,
        ["profile", "--data", str(scenario_dir / "profiling.csv"), "--config", str(config),
         "--out", str(models)],
    )
    assert result.exit_code == 0, result.stderr
    assert sorted(p.name for p in models.iterdir()) == ["model_0.json", "model_1.json"]


def test_profile_too_little_data(runner, tmp_path):
    data = tmp_path / "profiling.csv"
    write_profiling_csv(data, generate_synthetic_scenario(0, 1, 1, profiling_slots=2).profiling[:3])
    result = runner.invoke(cli, ["profile", "--data", str(data), "--out", str(tmp_path / "m")])
    assert result.exit_code == 1
    assert "error:" in result.stderr


def test_simulate_learned(runner, tmp_path, config_path):
    out = tmp_path / "out"
    result = runner.invoke(
        cli,
        ["simulate", "--config", str(config_path), "--scenario", "synthetic:1",
         "--trace", "profile:medium", "--scheduler", "dp+elastic", "--out", str(out)],
    )
    assert result.exit_code == 0, result.stderr
    summary = json.loads((out / "summary.json").read_text())
    assert summary["scheduler"] == "dp+elastic"
    assert summary["slots"] == 20
    assert len(_rows(out / "slots_dp+elastic.csv")) == 20
    assert len(_rows(out / "cameras_dp+elastic.csv")) == 60


def test_simulate_with_saved_models_and_trace_file(runner, tmp_path, config_path):
    scenario_dir = tmp_path / "scenario"
    runner.invoke(
        cli, ["scenario", "--cameras", "3", "--horizon", "20", "--profiling-slots", "4",
              "--out", str(scenario_dir)],
    )
    models = tmp_path / "models"
    runner.invoke(
        cli, ["profile", "--data", str(scenario_dir / "profiling.csv"), "--config", str(config_path),
              "--out", str(models)],
    )
    trace = tmp_path / "trace.csv"
    trace.write_text("slot,kbps\n" + "".join(f"{t},{600 + 10 * t}\n" for t in range(20)))

    result = runner.invoke(
        cli,
        ["simulate", "--config", str(config_path), "--scenario", str(scenario_dir),
         "--models", str(models), "--trace", str(trace), "--out", str(tmp_path / "out")],
    )
    assert result.exit_code == 0, result.stderr
    assert json.loads((tmp_path / "out" / "summary.json").read_text())["trace"] == "trace"


def test_simulate_empty_models_dir(runner, tmp_path, config_path):
    models = tmp_path / "models"
    models.mkdir()
    result = runner.invoke(
        cli,
        ["simulate", "--config", str(config_path), "--scenario", "synthetic:0", "--models",
         str(models), "--trace", "profile:low", "--out", str(tmp_path / "out")],
    )
    assert result.exit_code == 1
    assert "error:" in result.stderr


@pytest.mark.parametrize(
    "option,value",
    [("--trace", "profile:extreme"), ("--trace", "missing.csv"), ("--scenario", "synthetic:x")],
)
def test_simulate_bad_specs(runner, tmp_path, config_path, option, value):
    args = {"--trace": "profile:low", "--scenario": "synthetic:0"} | {option: value}
    result = runner.invoke(
        cli,
        ["simulate", "--config", str(config_path), "--scenario", args["--scenario"],
         "--trace", args["--trace"], "--utility", "truth", "--out", str(tmp_path / "out")],
    )
    assert result.exit_code == 2


def _compare(out_dir, config_path):
    return main(
        ["compare", "--config", str(config_path), "--scenario", "synthetic:3", "--utility", "truth",
         "--trace", "profile:low", "--trace", "profile:high", "--out", str(out_dir)]
    )


def test_compare(tmp_path, config_path, capsys):
    assert _compare(tmp_path / "a", config_path) == 0
    rows = _rows(tmp_path / "a" / "comparison.csv")
    assert [(r["trace"], r["scheduler"]) for r in rows] == [
        (trace, scheduler)
        for trace in ("low-0", "high-0")
        for scheduler in ("dp", "dp+elastic", "fair", "agnostic")
    ]
    assert (tmp_path / "a" / "slots_low-0_fair.csv").exists()
    assert "low-0 dp:" in capsys.readouterr().out

    assert _compare(tmp_path / "b", config_path) == 0
    outputs = sorted(p.name for p in (tmp_path / "a").glob("*.csv"))
    # comparison.csv plus slots_* and cameras_* per trace and scheduler.
    assert len(outputs) == 1 + 2 * 2 * 4
    assert sorted(p.name for p in (tmp_path / "b").glob("*.csv")) == outputs
    for name in outputs:
        assert (tmp_path / "b" / name).read_bytes() == (tmp_path / "a" / name).read_bytes(), name


def test_gaps(runner, tmp_path, config_path):
    out = tmp_path / "gaps"
    result = runner.invoke(
        cli,
        ["gaps", "--config", str(config_path), "--seeds", "2", "--profile", "low",
         "--profile", "high", "--horizon", "10", "--out", str(out)],
    )
    assert result.exit_code == 0, result.stderr
    rows = _rows(out / "gaps.csv")
    assert [(r["seed"], r["trace"]) for r in rows] == [
        ("0", "low"), ("0", "high"), ("1", "low"), ("1", "high")
    ]
    for row in rows:
        assert float(row["gap"]) == pytest.approx(float(row["dp_elastic"]) - float(row["fair"]))
    assert "low: mean gap" in result.stdout
    assert "high: mean gap" in result.stdout


def test_detect(runner, tmp_path, moving_frames):
    frames = tmp_path / "frames"
    frames.mkdir()
    for i, frame in enumerate(moving_frames):
        write_pgm(frames / f"frame_{i:03}.pgm", frame)
    oracle = tmp_path / "oracle.csv"
    oracle.write_text("frame,x,y,w,h,confidence\n0,10,10,20,20,0.9\n")
    params = tmp_path / "params.json"
    params.write_text(json.dumps({"block_rows": 24, "block_cols": 32, "motion_threshold": 8}))
    out = tmp_path / "rois.csv"

    result = runner.invoke(
        cli,
        ["detect", "--frames", str(frames), "--oracle", str(oracle), "--params", str(params),
         "--frames-per-segment", "5", "--out", str(out)],
    )
    assert result.exit_code == 0, result.stderr
    rows = _rows(out)
    summaries = [r for r in rows if r["kind"] == "summary"]
    assert [r["segment"] for r in summaries] == ["0", "1"]
    assert float(summaries[0]["c"]) == pytest.approx(0.9)
    assert {"stationary", "moving"} <= {r["kind"] for r in rows}


def test_detect_without_frames(runner, tmp_path):
    frames = tmp_path / "frames"
    frames.mkdir()
    result = runner.invoke(cli, ["detect", "--frames", str(frames), "--out", str(tmp_path / "r.csv")])
    assert result.exit_code == 1
    assert "error:" in result.stderr


def test_compare_on_bundled_sample(tmp_path):
    sample = Path(__file__).parents[2] / "sample"
    code = main(
        ["compare", "--config", str(sample / "small.json"), "--scenario", str(sample / "scenario"),
         "--trace", str(sample / "trace.csv"), "--out", str(tmp_path)]
    )
    assert code == 0
    rows = _rows(tmp_path / "comparison.csv")
    assert [r["scheduler"] for r in rows] == ["dp", "dp+elastic", "fair", "agnostic"]
    assert all(r["trace"] == "trace" for r in rows)
