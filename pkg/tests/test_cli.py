import json

import pytest

from cpsfuzz.cli import main

SMALL = ["--warmup", "100", "--pretrain-ticks", "200", "--al-budget", "2", "--retrain-every", "1",
         "--pool-size", "4", "--trials", "2", "--flips", "1", "--test-ticks", "300", "--spoofs", "20",
         "--warning-attacks", "1"]


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_simulate_writes_capture_and_historian(tmp_path, capsys):
    code, out, _ = run(capsys, "simulate", "--ticks", 100, "--out", tmp_path)
    assert code == 0 and json.loads(out)["packets"] == 1600
    capture = (tmp_path / "capture.csv").read_text().splitlines()
    historian = (tmp_path / "historian.csv").read_text().splitlines()
    assert len(capture) == 1601 and len(historian) == 101
    assert capture[1].split(",")[0] == historian[1].split(",")[0]
    assert capture[-1].split(",")[0] == historian[-1].split(",")[0]


def test_simulate_is_reproducible(tmp_path, capsys):
    run(capsys, "simulate", "--ticks", 50, "--seed", 3, "--out", tmp_path / "a")
    run(capsys, "simulate", "--ticks", 50, "--seed", 3, "--out", tmp_path / "b")
    for name in ("capture.csv", "historian.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_usage_error_is_one_json_line(capsys):
    code, out, err = run(capsys, "frobnicate")
    assert code == 2 and out == ""
    assert len(err.strip().splitlines()) == 1 and json.loads(err)["error"] == "usage"


def test_runtime_error_is_one_json_line(tmp_path, capsys):
    code, _, err = run(capsys, "simulate", "--plant-config", tmp_path / "nope.json", "--out", tmp_path)
    assert code == 1 and json.loads(err)["error"] == "ConfigError"
    code, _, err = run(capsys, "fuzz", "--sensor", "FIT101", "--model-file", tmp_path / "nope.json",
                       "--out", tmp_path)
    assert code == 1 and "nope.json" in json.loads(err)["message"]


def test_config_file_with_flag_override(tmp_path, capsys):
    (tmp_path / "cfg.json").write_text(json.dumps({"seed": 5, "warmup": 10}))
    code, _, _ = run(capsys, "simulate", "--config", tmp_path / "cfg.json", "--ticks", 3,
                     "--warmup", 0, "--out", tmp_path)
    assert code == 0
    first = (tmp_path / "historian.csv").read_text().splitlines()[1]
    assert first.startswith("1,")


def test_single_sensor_pipeline(tmp_path, capsys):
    code, out, _ = run(capsys, "pretrain", "--sensor", "FIT101", *SMALL, "--out", tmp_path)
    assert code == 0 and (tmp_path / "gbdt-pretrain-FIT101.json").is_file()
    code, out, _ = run(capsys, "activelearn", "--sensor", "FIT101", "--strategy", "ebcm", *SMALL,
                       "--out", tmp_path)
    assert code == 0 and json.loads(out)["rounds"] == 2
    model = tmp_path / "gbdt-EBCM-FIT101.json"
    code, out, _ = run(capsys, "fuzz", "--sensor", "FIT101", "--model-file", model, *SMALL,
                       "--out", tmp_path)
    assert code == 0 and "1" in json.loads(out)["success_rate"]
    assert (tmp_path / "suite-FIT101-1.jsonl").is_file()
    code, out, _ = run(capsys, "defend", "--sensor", "FIT101", "--model-file", model, *SMALL,
                       "--out", tmp_path)
    assert code == 0 and 0 <= json.loads(out)["detection_rate"] <= 1


def test_random_fuzz_without_model(tmp_path, capsys):
    code, out, _ = run(capsys, "fuzz", "--sensor", "LIT101", *SMALL, "--out", tmp_path)
    assert code == 0 and json.loads(out)["success_rate"]["1"] == 0.0


@pytest.mark.parametrize("command", ["rq1", "rq2", "rq4"])
def test_experiment_commands(tmp_path, capsys, command):
    code, out, _ = run(capsys, command, "--sensors", "FIT101", "--models", "gbdt", "--strategies",
                       "EBCM", "--repeats", 1, "--pretrain-budgets", "100,200", *SMALL,
                       "--out", tmp_path)
    assert code == 0 and (tmp_path / command / "config.json").is_file()
    code, out, _ = run(capsys, "report", "--out", tmp_path)
    assert code == 0 and "absent" in (tmp_path / "report.md").read_text()


def test_defend_with_rq1_model(tmp_path, capsys):
    run(capsys, "rq1", "--sensors", "LIT101", "--models", "gbdt", "--strategies", "EBCM",
        "--repeats", 1, "--pretrain-budgets", "200", *SMALL, "--out", tmp_path)
    model = tmp_path / "rq1" / "models" / "gbdt-EBCM-LIT101.json"
    code, out, _ = run(capsys, "defend", "--sensor", "LIT101", "--model-file", model, *SMALL,
                       "--out", tmp_path)
    assert code == 0 and "warning_attacks" in json.loads(out)
