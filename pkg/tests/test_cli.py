import json
import subprocess
import sys

import pytest

from squashsim.cli import main


def test_run_cancel_off_leaks(tmp_path, capsys):
    assert main(["run", "--scenario", "spectre_pht", "--config", "c1", "--cancel", "off",
                 "--out", str(tmp_path)]) == 0
    s = json.loads((tmp_path / "summary.json").read_text())
    assert s["leaked"] == "SQUASHME_16CHARS" and s["cc"] == 1.0 and not s["timed_out"]
    assert (tmp_path / "timeline.csv").read_text().startswith("attack_no,event_kind,level,relative_tick")
    assert "leaked=" in capsys.readouterr().out


def test_run_cancel_on_times_out(tmp_path):
    assert main(["run", "--config", "c1", "--cancel", "on", "--out", str(tmp_path), "--format", "jsonl"]) == 0
    s = json.loads((tmp_path / "summary.json").read_text())
    assert s["timed_out"] is True and s["cc"] == 0.0
    assert set(s) >= {"cc", "N", "N_total", "leaked", "attacks_attempted", "timed_out"}
    assert (tmp_path / "timeline.jsonl").exists()


def test_missing_config_is_exit_2(tmp_path):
    assert main(["run", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 2


def test_bad_scenario_is_exit_2(tmp_path):
    assert main(["run", "--scenario", "nope", "--out", str(tmp_path)]) == 2


def test_unwritable_out_is_exit_3(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["run", "--out", str(blocker / "sub"), "--cancel", "off"]) == 3


@pytest.mark.parametrize("argv", [["run", "--bogus"], ["frobnicate"], [], ["run", "--cancel", "maybe"]])
def test_usage_errors_exit_64(argv, capsys):
    with pytest.raises(SystemExit) as ei:
        main(argv)
    assert ei.value.code == 64
    assert "usage" in capsys.readouterr().err


def test_experiments_only_3(tmp_path, capsys):
    assert main(["experiments", "--only", "3", "--out", str(tmp_path)]) == 0
    rows = json.loads((tmp_path / "experiments.json").read_text())
    assert len(rows) == 1 and rows[0]["cc"] == "0.000000" and rows[0]["leaked"] is False
    assert (tmp_path / "experiment3.csv").exists()
    assert "N_total" in capsys.readouterr().out


def test_fuzz_exit_codes(tmp_path):
    assert main(["fuzz", "--iters", "0", "--out", str(tmp_path)]) == 0
    assert main(["fuzz", "--iters", "20", "--seed", "1", "--out", str(tmp_path)]) == 0
    assert not (tmp_path / "fuzz_repro.json").exists()
    assert main(["fuzz", "--iters", "200", "--inject-bug", "--out", str(tmp_path)]) == 1
    assert (tmp_path / "fuzz_repro.json").exists()
    assert main(["fuzz", "--iters", "-1"]) == 2


def test_identical_flags_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["run", "--scenario", "spectre_pht_cached", "--config", "c2", "--seed", "4", "--out", str(d)]) == 0
    for name in ("summary.json", "timeline.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "squashsim", "fuzz", "--iters", "0", "--out", str(tmp_path)],
                       capture_output=True, text=True, env={"SQUASHSIM_LOG": "debug", "PATH": ""})
    assert r.returncode == 0, r.stderr
