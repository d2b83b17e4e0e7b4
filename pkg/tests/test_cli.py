import csv
import io
import json

import pytest

from voltvar.cli import main


def test_run_prints_profile(capsys):
    assert main(["run", "--scheme", "g", "--case", "under", "--mean-load", "--seed", "1"]) == 0
    out, err = capsys.readouterr()
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == ["node", "distance_km", "v_pu", "angle_rad", "q_g_var", "q_max_var"]
    assert len(rows) == 252
    assert rows[1][2] == "1"
    assert "G(V)" in err and "min_v=" in err


def test_run_writes_files(tmp_path, capsys):
    assert main(["run", "--scheme", "HybridKV", "--k", "0.5", "--scale", "0.5", "--case", "over",
                 "--linear", "--out-dir", str(tmp_path)]) == 0
    assert (tmp_path / "profile_HybridKV_over.csv").exists()
    assert (tmp_path / "profile_HybridKV_over.svg").exists()
    assert "LinDistFlow" in capsys.readouterr().err


def test_sweep_end_to_end(tmp_path, capsys):
    code = main(["sweep", "--realizations", "1", "--scheme", "NoControl", "--scheme", "HybridKV",
                 "--k", "0", "--k", "1", "--scale", "1", "--out-dir", str(tmp_path)])
    assert code == 0
    for name in ("cases.csv", "frontier.csv", "frontier.svg", "k_curves.svg"):
        assert (tmp_path / name).exists()
    with open(tmp_path / "cases.csv") as fh:
        assert sum(1 for _ in fh) == 1 + 3 * 2


def test_sweep_failure_exit_code(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"solver": {"max_iter": 1}, "sweep": {"schemes": ["NoControl"],
                                                                     "realizations": 1}}))
    assert main(["sweep", "--config", str(cfg), "--out-dir", str(tmp_path / "out"), "--no-figures"]) == 1
    assert (tmp_path / "out" / "failures.csv").exists()
    assert "failed" in capsys.readouterr().err


def test_config_error_exit_code(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"sweep": {"nope": 1}}))
    assert main(["sweep", "--config", str(cfg)]) == 2
    assert main(["sweep", "--config", str(tmp_path / "missing.json")]) == 2


@pytest.mark.parametrize("argv", [["--scheme", "bogus"], ["--scheme", "f", "--k", "2"]])
def test_bad_run_options(argv, capsys):
    assert main(["run", *argv]) == 2
    assert "configuration error" in capsys.readouterr().err


@pytest.mark.slow
def test_validate_passes(capsys):
    assert main(["validate"]) == 0
    out = capsys.readouterr().out
    assert out.strip().endswith("0 failure(s)")
    assert "FAIL" not in out
