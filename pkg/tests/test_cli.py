import csv
import json
import math
from pathlib import Path

import pytest

from fpplab.cli import CSV_COLUMNS, RunConfig, ConfigError, main

SPEC = "dim = 2\nnormal = 0,1\n"


def run(tmp_path, command, text, *extra):
    cfg = tmp_path / f"{command}.cfg"
    cfg.write_text(text)
    out = tmp_path / "runs"
    code = main([command, str(cfg), "--out", str(out), *extra])
    dirs = sorted(out.glob(f"{command}-*"), key=lambda p: p.stat().st_mtime) if out.exists() else []
    return code, dirs


def rows(path: Path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_estimate_nu_constant(tmp_path):
    code, dirs = run(tmp_path, "estimate-nu", SPEC + "dist = constant:1\nseed = 0\nn_list = 4,10\nreps = 3\n")
    assert code == 0
    r = rows(dirs[0] / "results.csv")
    assert list(r[0].keys()) == list(CSV_COLUMNS)
    assert [float(x["value"]) for x in r if x["statistic"] == "nu_se"] == [0.0, 0.0]
    means = [float(x["value"]) for x in r if x["statistic"] == "nu_mean"]
    assert means == [1.25, 1.1]
    tsv = (dirs[0] / "nu_vs_n.tsv").read_text().splitlines()
    assert [line.split("\t") for line in tsv] == [["4.0", "1.25"], ["10.0", "1.1"]]
    meta = json.loads((dirs[0] / "metadata.json").read_text())
    assert meta["command"] == "estimate-nu"


def test_missing_key_exits_2(tmp_path, capsys):
    code, _ = run(tmp_path, "estimate-nu", SPEC + "seed = 0\nn_list = 4\nreps = 3\n")
    assert code == 2
    assert "dist" in capsys.readouterr().err


def test_unknown_key_and_bad_values_exit_2(tmp_path, capsys):
    assert run(tmp_path, "verify", SPEC + "seed = 0\ncolour = red\n")[0] == 2
    assert "colour" in capsys.readouterr().err
    assert run(tmp_path, "estimate-nu", SPEC + "dist = gamma:1\nseed = 0\nn_list = 4\nreps = 3\n")[0] == 2
    assert run(tmp_path, "estimate-nu", SPEC + "dist = constant:1\nseed = x\nn_list = 4\nreps = 3\n")[0] == 2
    assert run(tmp_path, "tail-scan", SPEC + "dist = constant:1\nseed = 0\nn_list = 4\nreps = 0\n")[0] == 2
    assert run(tmp_path, "estimate-nu", "dim = 2\nnormal = 0,0\ndist = constant:1\nseed = 0\n"
                                        "n_list = 4\nreps = 3\n")[0] == 2
    assert main(["verify", str(tmp_path / "missing.cfg")]) == 2


def test_rerun_is_byte_identical_and_never_overwrites(tmp_path):
    text = SPEC + "dist = exponential:1\nseed = 4\nn_list = 3,4\nreps = 50\n"
    assert run(tmp_path, "estimate-nu", text)[0] == 0
    code, dirs = run(tmp_path, "estimate-nu", text, "--workers", "2")
    assert code == 0 and len(dirs) == 2
    assert (dirs[0] / "results.csv").read_bytes() == (dirs[1] / "results.csv").read_bytes()
    assert dirs[0].name != dirs[1].name


def test_env_seed_overrides_config(tmp_path, monkeypatch):
    text = SPEC + "dist = exponential:1\nseed = 4\nn_list = 3\nreps = 20\n"
    monkeypatch.setenv("FPPLAB_SEED", "99")
    cfg = RunConfig.from_text("estimate-nu", text)
    assert cfg.seed == 99
    code, dirs = run(tmp_path, "estimate-nu", text)
    assert code == 0
    assert {r["seed"] for r in rows(dirs[0] / "results.csv")} == {"99"}
    monkeypatch.setenv("FPPLAB_SEED", "nope")
    with pytest.raises(ConfigError):
        RunConfig.from_text("estimate-nu", text)


def test_tail_scan_three_rows(tmp_path):
    text = SPEC + "dist = exponential:1\nseed = 1\nn_list = 3,4,5\nreps = 300\npilot_reps = 100\n"
    code, dirs = run(tmp_path, "tail-scan", text)
    assert code == 0
    r = rows(dirs[0] / "results.csv")
    assert len(r) == 3 and {x["statistic"] for x in r} == {"p_hat"}
    meta = json.loads((dirs[0] / "metadata.json").read_text())
    assert math.isfinite(meta["nu_pilot"]) and meta["lam_initial"] > meta["nu_pilot"]


def test_regime_fit_synthetic_and_insufficient(tmp_path, capsys):
    code, dirs = run(tmp_path, "regime-fit", "seed = 0\npoints = 4:16, 8:64, 12:144\n")
    assert code == 0
    assert "exponent=2" in capsys.readouterr().out
    r = rows(dirs[0] / "results.csv")
    assert float(r[0]["value"]) == pytest.approx(2.0)
    assert run(tmp_path, "regime-fit", "seed = 0\npoints = 4:16, 8:64\n")[0] == 3
    assert run(tmp_path, "regime-fit", "seed = 0\n")[0] == 2


def test_regime_fit_from_tail_scan_output(tmp_path, capsys):
    text = SPEC + "dist = exponential:1\nseed = 1\nn_list = 3,4,5\nreps = 400\npilot_reps = 100\n"
    _, dirs = run(tmp_path, "tail-scan", text)
    code, _ = run(tmp_path, "regime-fit", f"seed = 0\ninput = {dirs[0] / 'results.csv'}\n")
    out = capsys.readouterr().out
    assert code == 0
    label = out.strip().splitlines()[-1].split("classification=")[1].split()[0]
    assert label in {"surface", "min-regime", "volume", "inconclusive"}


def test_verify_default_and_injected(tmp_path, capsys):
    code, dirs = run(tmp_path, "verify", SPEC + "seed = 0\n")
    assert code == 0
    assert all(int(r["value"]) == 1 for r in rows(dirs[0] / "results.csv"))
    capsys.readouterr()
    code, _ = run(tmp_path, "verify", SPEC + "seed = 0\ninject_violation = true\n")
    assert code == 3
    captured = capsys.readouterr()
    assert "FAIL stream_feasibility" in captured.out
    assert "stream_feasibility" in captured.err


def test_dump_instance(tmp_path):
    code, dirs = run(tmp_path, "dump-instance", SPEC + "dist = bernoulli:0.7\nseed = 3\nn = 3\n")
    assert code == 0
    from fpplab.maxflow import read_dimacs

    prob = read_dimacs((dirs[0] / "instance.max").read_text().splitlines())
    assert prob.sink == prob.num_nodes
