import csv
import json

import pytest

from prslab.cli import OUTPUT_ROOT_ENV, ConfigError, emit_plot_data, load_config, main
from prslab.mdp import CurveRow, MdpConfig, sweep


def run(tmp_path, *argv):
    out = tmp_path / "out"
    return main([*argv, "--out", str(out), "--quiet"]), out


def test_sampling_command(tmp_path):
    code, out = run(tmp_path, "sampling", "--set", "sampling.ps=0.85", "--set", "sampling.deltas=0.03")
    assert code == 0
    rows = list(csv.DictReader(open(out / "sampling.csv")))
    assert len(rows) == 1 and rows[0]["n"] == "6020"
    manifest = json.load(open(out / "manifest.json"))
    assert {"command", "version", "config_hash", "seeds", "config", "result"} <= set(manifest)
    assert manifest["command"] == "sampling"


def test_mdp_eval_command(tmp_path):
    code, out = run(tmp_path, "mdp-eval", "--alpha-grid", "0.1", "--mechanism", "bitcoin",
                    "--set", "mdp.max_fork=6")
    assert code == 0
    rows = list(csv.DictReader(open(out / "curves.csv")))
    assert len(rows) == 1 and float(rows[0]["value"]) == pytest.approx(0.1, abs=1e-3)
    assert (out / "plot" / "relative_reward_bitcoin.dat").exists()


def test_sim_and_rewards_demo(tmp_path):
    code, out = run(tmp_path, "sim", "--seed", "1,2", "--set", "protocol.t_block=5", "--set", "protocol.n=4",
                    "--set", "sim.rounds=300", "--set", "sim.trace=true")
    assert code == 0
    assert sorted(p.name for p in (out / "reports").iterdir()) == ["seed-1.json", "seed-2.json"]
    assert set(json.load(open(out / "summary.json"))) == {"1", "2"}
    assert (out / "traces" / "seed-1.jsonl").exists()
    code = main(["rewards-demo", "--out", str(tmp_path / "demo"), "--quiet", "--set", "rewards-demo.rounds=200"])
    assert code == 0
    assert (tmp_path / "demo" / "allocation.csv").exists()


def test_bad_config_writes_nothing(tmp_path):
    ini = tmp_path / "bad.ini"
    ini.write_text("[mdp]\nalpha_grid = 0.1,oops\nbogus = 1\n")
    code, out = run(tmp_path, "mdp-eval", "--config", str(ini))
    assert code == 1
    assert not out.exists()
    assert [p.name for p in tmp_path.iterdir()] == ["bad.ini"]


def test_field_level_errors(tmp_path):
    ini = tmp_path / "bad.ini"
    ini.write_text("[mdp]\nalpha_grid = 0.1,oops\nbogus = 1\n[nope]\nx = 1\n")
    with pytest.raises(ConfigError) as err:
        load_config(ini)
    msg = str(err.value)
    assert "mdp.alpha_grid" in msg and "mdp.bogus" in msg and "[nope]" in msg


def test_invalid_model_parameters_exit_one(tmp_path):
    code, out = run(tmp_path, "mdp-eval", "--alpha-grid", "0.6", "--mechanism", "bitcoin")
    assert code == 1 and not out.exists()


def test_existing_output_is_refused(tmp_path):
    out = tmp_path / "out"
    out.mkdir()
    (out / "keep.txt").write_text("x")
    assert main(["sampling", "--out", str(out), "--quiet"]) == 1
    assert [p.name for p in out.iterdir()] == ["keep.txt"]


def test_output_root_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ROOT_ENV, str(tmp_path / "root"))
    assert main(["sampling", "--quiet"]) == 0
    assert main(["sampling", "--quiet"]) == 0
    runs = sorted(p.name for p in (tmp_path / "root").iterdir())
    assert len(runs) == 2 and runs[0].startswith("sampling-") and runs[1] == runs[0] + "-2"


def test_emit_plot_data(tmp_path):
    with pytest.raises(ValueError):
        emit_plot_data([], tmp_path)
    rows = []
    for mech in ("bitcoin", "rs"):
        rows += sweep("relative_reward", MdpConfig(alpha=0.1, mechanism=mech, max_fork=5), [0.1, 0.3])
    paths = emit_plot_data(rows, tmp_path / "plot")
    assert len(paths) == 2
    tables = [[ln.split() for ln in open(p) if not ln.startswith("#")] for p in paths]
    assert [r[0] for r in tables[0]] == [r[0] for r in tables[1]] == ["0.1", "0.3"]
    assert all(len(r) == 3 and r[2] == r[0] for r in tables[0])
    cens = CurveRow("prs", "censorship", 0.2, 0.5, 6, 6, 0.1, 3)
    (path,) = emit_plot_data([cens], tmp_path / "c")
    assert open(path).read().splitlines()[1] == "# alpha value"
