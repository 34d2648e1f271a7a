import csv
import json
import math

import numpy as np
import pytest

from satattack import cli
from satattack.harness import (
    OUT_ENV,
    ConfigError,
    ScenarioConfig,
    default_out_dir,
    postselect_samples,
    reproduce_figure,
    run_scenario,
)
from satattack.reporting import ordered_map, to_jsonable, write_column_csv
from satattack.units import RngHandle

SMALL_FIG3 = {"delta_step": 2.0, "distance_step": 20.0}


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def summary(out, scenario):
    return json.loads((out / f"{scenario}_summary.json").read_text())


# --- configuration ---------------------------------------------------------------

@pytest.mark.parametrize(
    "data",
    [
        {"scenario": "nope"},
        {},
        {"scenario": "fig3", "bogus": 1},
        {"scenario": "attack-run", "n": 100},
        {"scenario": "fig3", "threads": 0},
        {"scenario": "fig3", "distances": [-1.0]},
        {"scenario": "fig3", "system": {"eta": 2.0}},
        {"scenario": "fig3", "system": {"colour": 1}},
        {"scenario": "fig3", "seed": -1},
    ],
)
def test_invalid_config(data):
    with pytest.raises(ConfigError):
        ScenarioConfig.from_mapping(data)


def test_overrides_and_defaults(tmp_path):
    cfg = ScenarioConfig.from_mapping({"scenario": "fig3", "seed": 3, "n": "1e5"}, seed=9, out_dir=tmp_path, threads=None)
    assert cfg.seed == 9 and cfg.n == 100_000 and cfg.threads == 1 and cfg.out_dir == tmp_path


def test_env_default_out_dir(monkeypatch, tmp_path):
    monkeypatch.setenv(OUT_ENV, str(tmp_path / "env"))
    assert default_out_dir() == tmp_path / "env"
    assert ScenarioConfig("fig2").out_dir == tmp_path / "env"
    monkeypatch.delenv(OUT_ENV)
    assert default_out_dir().name == "satattack_out"


# --- scenarios -------------------------------------------------------------------

def test_keyrate_sweep_schema(tmp_path):
    cfg = ScenarioConfig("keyrate-sweep", distances=(0, 25, 300), out_dir=tmp_path)
    rep = run_scenario(cfg)
    lines = rep.paths["keyrate"].read_text().splitlines()
    assert lines[0] == "distance_km,v_a,xi,i_ab,chi_be,rate"
    assert len(lines) == 4
    rows = read_csv(rep.paths["keyrate"])
    assert float(rows[1]["rate"]) > 0 > float(rows[2]["rate"])


def test_fig3_outputs_and_infeasible_rows(tmp_path):
    rep = run_scenario(ScenarioConfig("fig3", distances=(25.0,), options={**SMALL_FIG3, "delta_max": 200.0}, out_dir=tmp_path))
    rows = read_csv(rep.paths["xi_vs_delta"])
    assert len(rows) == 101
    bad = [r for r in rows if r["status"] != "ok"]
    assert bad and all(float(r["delta"]) > 40 for r in bad)
    assert rep.summary["infeasible_rows"] == len(bad)
    assert float(rows[0]["xi_hat"]) == pytest.approx(2.1, abs=1e-6)
    assert read_csv(rep.paths["t_hat_vs_distance"])[0]["status"] == "ok"


def test_same_seed_byte_identical(tmp_path):
    def go(sub, threads):
        out = tmp_path / sub
        run_scenario(ScenarioConfig("fig3", distances=(5.0, 25.0), options=SMALL_FIG3, out_dir=out, threads=threads))
        run_scenario(ScenarioConfig("fig2", options={"n_per_point": 2000}, seed=4, out_dir=out))
        run_scenario(ScenarioConfig("attack-run", distances=(25.0,), attack={"delta": 19.0}, n=20_000, seed=4,
                                    options={"write_block": True}, out_dir=out, threads=threads))
        return out

    a, b = go("a", 1), go("b", 3)
    names = sorted(p.name for p in a.iterdir() if p.suffix == ".csv")
    assert names == sorted(p.name for p in b.iterdir() if p.suffix == ".csv")
    assert len(names) == 4
    for n in names:
        assert (a / n).read_bytes() == (b / n).read_bytes()
    assert not [p for p in a.iterdir() if p.name.startswith(".")]


def test_summary_embeds_config_and_seed(tmp_path):
    run_scenario(ScenarioConfig("fig2", seed=11, options={"n_per_point": 2000}, out_dir=tmp_path))
    s = summary(tmp_path, "fig2")
    assert s["seed"] == 11 and s["config"]["seed"] == 11
    assert s["config"]["system"]["eta"] == 0.55
    assert s["mean_plateau_v"] == pytest.approx(0.5, abs=0.01)


def test_attack_run_strategy_two(tmp_path):
    rep = run_scenario(ScenarioConfig("attack-run", distances=(35.0,), attack={"delta": 19.5, "strategy": 2}, n=100_000,
                                      out_dir=tmp_path))
    r = rep.summary["report"]
    assert r["analytic"]["t_hat_sat"] == pytest.approx(r["inputs"]["transmission"], rel=1e-6)
    assert r["inputs"]["gain"] > math.sqrt(2)


def test_attack_run_rejects_gain_and_strategy(tmp_path):
    with pytest.raises(ConfigError):
        run_scenario(ScenarioConfig("attack-run", distances=(25.0,), attack={"gain": 1.0, "strategy": 2}, n=20_000,
                                    out_dir=tmp_path))


def test_postselect_samples_report():
    x = np.clip(RngHandle(1).generator().normal(17.0, 2.0, 200_000), -20.0, 20.0)
    rep, selected = postselect_samples(x, 20.0, floor_repeats=3)
    assert rep["n"] == x.size and rep["n_selected"] == selected.size
    assert 0 < rep["kept_fraction"] < 1
    assert np.all(np.abs(selected) < 20.0)
    assert rep["l2_distance"] < 1e-3 + rep["l2_noise_floor"]["mean"]


def test_reproduce_unknown_figure(tmp_path):
    with pytest.raises(ConfigError):
        reproduce_figure(7, out_dir=tmp_path)


def test_reproduce_figure_two(tmp_path):
    paths = reproduce_figure(2, seed=1, out_dir=tmp_path)
    rows = read_csv(paths["sweep"])
    assert len(rows) == 61
    assert paths["summary"].exists()


# --- reporting helpers -----------------------------------------------------------

def test_jsonable_and_column_csv(tmp_path):
    assert to_jsonable({"a": np.float64(math.nan), "b": (np.int64(2), tmp_path)}) == {"a": None, "b": [2, str(tmp_path)]}
    p = write_column_csv(tmp_path / "c.csv", "x_b", [0.1, 1 / 3])
    assert p.read_text().splitlines() == ["x_b", "0.10000000000000001", "0.33333333333333331"]
    assert oct(p.stat().st_mode & 0o777) == "0o644"


def test_ordered_map_preserves_order():
    assert ordered_map(lambda x: x * x, range(20), threads=4) == [x * x for x in range(20)]


# --- command line ----------------------------------------------------------------

def run_cli(args, capsys):
    code = cli.main(args)
    out, err = capsys.readouterr()
    return code, out, err


def test_cli_keyrate(tmp_path, capsys):
    code, out, _ = run_cli(["keyrate", "--distance-km", "25", "--xi", "0.1", "--out", str(tmp_path)], capsys)
    assert code == 0 and json.loads(out)["ok"]
    assert len(read_csv(tmp_path / "keyrate-sweep.csv")) == 1


def test_cli_keyrate_fixed_va(tmp_path, capsys):
    code, _, _ = run_cli(["keyrate", "--distance-km", "25", "--xi", "0.1", "--v-a", "20", "--out", str(tmp_path)], capsys)
    assert code == 0
    assert float(read_csv(tmp_path / "keyrate-sweep.csv")[0]["v_a"]) == 20.0


def test_cli_attack(tmp_path, capsys):
    code, _, _ = run_cli(["attack", "--distance-km", "25", "--delta", "19", "--strategy", "1", "-n", "20000",
                          "--write-block", "--seed", "2", "--out", str(tmp_path)], capsys)
    assert code == 0
    assert summary(tmp_path, "attack-run")["report"]["inputs"]["seed"] == 2
    assert (tmp_path / "attack-run_block.csv").exists()


def test_cli_usage_errors(tmp_path, capsys):
    code, _, err = run_cli(["attack", "--distance-km", "25", "--delta", "1", "--gain", "1", "-n", "10",
                            "--out", str(tmp_path)], capsys)
    assert code == 2 and json.loads(err)["error"] == "usage"
    code, _, err = run_cli(["simulate", "--config", str(tmp_path / "missing.json")], capsys)
    assert code == 2
    with pytest.raises(SystemExit) as exc:
        cli.main(["reproduce-figure", "7"])
    assert exc.value.code == 2


def test_cli_infeasible_strategy_two(tmp_path, capsys):
    code, _, err = run_cli(["attack", "--distance-km", "25", "--delta", "1e6", "--strategy", "2", "-n", "20000",
                            "--out", str(tmp_path)], capsys)
    assert code == 1 and json.loads(err.splitlines()[-1])["error"] == "run"


def test_cli_simulate_config(tmp_path, capsys):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"scenario": "keyrate-sweep", "seed": 5, "distances": [10, 20], "system": {"v_a": 8.0},
                               "options": {"schedule": False}}))
    code, _, _ = run_cli(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")], capsys)
    assert code == 0
    s = summary(tmp_path / "o", "keyrate-sweep")
    assert s["seed"] == 5 and s["config"]["system"]["v_a"] == 8.0


def test_cli_postselect(tmp_path, capsys):
    x = np.clip(RngHandle(3).generator().normal(17.0, 2.0, 50_000), -20.0, 20.0)
    write_column_csv(tmp_path / "in.csv", "x_b", x)
    code, _, _ = run_cli(["postselect", "--input", str(tmp_path / "in.csv"), "--out", str(tmp_path)], capsys)
    assert code == 0
    sel = np.loadtxt(tmp_path / "postselect_selected.csv", skiprows=1)
    assert 0 < sel.size < x.size
    assert summary(tmp_path, "postselect")["report"]["n"] == x.size


def test_cli_postselect_bad_column(tmp_path, capsys):
    (tmp_path / "in.csv").write_text("y\n1.0\n")
    code, _, _ = run_cli(["postselect", "--input", str(tmp_path / "in.csv"), "--out", str(tmp_path)], capsys)
    assert code == 2


def test_cli_uses_env_out_dir(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv(OUT_ENV, str(tmp_path / "env"))
    code, _, _ = run_cli(["keyrate", "--distance-km", "5", "--xi", "0.0"], capsys)
    assert code == 0 and (tmp_path / "env" / "keyrate-sweep.csv").exists()
