import json
import subprocess
import sys

import numpy as np
import pytest

from openkrotov import cli
from openkrotov.dynamics import ControlField, TimeGrid
from openkrotov.experiments import (
    CSV_COLUMNS, ExperimentConfig, default_gammas, figure_configs, load_pulse, node_samples,
    optimize_config, read_csv, records_to_csv, replay, run_sweep, save_pulse,
    time_integrated_population, trial_label,
)

SMALL = dict(grid={"T": 10.0, "N": 300}, optimizer={"lambda": 1.0, "max_iters": 15, "tol": 1e-7},
             fidelity={"Ns": 300, "seed": 9})


def small_config(**kw):
    return ExperimentConfig(**{**SMALL, "gamma_list": [0.0, 0.05], **kw})


def data_rows(text):
    return [ln for ln in text.splitlines() if not ln.startswith("#")]


def test_default_gamma_grid():
    g = default_gammas()
    assert len(g) == 21 and g[0] == 0.0 and g[-1] == 0.1 and 0.01 in g


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(system="qudit")
    with pytest.raises(ValueError):
        ExperimentConfig(gamma_list=[-0.1])
    with pytest.raises(ValueError):
        ExperimentConfig(task="teleport")
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"sytem": "qubit"})
    with pytest.raises(ValueError):
        ExperimentConfig(system="qubit", channel="leak_i")


@pytest.mark.parametrize("spelling", [{"kind": "resonant", "level": 3}, ["resonant", 3],
                                      "resonant:3", "resonant(3)"])
def test_trial_spellings(spelling):
    cfg = ExperimentConfig("four_level", "leak_ii", trial=spelling, **SMALL)
    assert cfg.trial == ("resonant", 3) and trial_label(cfg.trial) == "resonant(3)"


def test_config_json_round_trip(tmp_path):
    cfg = ExperimentConfig("four_level", "leak_ii", [0.0, 0.1], trial=("resonant", 3), **SMALL)
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg.to_dict()))
    assert ExperimentConfig.load(path) == cfg


def test_pulse_round_trip_bit_exact(tmp_path):
    grid = TimeGrid(10.0, 50)
    rng = np.random.default_rng(1)
    f = ControlField(grid, rng.normal(size=50) * 10.0 ** rng.integers(-300, 300, 50),
                     np.linspace(0, 1, 50), rng.normal(size=50))
    path = save_pulse(tmp_path / "p.json", f, {"system": "qubit", "gamma": 0.01})
    g, meta = load_pulse(path)
    assert np.array_equal(g.samples, f.samples)
    assert np.array_equal(g.envelope, f.envelope) and np.array_equal(g.reference, f.reference)
    assert meta["system"] == "qubit" and meta["grid"] == {"T": 10.0, "N": 50}
    text = path.read_text()
    first = json.loads(text)["samples"]
    assert len(first) == 50
    raw = text.split('"samples": [')[1].split(",")[0]
    assert len(raw.lstrip("-").split("e")[0].replace(".", "")) == 17


def test_pulse_grid_mismatch(tmp_path):
    f = ControlField(TimeGrid(10.0, 20), np.zeros(20))
    path = save_pulse(tmp_path / "p.json", f)
    with pytest.raises(ValueError):
        load_pulse(path, TimeGrid(10.0, 40))
    (tmp_path / "bad.json").write_text('{"format": "other"}')
    with pytest.raises(ValueError):
        load_pulse(tmp_path / "bad.json")


def test_sweep_records_and_gamma_zero_consistency():
    recs = run_sweep(small_config())
    assert [r.gamma for r in recs] == [0.0, 0.05]
    assert recs[0].F_unitary == pytest.approx(recs[0].F_nonunitary, abs=1e-6)
    for r in recs:
        assert 0 <= r.F_unitary <= 1 and 0 <= r.F_nonunitary <= 1
        assert r.stderr_u is not None and r.seed == 9


def test_state_prep_sweep_no_worse():
    recs = run_sweep(small_config(task="state_prep", optimizer={"lambda": 0.05,
                                                               "max_iters": 40}))
    for r in recs:
        assert r.F_nonunitary >= r.F_unitary - 1e-6
        assert r.stderr_u is None


def test_csv_schema_and_determinism(tmp_path):
    cfg = small_config()
    a = records_to_csv(run_sweep(cfg), tmp_path / "a.csv")
    b = records_to_csv(run_sweep(cfg), tmp_path / "b.csv")
    assert a.startswith("#")
    assert data_rows(a)[0] == ",".join(CSV_COLUMNS)
    assert data_rows(a) == data_rows(b)
    rows = read_csv(tmp_path / "a.csv")
    assert rows[1]["gamma"] == 0.05 and rows[1]["task"] == "gate"


def test_thread_pool_matches_serial():
    cfg = small_config(gamma_list=[0.0, 0.02, 0.05])
    serial = records_to_csv(run_sweep(cfg, threads=1))
    pooled = records_to_csv(run_sweep(cfg, threads=2))
    assert data_rows(serial) == data_rows(pooled)


def test_optimize_and_replay(tmp_path):
    cfg = small_config(system="four_level", channel="leak_iv")
    res, meta = optimize_config(cfg, 0.1, tmp_path / "p.json")
    report = replay(tmp_path / "p.json")
    assert report["max_abs_diff"] <= 1e-10
    assert meta["iterations"] == res.iterations and meta["gamma"] == 0.1


def test_figure_protocols_resolve():
    for fig in (1, 2, 3, 5, 6, 7):
        cfgs = figure_configs(fig, seed=5)
        assert cfgs and all(c.fidelity["seed"] == 5 for c in cfgs.values())
    assert len(figure_configs(1)) == 4
    assert any(c.state_set == "goerz" for c in figure_configs(3).values())
    with pytest.raises(ValueError):
        figure_configs(4)


def test_node_samples_and_population_integral():
    assert np.array_equal(node_samples(np.array([1.0, 2.0])), [1.0, 2.0, 2.0])

    class T:
        grid = TimeGrid(2.0, 2)

        @staticmethod
        def populations():
            return np.array([[0, 1], [0, 1], [0, 1]], float)
    assert time_integrated_population(T, 1) == pytest.approx(2.0)


def test_cli_parser_surfaces():
    p = cli.build_parser()
    a = p.parse_args(["--seed", "42", "--threads", "2", "reproduce", "--figure", "7",
                      "--out", "x"])
    assert (a.seed, a.threads, a.figure, a.out) == (42, 2, 7, "x")
    assert p.parse_args(["replay", "--pulse", "f.json"]).pulse == "f.json"
    assert p.parse_args(["optimize", "--config", "c.json"]).config == "c.json"
    assert p.parse_args(["sweep", "--config", "c.json"]).command == "sweep"
    with pytest.raises(SystemExit):
        p.parse_args(["reproduce", "--figure", "4", "--out", "x"])
    with pytest.raises(SystemExit):
        p.parse_args(["--threads", "0", "sweep", "--config", "c"])


def test_cli_end_to_end(tmp_path):
    cfg = small_config(output=str(tmp_path / "s.csv"))
    (tmp_path / "c.json").write_text(json.dumps(cfg.to_dict()))
    run = lambda *a: subprocess.run([sys.executable, "-m", "openkrotov.cli", *a],
                                    capture_output=True, text=True, check=True)
    run("--seed", "11", "sweep", "--config", str(tmp_path / "c.json"))
    rows = read_csv(tmp_path / "s.csv")
    assert len(rows) == 2 and rows[0]["seed"] == 11
    run("optimize", "--config", str(tmp_path / "c.json"), "--out", str(tmp_path / "p.json"))
    out = run("replay", "--pulse", str(tmp_path / "p.json"))
    assert json.loads(out.stdout)["max_abs_diff"] <= 1e-10
