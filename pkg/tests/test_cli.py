import csv
import json

import numpy as np
import pytest

from roulette_mcmc import cli
from roulette_mcmc.config import ExperimentConfig, config_from_dict, load_config
from roulette_mcmc.errors import ConfigError, DatasetMismatch
from roulette_mcmc.experiments import (compare_runs, diagnose, read_chain_csv, run_experiment,
                                       substream)
from roulette_mcmc.ising import IsingLattice

from .conftest import DATA_3X3

METHODS = ["roulette_geometric", "poisson_geometric", "exponential_series", "exchange_exact",
           "exchange_approx", "exact_reference"]


def ising_cfg(tmp_path, method, n_iters=40, seed=3, **est):
    data = tmp_path / "d3.txt"
    data.write_text(DATA_3X3)
    estimator = {"n_samples": 5, "n_temps": 10, "pilot_draws": 10, "pilot_step": 0.25}
    estimator.update(est)
    return config_from_dict({
        "run": {"model": "ising", "method": method, "n_iters": n_iters, "seed": seed,
                "output_dir": str(tmp_path / method)},
        "ising": {"n": 3, "data": str(data)},
        "estimator": estimator,
        "exchange": {"gibbs_steps": 200},
    })


def bingham_cfg(tmp_path, method, n_iters=30, seed=4):
    return config_from_dict({
        "run": {"model": "bingham", "method": method, "n_iters": n_iters, "seed": seed},
        "bingham": {"n_points": 5},
        "estimator": {"is_samples": 50},
    })


def write_toml(path, text):
    path.write_text(text)
    return str(path)


# --- configuration ---------------------------------------------------------------


def test_defaults_match_reference_settings():
    cfg = ExperimentConfig()
    assert (cfg.estimator.n_samples, cfg.estimator.n_temps) == (100, 1000)
    assert cfg.run.n_iters == 20000 and cfg.burn_in == 10000
    assert cfg.exchange.gibbs_steps == 50000
    assert cfg.bingham.prior == [-5.0, 0.0]


@pytest.mark.parametrize("raw", [
    {"run": {"modle": "ising"}},
    {"extra": {}},
    {"run": {"method": "magic"}},
    {"run": {"n_iters": 10, "burn_in": 10}},
    {"run": {"seed": -1}},
    {"run": {"n_iters": "many"}},
    {"run": {"n_iters": True}},
    {"ising": {"prior": [1.0, 0.0]}},
    {"bingham": {"prior": [-5.0, 1.0]}},
    {"bingham": {"thin": 10}},
    {"estimator": {"kappa_target": 1.0}},
    {"estimator": {"q_min": 0.9, "q_max": 0.5}},
    {"estimator": {"pilot_draws": 1}},
    {"proposal": {"scale": 0.0}},
    {"run": "ising"},
])
def test_bad_configs_rejected(raw):
    with pytest.raises(ConfigError):
        config_from_dict(raw)


def test_load_toml_and_json(tmp_path):
    p = write_toml(tmp_path / "a.toml", '[run]\nmodel = "bingham"\nn_iters = 7\n'
                   '[estimator]\nq = 1\n')
    cfg = load_config(p)
    assert cfg.run.model == "bingham" and cfg.estimator.q == 1.0
    j = tmp_path / "a.json"
    j.write_text(json.dumps({"run": {"n_iters": 9}}))
    assert load_config(j).run.n_iters == 9
    with pytest.raises(ConfigError):
        load_config(write_toml(tmp_path / "b.toml", "[run\n"))
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.toml")


def test_digest_ignores_paths_only():
    a = config_from_dict({"run": {"output_dir": "x", "workers": 2}})
    b = config_from_dict({"run": {"output_dir": "y"}})
    c = config_from_dict({"run": {"seed": 1}})
    assert a.digest() == b.digest() != c.digest()


def test_substreams_independent_of_each_other():
    a = substream(5, "data").random(3)
    assert np.array_equal(a, substream(5, "data").random(3))
    assert not np.array_equal(a, substream(5, "pilot").random(3))
    assert not np.array_equal(a, substream(5, "data", 1).random(3))


# --- runs -----------------------------------------------------------------------


@pytest.mark.parametrize("method", METHODS)
def test_every_ising_arm_runs(tmp_path, method):
    cfg = ising_cfg(tmp_path, method)
    s = run_experiment(cfg)
    out = tmp_path / method
    rows = list(csv.reader((out / "chain.csv").open()))
    assert rows[0] == ["iter", "beta", "sign", "log_abs_estimate", "accepted", "n_terms",
                       "n_normalizer_draws"]
    assert len(rows) == 41
    assert s["schema"] == 1 and s["method"] == method
    for key in ("mean", "sd", "ess", "r_hat", "negative_fraction", "acceptance_rate",
                "wall_time", "config_digest", "dataset_digest", "seed"):
        assert key in s
    assert json.loads((out / "summary.json").read_text())["config_digest"] == cfg.digest()
    assert "dataset digest" in (out / "run.log").read_text()


@pytest.mark.parametrize("method", METHODS)
def test_every_bingham_arm_runs(tmp_path, method):
    s = run_experiment(bingham_cfg(tmp_path, method), tmp_path / method)
    assert s["param_names"] == ["lambda3"]
    assert -5.0 <= s["mean"] <= 0.0
    assert (tmp_path / method / "data.csv").exists()
    if method in ("roulette_geometric", "poisson_geometric", "exponential_series"):
        assert s["negative_count"] == 0


def test_bingham_roulette_q_default_and_override(tmp_path):
    s = run_experiment(bingham_cfg(tmp_path, "roulette_geometric", n_iters=5), tmp_path)
    assert s["extra"]["roulette_q"] == 0.95
    cfg = bingham_cfg(tmp_path, "roulette_geometric", n_iters=5)
    cfg.estimator.q = 0.9
    assert run_experiment(cfg, tmp_path / "fixed")["extra"]["roulette_q"] == 0.9


def test_exact_reference_smoke(tmp_path):
    cfg = ising_cfg(tmp_path, "exact_reference", n_iters=10)
    run_experiment(cfg)
    names, th, signs = read_chain_csv(tmp_path / "exact_reference" / "chain.csv")
    assert names == ["beta"] and th.shape == (10, 1) and np.all(signs == 1)


def test_runs_are_bit_identical(tmp_path):
    cfg = ising_cfg(tmp_path, "roulette_geometric", n_iters=60)
    a = run_experiment(cfg, tmp_path / "a")
    b = run_experiment(cfg, tmp_path / "b")
    assert (tmp_path / "a" / "chain.csv").read_bytes() == (tmp_path / "b" / "chain.csv").read_bytes()
    a.pop("wall_time"), b.pop("wall_time")
    assert a == b


def test_simulated_dataset_written(tmp_path):
    cfg = config_from_dict({"run": {"method": "exact_reference", "n_iters": 5},
                            "ising": {"n": 4}})
    s = run_experiment(cfg, tmp_path)
    lat = IsingLattice.load(tmp_path / "data.txt")
    assert lat.n == 4 and len(s["dataset_digest"]) == 64


def test_data_size_mismatch(tmp_path):
    cfg = ising_cfg(tmp_path, "exact_reference")
    cfg.ising.n = 4
    with pytest.raises(ConfigError):
        run_experiment(cfg)


def test_empty_run(tmp_path):
    s = run_experiment(ising_cfg(tmp_path, "exact_reference", n_iters=0))
    assert s["acceptance_rate"] is None and "mean" not in s


# --- compare and diagnose -----------------------------------------------------------


def test_compare_identical_and_mismatched(tmp_path):
    cfg = ising_cfg(tmp_path, "exact_reference", n_iters=200)
    run_experiment(cfg, tmp_path / "a")
    p = str(tmp_path / "a" / "summary.json")
    rep = compare_runs([p, p])
    assert list(rep["z_scores"].values()) == [0.0]
    other = json.loads((tmp_path / "a" / "summary.json").read_text())
    other["dataset_digest"] = "0" * 64
    (tmp_path / "o.json").write_text(json.dumps(other))
    with pytest.raises(DatasetMismatch):
        compare_runs([p, str(tmp_path / "o.json")])


def test_diagnose_recomputes_summary(tmp_path):
    cfg = ising_cfg(tmp_path, "exact_reference", n_iters=300)
    s = run_experiment(cfg, tmp_path / "a")
    d = diagnose(tmp_path / "a" / "chain.csv")
    assert d["mean"] == s["mean"] and d["ess"] == s["ess"]
    assert d["n_records"] == 300 and d["burn_in"] == 150
    with pytest.raises(ValueError):
        diagnose(tmp_path / "a" / "chain.csv", burn_in=300)


# --- command line ----------------------------------------------------------------


def test_cli_end_to_end(tmp_path, capsys):
    lat = tmp_path / "d.txt"
    assert cli.main(["ising-simulate", "--n", "3", "--beta", "0.2", "--seed", "1",
                     "--out", str(lat)]) == 0
    assert IsingLattice.load(lat).n == 3
    cfgs = []
    for m in ("exact_reference", "exchange_exact"):
        cfgs.append(write_toml(tmp_path / f"{m}.toml", f"""
[run]
method = "{m}"
n_iters = 400
seed = 2
[ising]
n = 3
data = "{lat}"
"""))
        assert cli.main(["run", cfgs[-1], "--output-dir", str(tmp_path / m)]) == 0
    out = capsys.readouterr().out
    assert '"mean"' in out and "INFO" not in out
    assert cli.main(["compare", str(tmp_path / "exact_reference" / "summary.json"),
                     str(tmp_path / "exchange_exact" / "summary.json")]) == 0
    assert "pairwise z-scores" in capsys.readouterr().out
    assert cli.main(["compare", "--json", str(tmp_path / "exact_reference" / "summary.json"),
                     str(tmp_path / "exchange_exact" / "summary.json")]) == 0
    assert "z_scores" in json.loads(capsys.readouterr().out)
    assert cli.main(["diagnose", str(tmp_path / "exchange_exact" / "chain.csv")]) == 0
    assert json.loads(capsys.readouterr().out)["n_records"] == 400


def test_cli_exit_codes(tmp_path, capsys):
    bad = write_toml(tmp_path / "bad.toml", "[run]\nbogus = 1\n")
    assert cli.main(["run", bad]) == 2
    assert "unknown key" in capsys.readouterr().err
    assert cli.main(["diagnose", str(tmp_path / "nope.csv")]) == 2
    assert cli.main(["ising-simulate", "--n", "12", "--beta", "0.9", "--alpha", "0.01",
                     "--max-sweeps", "2", "--out", str(tmp_path / "x.txt")]) == 4
    assert cli.main(["ising-simulate", "--beta", "-1", "--out", str(tmp_path / "x.txt")]) == 3


def test_cli_capped_run_is_reported(tmp_path):
    cfg = write_toml(tmp_path / "c.toml", f"""
[run]
method = "roulette_geometric"
n_iters = 20
output_dir = "{tmp_path / 'o'}"
[ising]
n = 3
[estimator]
n_samples = 2
n_temps = 2
pilot_draws = 3
pilot_step = 0.5
safety_cap = 1
q = 1.0
""")
    # q = 1 with a one-term cap: every estimate is truncated by the cap
    assert cli.main(["run", cfg]) == 0
    s = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert s["capped_count"] == 20
