import csv
import json
from pathlib import Path

import numpy as np
import pytest

from epimcmc.cli import main
from epimcmc.config import ConfigError, load_config, write_config_toml

BASE_CONFIG = """
[model]
kind = "sir"
population = 5000
beta = 0.254
gamma = 0.111
v = 1.246
inferred = ["beta", "gamma"]

[observation]
b = 0.25
phi = 1.07
sigma = 0.0012

[simulate]
days = {days}
seed = 5
initial = [0.998, 0.002, 0.0]

[filter]
particles = 20
initial = [0.998, 0.002, 0.0]

[sampler]
kind = "mh"
iterations = 8
burn_in = 2
step_sizes = [0.005, 0.001]
initial = [0.2, 0.15]

[run]
seeds = [1, 2]
out = "{out}"
"""


def write_config(tmp_path, days=12, out=None):
    out = out or (tmp_path / "results")
    path = tmp_path / "config.toml"
    path.write_text(BASE_CONFIG.format(days=days, out=str(out).replace("\\", "/")))
    return path, Path(out)


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# --- simulate -------------------------------------------------------------


def test_simulate_outputs(tmp_path):
    config, out = write_config(tmp_path)
    main(["simulate", "--config", str(config)])
    rows = read_rows(out / "trajectory.csv")
    assert len(rows) == 13  # day 0 plus 12 observed days
    assert rows[0]["day"] == "0" and rows[0]["y"] == ""
    obs = read_rows(out / "observations.csv")
    assert len(obs) == 12
    assert all(float(r["y"]) > 0 for r in obs)
    assert (out / "epidemic.png").exists()
    assert (out / "config_resolved.toml").exists()


def test_simulate_single_day(tmp_path):
    config, out = write_config(tmp_path, days=1)
    main(["simulate", "--config", str(config), "--no-plots"])
    assert len(read_rows(out / "observations.csv")) == 1
    assert not (out / "epidemic.png").exists()


def test_simulate_byte_identical_rerun(tmp_path):
    config, out = write_config(tmp_path)
    main(["simulate", "--config", str(config), "--no-plots"])
    first = (out / "trajectory.csv").read_bytes()
    main(["simulate", "--config", str(config), "--no-plots"])
    assert (out / "trajectory.csv").read_bytes() == first


# --- grid ------------------------------------------------------------------


def _simulated(tmp_path, days=12):
    config, out = write_config(tmp_path, days=days)
    main(["simulate", "--config", str(config), "--no-plots"])
    return config, out, out / "observations.csv"


def test_grid_two_points(tmp_path):
    config, out, obs = _simulated(tmp_path)
    main([
        "grid", "--config", str(config), "--observations", str(obs),
        "--param", "beta", "--lo", "0.25", "--hi", "0.26", "--count", "2", "--no-plots",
    ])
    rows = read_rows(out / "grid_beta.csv")
    assert len(rows) == 2
    assert float(rows[0]["value"]) == 0.25
    assert float(rows[1]["value"]) == 0.26
    for row in rows:
        assert np.isfinite(float(row["loglik"])) and np.isfinite(float(row["grad"]))


def test_grid_unknown_parameter(tmp_path, capsys):
    config, out, obs = _simulated(tmp_path)
    with pytest.raises(SystemExit) as exc:
        main([
            "grid", "--config", str(config), "--observations", str(obs),
            "--param", "zeta", "--lo", "0.1", "--hi", "0.2", "--count", "2",
        ])
    assert exc.value.code != 0
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "config"


def test_grid_trace_files(tmp_path):
    config, out, obs = _simulated(tmp_path)
    main([
        "grid", "--config", str(config), "--observations", str(obs),
        "--param", "beta", "--lo", "0.25", "--hi", "0.26", "--count", "2",
        "--trace", "--no-plots",
    ])
    trace = read_rows(out / "filter_trace_000.csv")
    assert len(trace) == 12
    assert set(trace[0]) == {"t", "neff", "resampled", "loglik_so_far"}


# --- fit --------------------------------------------------------------------


def test_fit_outputs_per_seed(tmp_path):
    config, out, obs = _simulated(tmp_path)
    main(["fit", "--config", str(config), "--observations", str(obs), "--no-plots"])
    for seed in (1, 2):
        rows = read_rows(out / f"chain_seed{seed}.csv")
        assert len(rows) == 8
        assert list(rows[0]) == ["iter", "beta", "gamma", "delta", "loglik", "accepted", "cum_seconds"]
        assert all(r["delta"] == "" for r in rows)
    summary = read_rows(out / "fit_summary.csv")
    assert len(summary) == 4  # two chains x two parameters
    mse_rows = read_rows(out / "mse.csv")
    assert [r["seed"] for r in mse_rows][-2:] == ["median", "median"]


def test_fit_deterministic_chains(tmp_path):
    config, out, obs = _simulated(tmp_path)
    main(["fit", "--config", str(config), "--observations", str(obs), "--no-plots", "--seed", "3"])
    first = (out / "chain_seed3.csv").read_text()
    main(["fit", "--config", str(config), "--observations", str(obs), "--no-plots", "--seed", "3"])
    second = (out / "chain_seed3.csv").read_text()

    def strip_timing(text):
        return ["," .join(line.split(",")[:-1]) for line in text.splitlines()]

    assert strip_timing(first) == strip_timing(second)


def test_fit_sampler_override_nuts(tmp_path):
    config, out, obs = _simulated(tmp_path)
    text = (tmp_path / "config.toml").read_text().replace(
        'kind = "mh"', 'kind = "mh"\nstep_size = 0.002\nmax_tree_depth = 3'
    )
    (tmp_path / "config.toml").write_text(text)
    main([
        "fit", "--config", str(config), "--observations", str(obs),
        "--sampler", "nuts", "--seed", "1", "--no-plots",
    ])
    rows = read_rows(out / "chain_seed1.csv")
    assert len(rows) == 8


# --- diagnose ------------------------------------------------------------------


def test_diagnose_outputs(tmp_path):
    config, out, obs = _simulated(tmp_path)
    main(["fit", "--config", str(config), "--observations", str(obs), "--no-plots"])
    main([
        "diagnose", "--config", str(config), str(out / "chain_seed1.csv"),
        str(out / "chain_seed2.csv"), "--burn-in", "2", "--max-lag", "100", "--no-plots",
    ])
    acf_rows = read_rows(out / "acf.csv")
    # the chain has 6 post-burn-in samples, so the lag axis is capped
    assert len(acf_rows) == 6
    assert float(acf_rows[0]["beta"]) == 1.0
    for name in ("beta", "gamma", "r0"):
        hist = read_rows(out / f"hist_{name}.csv")
        assert sum(int(r["count"]) for r in hist) == 6
    assert (out / "summary.csv").exists()


def test_diagnose_full_lag_axis(tmp_path):
    config, out, obs = _simulated(tmp_path)
    text = (tmp_path / "config.toml").read_text().replace(
        "iterations = 8", "iterations = 120"
    )
    (tmp_path / "config.toml").write_text(text)
    main(["fit", "--config", str(config), "--observations", str(obs), "--no-plots", "--seed", "1"])
    main([
        "diagnose", "--config", str(config), str(out / "chain_seed1.csv"),
        "--burn-in", "2", "--no-plots",
    ])
    assert len(read_rows(out / "acf.csv")) == 101  # lags 0..100


def test_diagnose_malformed_chain(tmp_path, capsys):
    config, out = write_config(tmp_path)
    bad = tmp_path / "bad.csv"
    bad.write_text("not,a,chain\n1,2,3\n")
    with pytest.raises(SystemExit) as exc:
        main(["diagnose", "--config", str(config), str(bad)])
    assert exc.value.code != 0
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "chain-file"


def test_plots_rendered_by_default(tmp_path):
    config, out, obs = _simulated(tmp_path)
    main(["fit", "--config", str(config), "--observations", str(obs)])
    assert (out / "traces.png").exists()
    main(["diagnose", "--config", str(config), str(out / "chain_seed1.csv"), "--burn-in", "2"])
    assert (out / "acf.png").exists()
    assert (out / "marginals.png").exists()


# --- config handling ---------------------------------------------------------------


def test_config_unknown_key_rejected(tmp_path):
    path = tmp_path / "bad.toml"
    path.write_text(BASE_CONFIG.format(days=5, out="x") + "\n[model2]\nz = 1\n")
    with pytest.raises(ConfigError):
        load_config(path)
    path.write_text(BASE_CONFIG.format(days=5, out="x").replace("b = 0.25", "b = 0.25\nbad_key = 1"))
    with pytest.raises(ConfigError):
        load_config(path)


def test_config_echo_round_trip(tmp_path):
    config_path, out = write_config(tmp_path)
    config = load_config(config_path)
    echo = tmp_path / "echo.toml"
    write_config_toml(echo, config)
    reloaded = load_config(echo)
    assert reloaded.params == config.params
    assert reloaded.inferred == config.inferred
    assert reloaded.seeds == config.seeds
    assert reloaded.particles == config.particles
    assert reloaded.mh_step_sizes == config.mh_step_sizes
    assert reloaded.simulate_days == config.simulate_days


def test_missing_config_file(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "--config", str(tmp_path / "nope.toml")])
    assert exc.value.code == 2
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "config"


def test_inferring_v_allowed_in_library_configs(tmp_path):
    path = tmp_path / "v.toml"
    path.write_text(
        BASE_CONFIG.format(days=5, out="x").replace(
            'inferred = ["beta", "gamma"]', 'inferred = ["beta", "v"]'
        ).replace('step_sizes = [0.005, 0.001]', 'step_sizes = [0.005, 0.01]')
        + '\n[priors]\nv = { dist = "uniform", low = 0.5, high = 2.0 }\n'
    )
    config = load_config(path)
    assert config.inferred == ("beta", "v")
    assert config.build_priors()[1].low == 0.5
