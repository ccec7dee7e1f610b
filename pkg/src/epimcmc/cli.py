"""Command-line front end.

Subcommands::

    simulate   write a synthetic epidemic (latent trajectory + observations)
    grid       scan the filter log-likelihood/gradient over one parameter
    fit        run MH or NUTS chains, one per seed
    diagnose   convergence statistics and marginals for existing chains

Every command is driven by one TOML config (see :mod:`epimcmc.config`),
writes CSVs (and, unless ``--no-plots`` is given, the matching figures) into
the output directory, echoes the effective configuration, and is a pure
function of (config, input files): re-running reproduces the outputs.  On
failure a machine-readable JSON error line goes to stderr and the exit code
is nonzero.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import diagnostics, plots
from .config import ConfigError, load_config, resolve, write_config_toml
from .models import (
    read_observations_csv,
    simulate_epidemic,
    write_observations_csv,
    write_trajectory_csv,
)
from .particle_filter import FilterError, run_filter
from .samplers import read_chain_csv, run_chain, write_chain_csv

_ERR_CONFIG = 2
_ERR_RUNTIME = 1


def _fail(code: int, kind: str, message: str):
    print(json.dumps({"error": kind, "detail": message}), file=sys.stderr)
    raise SystemExit(code)


def _load(args):
    try:
        config = load_config(args.config)
        return resolve(
            config,
            seed=getattr(args, "seed", None),
            particles=getattr(args, "particles", None),
            sampler=getattr(args, "sampler", None),
            out=getattr(args, "out", None),
        )
    except ConfigError as err:
        _fail(_ERR_CONFIG, "config", str(err))


def _outdir(config) -> Path:
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    write_config_toml(out / "config_resolved.toml", config)
    return out


def cmd_simulate(args) -> None:
    config = _load(args)
    if config.simulate_days is None:
        _fail(_ERR_CONFIG, "config", "simulate needs a [simulate] section")
    out = _outdir(config)
    model = config.build_model(initial=config.simulate_initial)
    trajectory, series = simulate_epidemic(model, config.simulate_days, config.simulate_seed)
    write_trajectory_csv(out / "trajectory.csv", config.model_kind, trajectory, series)
    write_observations_csv(out / "observations.csv", series)
    if not args.no_plots:
        plots.epidemic_figure(config.model_kind, trajectory, series, out / "epidemic.png")
    print(f"wrote {out / 'trajectory.csv'} ({config.simulate_days} days)")


def cmd_grid(args) -> None:
    config = _load(args)
    if not args.lo < args.hi:
        _fail(_ERR_CONFIG, "config", "--lo must be below --hi")
    if args.count < 2:
        _fail(_ERR_CONFIG, "config", "--count must be >= 2")
    valid = ("beta", "gamma", "v") if config.model_kind == "sir" else ("beta", "gamma", "delta")
    if args.param not in valid:
        _fail(_ERR_CONFIG, "config", f"unknown parameter {args.param!r} for {config.model_kind}")
    out = _outdir(config)
    base = config.build_model()
    model = dataclasses.replace(base, inferred=(args.param,))
    series = read_observations_csv(args.observations)
    seed = config.seeds[0]
    fconfig = config.filter_config(seed)
    values = np.linspace(args.lo, args.hi, args.count)
    rows = []
    for i, value in enumerate(values):
        try:
            result = run_filter(
                model, series, fconfig, values=np.array([value]),
                record_trace=args.trace,
            )
        except FilterError as err:
            _fail(_ERR_RUNTIME, "filter", str(err))
        rows.append((value, result.log_likelihood, float(result.gradient[0])))
        if args.trace:
            _write_trace(out / f"filter_trace_{i:03d}.csv", result.trace)
    path = out / f"grid_{args.param}.csv"
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["value", "loglik", "grad"])
        for row in rows:
            writer.writerow([repr(float(x)) for x in row])
    if not args.no_plots:
        true_value = None
        try:
            true_value = config.params.get(args.param)
        except KeyError:
            pass
        arr = np.array(rows)
        plots.grid_figure(args.param, arr[:, 0], arr[:, 1], arr[:, 2],
                          out / f"grid_{args.param}.png", true_value)
    print(f"wrote {path} ({args.count} points, seed {seed})")


def _write_trace(path, trace) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "neff", "resampled", "loglik_so_far"])
        for t, neff, resampled, loglik in trace:
            writer.writerow([t, repr(float(neff)), int(resampled), repr(float(loglik))])


def cmd_fit(args) -> None:
    config = _load(args)
    out = _outdir(config)
    model = config.build_model()
    priors = config.build_priors()
    series = read_observations_csv(args.observations)
    sampler_config = config.sampler_config()
    init = config.initial_values()
    truth = config.truth()

    summaries = []
    labels = []
    chains = []
    for seed in config.seeds:
        chain = run_chain(
            model,
            series,
            priors,
            config.filter_config(seed),
            sampler_config,
            iterations=config.iterations,
            burn_in=config.burn_in,
            init_values=init,
        )
        write_chain_csv(out / f"chain_seed{seed}.csv", chain)
        summaries.append(diagnostics.summarize(chain, truth=truth))
        labels.append(f"seed{seed}")
        chains.append(chain)
    diagnostics.write_summary_csv(out / "fit_summary.csv", summaries, labels)
    _write_mse_table(out / "mse.csv", config, summaries)
    if not args.no_plots:
        plots.trace_figure(
            model.inferred,
            [c.samples for c in chains],
            out / "traces.png",
            truth=truth,
            labels=labels,
        )
    print(f"wrote {len(chains)} chain file(s) to {out}")


def _write_mse_table(path, config, summaries) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["seed", "param", "mse"])
        per_param = {name: [] for name in config.inferred}
        for seed, summary in zip(config.seeds, summaries):
            for j, name in enumerate(summary.param_names):
                writer.writerow([seed, name, repr(float(summary.mse[j]))])
                per_param[name].append(float(summary.mse[j]))
        for name, values in per_param.items():
            writer.writerow(["median", name, repr(float(np.median(values)))])


def cmd_diagnose(args) -> None:
    config = _load(args)
    out = _outdir(config)
    burn_in = config.burn_in if args.burn_in is None else args.burn_in
    truth = {}
    for name in ("beta", "gamma", "delta", "v"):
        try:
            truth[name] = config.params.get(name)
        except KeyError:
            pass
    if "beta" in truth and "gamma" in truth:
        truth["r0"] = truth["beta"] / truth["gamma"]

    try:
        chains = [read_chain_csv(path, burn_in=burn_in) for path in args.chains]
    except (OSError, ValueError) as err:
        _fail(_ERR_RUNTIME, "chain-file", str(err))

    summaries = []
    labels = [Path(p).stem for p in args.chains]
    for chain in chains:
        chain_truth = np.array([truth[n] for n in chain.param_names]) if all(
            n in truth for n in chain.param_names
        ) else None
        summaries.append(diagnostics.summarize(chain, truth=chain_truth))
    diagnostics.write_summary_csv(out / "summary.csv", summaries, labels)

    # per-lag autocorrelations of the first chain's parameters
    first = chains[0]
    post = first.post_burn()
    max_lag = min(args.max_lag, len(post) - 1)
    lags = np.arange(max_lag + 1)
    columns = {
        name: diagnostics.acf(post[:, j], max_lag) for j, name in enumerate(first.param_names)
    }
    diagnostics.write_acf_csv(out / "acf.csv", lags, columns)

    marginals = {name: post[:, j] for j, name in enumerate(first.param_names)}
    if "beta" in marginals and "gamma" in marginals:
        marginals["r0"] = marginals["beta"] / marginals["gamma"]
    for name, series in marginals.items():
        edges, counts = diagnostics.histogram(series, args.bins)
        diagnostics.write_histogram_csv(out / f"hist_{name}.csv", edges, counts)

    if not args.no_plots:
        plots.acf_figure(lags, columns, out / "acf.png")
        plots.marginal_figure(marginals, args.bins, out / "marginals.png", truth=truth)
        plots.trace_figure(
            first.param_names,
            [c.samples for c in chains],
            out / "traces.png",
            truth=[truth.get(n) for n in first.param_names]
            if all(n in truth for n in first.param_names)
            else None,
            labels=labels,
        )
    print(f"wrote diagnostics for {len(chains)} chain(s) to {out}")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="epimcmc",
        description="Particle MCMC for stochastic SIR/SEIR models",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, observations=False):
        p.add_argument("--config", required=True, help="TOML experiment config")
        p.add_argument("--seed", type=int, help="override the config seed(s)")
        p.add_argument("--out", help="output directory (overrides [run] out)")
        p.add_argument("--no-plots", action="store_true", help="skip figure rendering")
        if observations:
            p.add_argument(
                "--observations", required=True,
                help="observation CSV (from `simulate`: observations.csv or trajectory.csv)",
            )

    p = sub.add_parser("simulate", help="simulate a synthetic epidemic")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("grid", help="log-likelihood/gradient scan over one parameter")
    common(p, observations=True)
    p.add_argument("--particles", type=int, help="override the particle count")
    p.add_argument("--param", required=True, help="parameter to scan")
    p.add_argument("--lo", type=float, required=True)
    p.add_argument("--hi", type=float, required=True)
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--trace", action="store_true", help="write per-step filter traces")
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("fit", help="run MCMC chains, one per seed")
    common(p, observations=True)
    p.add_argument("--particles", type=int, help="override the particle count")
    p.add_argument("--sampler", choices=("mh", "nuts"), help="override the sampler kind")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("diagnose", help="convergence statistics for chain CSVs")
    common(p)
    p.add_argument("chains", nargs="+", help="chain CSV files")
    p.add_argument("--burn-in", type=int, help="override the config burn-in")
    p.add_argument("--max-lag", type=int, default=100)
    p.add_argument("--bins", type=int, default=30)
    p.set_defaults(func=cmd_diagnose)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        args.func(args)
    except SystemExit:
        raise
    except ConfigError as err:
        _fail(_ERR_CONFIG, "config", str(err))
    except FilterError as err:
        _fail(_ERR_RUNTIME, "filter", str(err))
    except (OSError, ValueError) as err:
        _fail(_ERR_RUNTIME, "runtime", str(err))
    return 0


if __name__ == "__main__":
    sys.exit(main())
