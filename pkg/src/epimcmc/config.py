"""Experiment configuration: one TOML file drives every CLI command.

Schema (all keys validated, unknown keys rejected)::

    [model]                      # required
    kind = "sir"                 # "sir" | "seir"
    population = 5000
    beta = 0.254                 # true / base parameter values
    gamma = 0.111
    v = 1.246                    # sir only
    # delta = 0.4                # seir only
    inferred = ["beta", "gamma"]
    # noise_scale = "variance"   # reading of the sqrt(rate)/P noise scale:
    #                            # "variance" (default) or "sd"

    [observation]                # required
    b = 0.25
    phi = 1.07
    sigma = 0.0012

    [simulate]                   # needed by the `simulate` command
    days = 125
    seed = 1
    initial = [0.998, 0.002, 0.0]            # fixed fractions, or:
    # initial_uniform = { e = [lo, hi], i = [lo, hi] }

    [filter]                     # required by grid/fit
    particles = 500
    resample_fraction = 0.5      # threshold = fraction * particles
    initial = [0.998, 0.002, 0.0]

    [sampler]                    # required by fit
    kind = "mh"                  # "mh" | "nuts"
    iterations = 50
    burn_in = 0
    step_sizes = [0.005, 0.001]  # mh, one per inferred parameter
    step_size = 0.0055           # nuts leapfrog step
    max_tree_depth = 10
    initial = [0.15, 0.21]       # optional starting point

    [priors]                     # optional per-parameter overrides
    beta = { dist = "halfnormal", scale = 0.5 }
    gamma = { dist = "normal", mean = 4.0, sd = 5.0 }
    # { dist = "uniform", low = ..., high = ... }

    [run]
    seeds = [1, 2, 3]
    out = "results"

The effective configuration (defaults resolved) is echoed to the output
directory as TOML and loads back to the identical configuration.
"""

from __future__ import annotations

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .models import (
    DEFAULT_NOISE_READING,
    NOISE_READINGS,
    FixedInitial,
    ObservationModel,
    ParameterVector,
    SeirModel,
    SirModel,
    UniformInitial,
)
from .particle_filter import FilterConfig
from .samplers import (
    HalfNormalPrior,
    MhConfig,
    NutsConfig,
    TruncatedNormalPrior,
    UniformPrior,
    default_prior,
)

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "write_config_toml"]


class ConfigError(ValueError):
    pass


def _check_keys(table: dict, allowed, context: str) -> None:
    unknown = set(table) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{context}]: {', '.join(sorted(unknown))}")


def _require(table: dict, key: str, context: str):
    if key not in table:
        raise ConfigError(f"missing key {key!r} in [{context}]")
    return table[key]


def _initial_spec(table: dict, kind: str, context: str):
    has_fixed = "initial" in table
    has_uniform = "initial_uniform" in table
    if has_fixed == has_uniform:
        raise ConfigError(f"[{context}] needs exactly one of 'initial' or 'initial_uniform'")
    if has_fixed:
        values = table["initial"]
        return FixedInitial(tuple(float(x) for x in values))
    spec = table["initial_uniform"]
    _check_keys(spec, {"e", "i"}, f"{context}.initial_uniform")
    i_lo, i_hi = (float(x) for x in _require(spec, "i", f"{context}.initial_uniform"))
    if kind == "seir":
        e_lo, e_hi = (float(x) for x in _require(spec, "e", f"{context}.initial_uniform"))
        return UniformInitial(i_lo, i_hi, e_lo, e_hi)
    return UniformInitial(i_lo, i_hi)


def _parse_prior(spec: dict, name: str):
    _check_keys(spec, {"dist", "scale", "mean", "sd", "low", "high"}, f"priors.{name}")
    dist = _require(spec, "dist", f"priors.{name}")
    if dist == "halfnormal":
        return HalfNormalPrior(float(_require(spec, "scale", f"priors.{name}")))
    if dist == "normal":
        return TruncatedNormalPrior(
            float(_require(spec, "mean", f"priors.{name}")),
            float(_require(spec, "sd", f"priors.{name}")),
        )
    if dist == "uniform":
        return UniformPrior(
            float(_require(spec, "low", f"priors.{name}")),
            float(_require(spec, "high", f"priors.{name}")),
        )
    raise ConfigError(f"unknown prior distribution {dist!r} for {name}")


_DEFAULT_INITIALS = {"beta": 0.15, "gamma": 0.21}


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description; see the module docstring for the
    file schema."""

    raw: dict

    model_kind: str = "sir"
    population: int = 0
    params: ParameterVector = None
    inferred: tuple = ()
    noise_reading: str = DEFAULT_NOISE_READING
    observation: ObservationModel = None

    simulate_days: int | None = None
    simulate_seed: int | None = None
    simulate_initial: object = None

    particles: int | None = None
    resample_fraction: float = 0.5
    filter_initial: object = None

    sampler_kind: str | None = None
    iterations: int | None = None
    burn_in: int = 0
    mh_step_sizes: tuple | None = None
    nuts_step_size: float | None = None
    max_tree_depth: int = 10
    sampler_initial: tuple | None = None

    priors: dict = None
    seeds: tuple = (1,)
    out: str = "results"

    # --- builders ---------------------------------------------------------

    def build_model(self, initial=None):
        initial = initial if initial is not None else self.filter_initial
        if initial is None:
            raise ConfigError("no particle initial-state spec configured ([filter])")
        cls = SirModel if self.model_kind == "sir" else SeirModel
        return cls(
            params=self.params,
            observation=self.observation,
            initial=initial,
            inferred=self.inferred,
            noise_reading=self.noise_reading,
        )

    def build_priors(self) -> tuple:
        out = []
        for name in self.inferred:
            if name in self.priors:
                out.append(self.priors[name])
            else:
                out.append(default_prior(name))
        return tuple(out)

    def filter_config(self, seed: int) -> FilterConfig:
        if self.particles is None:
            raise ConfigError("missing [filter] section")
        return FilterConfig(
            n_particles=self.particles,
            master_seed=seed,
            resample_threshold=self.resample_fraction * self.particles,
        )

    def sampler_config(self):
        if self.sampler_kind is None:
            raise ConfigError("missing [sampler] section")
        if self.sampler_kind == "mh":
            if self.mh_step_sizes is None:
                raise ConfigError("[sampler] kind 'mh' needs step_sizes")
            if len(self.mh_step_sizes) != len(self.inferred):
                raise ConfigError("need one MH step size per inferred parameter")
            return MhConfig(step_sizes=self.mh_step_sizes)
        if self.nuts_step_size is None:
            raise ConfigError("[sampler] kind 'nuts' needs step_size")
        return NutsConfig(step_size=self.nuts_step_size, max_tree_depth=self.max_tree_depth)

    def initial_values(self) -> np.ndarray:
        """Chain starting point: configured values, else the replication
        defaults (0.15, 0.21) with prior medians for anything else."""
        if self.sampler_initial is not None:
            return np.asarray(self.sampler_initial, dtype=float)
        priors = self.build_priors()
        out = []
        for name, prior in zip(self.inferred, priors):
            if name in _DEFAULT_INITIALS:
                out.append(_DEFAULT_INITIALS[name])
            else:
                out.append(prior.median())
        return np.asarray(out, dtype=float)

    def truth(self) -> np.ndarray:
        return self.params.to_array(self.inferred)


def _parse(data: dict) -> ExperimentConfig:
    _check_keys(
        data, {"model", "observation", "simulate", "filter", "sampler", "priors", "run"}, "root"
    )

    model = _require(data, "model", "root")
    _check_keys(
        model,
        {"kind", "population", "beta", "gamma", "delta", "v", "inferred", "noise_scale"},
        "model",
    )
    kind = _require(model, "kind", "model")
    if kind not in ("sir", "seir"):
        raise ConfigError(f"model kind must be 'sir' or 'seir', got {kind!r}")
    population = int(_require(model, "population", "model"))
    params = ParameterVector(
        beta=float(_require(model, "beta", "model")),
        gamma=float(_require(model, "gamma", "model")),
        delta=float(model["delta"]) if "delta" in model else None,
        v=float(model["v"]) if "v" in model else None,
    )
    noise_reading = str(model.get("noise_scale", DEFAULT_NOISE_READING))
    if noise_reading not in NOISE_READINGS:
        raise ConfigError(f"model noise_scale must be one of {NOISE_READINGS}")
    valid_names = ("beta", "gamma", "v") if kind == "sir" else ("beta", "gamma", "delta")
    inferred = tuple(model.get("inferred", ["beta", "gamma"] if kind == "sir" else ["beta", "gamma", "delta"]))
    for name in inferred:
        if name not in valid_names:
            raise ConfigError(f"cannot infer {name!r} in a {kind} model")

    obs = _require(data, "observation", "root")
    _check_keys(obs, {"b", "phi", "sigma"}, "observation")
    observation = ObservationModel(
        b=float(_require(obs, "b", "observation")),
        phi=float(_require(obs, "phi", "observation")),
        sigma=float(_require(obs, "sigma", "observation")),
        population=population,
    )

    sim = data.get("simulate", {})
    simulate_days = simulate_seed = simulate_initial = None
    if sim:
        _check_keys(sim, {"days", "seed", "initial", "initial_uniform"}, "simulate")
        simulate_days = int(_require(sim, "days", "simulate"))
        simulate_seed = int(sim.get("seed", 1))
        simulate_initial = _initial_spec(sim, kind, "simulate")

    filt = data.get("filter", {})
    particles = None
    resample_fraction = 0.5
    filter_initial = None
    if filt:
        _check_keys(filt, {"particles", "resample_fraction", "initial", "initial_uniform"}, "filter")
        particles = int(_require(filt, "particles", "filter"))
        resample_fraction = float(filt.get("resample_fraction", 0.5))
        if not 0.0 < resample_fraction <= 1.0:
            raise ConfigError("resample_fraction must lie in (0, 1]")
        filter_initial = _initial_spec(filt, kind, "filter")

    smp = data.get("sampler", {})
    sampler_kind = None
    iterations = None
    burn_in = 0
    mh_step_sizes = None
    nuts_step_size = None
    max_tree_depth = 10
    sampler_initial = None
    if smp:
        _check_keys(
            smp,
            {"kind", "iterations", "burn_in", "step_sizes", "step_size", "max_tree_depth", "initial"},
            "sampler",
        )
        sampler_kind = _require(smp, "kind", "sampler")
        if sampler_kind not in ("mh", "nuts"):
            raise ConfigError("sampler kind must be 'mh' or 'nuts'")
        iterations = int(_require(smp, "iterations", "sampler"))
        burn_in = int(smp.get("burn_in", 0))
        if not 0 <= burn_in < iterations:
            raise ConfigError("need iterations > burn_in >= 0")
        if "step_sizes" in smp:
            mh_step_sizes = tuple(float(x) for x in smp["step_sizes"])
        if "step_size" in smp:
            nuts_step_size = float(smp["step_size"])
        max_tree_depth = int(smp.get("max_tree_depth", 10))
        if "initial" in smp:
            sampler_initial = tuple(float(x) for x in smp["initial"])
            if len(sampler_initial) != len(inferred):
                raise ConfigError("sampler initial needs one value per inferred parameter")

    priors = {}
    for name, spec in data.get("priors", {}).items():
        if name not in valid_names:
            raise ConfigError(f"prior given for unknown parameter {name!r}")
        priors[name] = _parse_prior(spec, name)

    run = data.get("run", {})
    _check_keys(run, {"seeds", "out"}, "run")
    seeds = tuple(int(s) for s in run.get("seeds", [1]))
    if not seeds:
        raise ConfigError("[run] seeds must not be empty")
    out = str(run.get("out", "results"))

    return ExperimentConfig(
        raw=data,
        model_kind=kind,
        population=population,
        params=params,
        inferred=inferred,
        noise_reading=noise_reading,
        observation=observation,
        simulate_days=simulate_days,
        simulate_seed=simulate_seed,
        simulate_initial=simulate_initial,
        particles=particles,
        resample_fraction=resample_fraction,
        filter_initial=filter_initial,
        sampler_kind=sampler_kind,
        iterations=iterations,
        burn_in=burn_in,
        mh_step_sizes=mh_step_sizes,
        nuts_step_size=nuts_step_size,
        max_tree_depth=max_tree_depth,
        sampler_initial=sampler_initial,
        priors=priors,
        seeds=seeds,
        out=out,
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        with path.open("rb") as fh:
            data = tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    return _parse(data)


def resolve(config: ExperimentConfig, **overrides) -> ExperimentConfig:
    """Apply CLI overrides (seed, particles, sampler, out) and re-validate."""
    data = {k: dict(v) if isinstance(v, dict) else v for k, v in config.raw.items()}
    if overrides.get("seed") is not None:
        data.setdefault("run", {})
        data["run"] = dict(data["run"])
        data["run"]["seeds"] = [int(overrides["seed"])]
        if "simulate" in data:
            data["simulate"] = dict(data["simulate"])
            data["simulate"]["seed"] = int(overrides["seed"])
    if overrides.get("particles") is not None:
        if "filter" not in data:
            raise ConfigError("--particles given but config has no [filter] section")
        data["filter"] = dict(data["filter"])
        data["filter"]["particles"] = int(overrides["particles"])
    if overrides.get("sampler") is not None:
        if "sampler" not in data:
            raise ConfigError("--sampler given but config has no [sampler] section")
        data["sampler"] = dict(data["sampler"])
        data["sampler"]["kind"] = overrides["sampler"]
    if overrides.get("out") is not None:
        data["run"] = dict(data.get("run", {}))
        data["run"]["out"] = str(overrides["out"])
    return _parse(data)


# --- TOML echo ---------------------------------------------------------------


def _toml_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return repr(value)
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    if isinstance(value, dict):
        inner = ", ".join(f"{k} = {_toml_value(v)}" for k, v in value.items())
        return "{ " + inner + " }"
    raise TypeError(f"cannot serialise {type(value)} to TOML")


def write_config_toml(path, config: ExperimentConfig) -> None:
    """Echo the effective configuration; ``load_config`` reads it back."""
    data = dict(config.raw)
    data.setdefault("run", {})
    data["run"] = {"seeds": list(config.seeds), "out": config.out}
    if config.particles is not None:
        data["filter"] = dict(data.get("filter", {}))
        data["filter"]["particles"] = config.particles
        data["filter"]["resample_fraction"] = config.resample_fraction
    lines = []
    for section, table in data.items():
        lines.append(f"[{section}]")
        for key, value in table.items():
            lines.append(f"{key} = {_toml_value(value)}")
        lines.append("")
    Path(path).write_text("\n".join(lines))
