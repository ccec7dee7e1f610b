"""Stochastic SIR/SEIR dynamics, observation density, and their derivatives.

States are arrays whose last axis holds compartment fractions in fixed order:

* SIR:  ``(s, i, r)``   with ``r`` the residual compartment
* SEIR: ``(s, e, i, r)`` with ``r`` the residual compartment

All step functions are vectorised over leading axes, so a single state of
shape ``(C,)`` and a particle cloud of shape ``(N, C)`` go through the same
code path.

Noise enters each per-day rate ``x`` as ``eps_x = sqrt(x) / P * z_x`` with
``z_x`` a standard normal held fixed under common random numbers; states are
therefore differentiable in the parameters with the draws frozen, and the
reparameterised noise contributes ``d eps_x / d x = z_x / (2 P sqrt(x))`` to
the sensitivities.

After a noisy step any compartment outside [0, 1] is clipped, the residual
compartment absorbs the correction, and sensitivities follow the exact chain
rule of that projection (clipped coordinates get zero rows).  Clip events are
counted and surfaced through the particle filter.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .rng import CRNLayout, Purpose, StreamAddress

__all__ = [
    "ParameterVector",
    "ObservationModel",
    "ObservationSeries",
    "FixedInitial",
    "UniformInitial",
    "SirModel",
    "SeirModel",
    "sir_step",
    "seir_step",
    "step_sensitivity",
    "log_obs_density",
    "d_log_obs_density",
    "gaussian_logpdf_derivs",
    "simulate_epidemic",
    "r0",
    "write_trajectory_csv",
    "read_observations_csv",
]

PARAMETER_NAMES = ("beta", "gamma", "delta", "v")

# compartment column layout
SIR_COMPARTMENTS = ("s", "i", "r")
SEIR_COMPARTMENTS = ("s", "e", "i", "r")


@dataclass(frozen=True)
class ParameterVector:
    """Named positive model parameters.

    ``delta`` (incubation exit rate) is SEIR-only, ``v`` (mixing exponent)
    is SIR-only; unused entries stay ``None``.
    """

    beta: float
    gamma: float
    delta: float | None = None
    v: float | None = None

    def __post_init__(self):
        for name in PARAMETER_NAMES:
            value = getattr(self, name)
            if value is None:
                continue
            if not math.isfinite(value) or value <= 0.0:
                raise ValueError(f"parameter {name} must be finite and > 0, got {value}")

    def get(self, name: str) -> float:
        if name not in PARAMETER_NAMES:
            raise KeyError(f"unknown parameter {name!r}")
        value = getattr(self, name)
        if value is None:
            raise KeyError(f"parameter {name!r} is not set")
        return value

    def with_values(self, names: tuple[str, ...], values) -> "ParameterVector":
        """Copy with the named entries replaced (used to bind inferred values)."""
        return replace(self, **{n: float(x) for n, x in zip(names, values, strict=True)})

    def to_array(self, names: tuple[str, ...]) -> np.ndarray:
        return np.array([self.get(n) for n in names], dtype=float)


@dataclass(frozen=True)
class ObservationModel:
    """Log-scale syndromic observation model.

    ``log y_t ~ Normal(b * i_t**phi, sigma**2)`` with known constants
    ``b`` (reporting scale), ``phi`` (power exponent), ``sigma``
    (log-scale standard deviation).  ``population`` is the population size
    shared with the dynamics noise scale.
    """

    b: float
    phi: float
    sigma: float
    population: int

    def __post_init__(self):
        for name in ("b", "phi", "sigma"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"observation parameter {name} must be > 0")
        if self.population <= 0:
            raise ValueError("population must be a positive integer")


@dataclass(frozen=True)
class ObservationSeries:
    """Strictly increasing integer days paired with positive observations."""

    days: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        days = np.asarray(self.days, dtype=int)
        values = np.asarray(self.values, dtype=float)
        if days.ndim != 1 or days.shape != values.shape:
            raise ValueError("days and values must be matching 1-D arrays")
        if len(days) == 0:
            raise ValueError("observation series is empty")
        if np.any(np.diff(days) <= 0):
            raise ValueError("observation days must be strictly increasing")
        if days[0] < 1:
            raise ValueError("observation days start at 1")
        if np.any(values <= 0.0) or not np.all(np.isfinite(values)):
            raise ValueError("observations must be positive and finite")
        object.__setattr__(self, "days", days)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return len(self.days)


# --- noisy discrete-time steps -------------------------------------------


# The per-day rate noise is eps = scale(rate) * z with z ~ N(0, 1).  The
# sqrt(rate)/P expression can be read as the standard deviation (default) or
# as the variance of eps; both readings live here, each with its rate
# derivative, and every step function takes the reading as an argument.
NOISE_READINGS = ("sd", "variance")


def _noise_coeffs(rate: float, population: int, reading: str):
    """Noise scale and its derivative w.r.t. the rate parameter."""
    if reading == "variance":
        scale = (rate**0.25) / math.sqrt(population)
        d_scale = 0.25 * rate**-0.75 / math.sqrt(population)
    elif reading == "sd":
        scale = math.sqrt(rate) / population
        d_scale = 1.0 / (2.0 * population * math.sqrt(rate))
    else:
        raise ValueError(f"unknown noise reading {reading!r}")
    return scale, d_scale


def _finalize(raw, raw_sens):
    """Project raw compartments back onto the simplex.

    Coordinates outside [0, 1] are clipped (their sensitivity rows zeroed),
    the residual (last) compartment is recomputed as one minus the rest, and
    if that residual is negative the remaining mass is renormalised, with
    sensitivities following the exact derivative of the renormalisation.
    Returns ``(states, sens, n_clamped)``.
    """
    oob = (raw < 0.0) | (raw > 1.0)
    n_clamped = int(np.count_nonzero(oob))
    if n_clamped == 0:
        return raw, raw_sens, 0

    bad = oob.any(axis=-1)
    others = np.clip(raw[..., :-1], 0.0, 1.0)
    total = others.sum(axis=-1)
    resid = 1.0 - total

    neg = bad & (resid < 0.0)
    scale = np.where(neg, 1.0 / np.where(neg, total, 1.0), 1.0)
    others = others * scale[..., None]
    resid = np.where(neg, 0.0, resid)

    states = raw.copy()
    states[..., :-1] = np.where(bad[..., None], others, raw[..., :-1])
    states[..., -1] = np.where(bad, resid, raw[..., -1])

    if raw_sens is None:
        return states, None, n_clamped

    sens = raw_sens.copy()
    clipped_rows = oob[..., :-1, None] & bad[..., None, None]
    sens_others = np.where(clipped_rows, 0.0, raw_sens[..., :-1, :])
    # residual absorbs: d r = -sum of surviving rows
    resid_row = -sens_others.sum(axis=-2)
    # renormalised rows: d (x_j / S) = (dx_j * S - x_j * dS) / S**2
    if np.any(neg):
        x = np.clip(raw[..., :-1], 0.0, 1.0)
        s_tot = x.sum(axis=-1)[..., None, None]
        d_tot = sens_others.sum(axis=-2)[..., None, :]
        rescaled = (sens_others * s_tot - x[..., :, None] * d_tot) / s_tot**2
        sens_others = np.where(neg[..., None, None], rescaled, sens_others)
        resid_row = np.where(neg[..., None], 0.0, resid_row)
    sens[..., :-1, :] = np.where(bad[..., None, None], sens_others, raw_sens[..., :-1, :])
    sens[..., -1, :] = np.where(bad[..., None], resid_row, raw_sens[..., -1, :])
    return states, sens, n_clamped


def _sir_raw(state, params, z, population, with_partials, inferred, reading):
    s = state[..., 0]
    i = state[..., 1]
    beta, gamma, v = params.get("beta"), params.get("gamma"), params.get("v")
    zb = z[..., 0]
    zg = z[..., 1]
    scale_b, dscale_b = _noise_coeffs(beta, population, reading)
    scale_g, dscale_g = _noise_coeffs(gamma, population, reading)
    eps_b = scale_b * zb
    eps_g = scale_g * zg

    s_pow = np.where(s > 0.0, s, 1.0) ** v * (s > 0.0)
    flow = beta * i * s_pow

    raw = np.empty(state.shape)
    raw[..., 0] = s - flow + eps_b
    raw[..., 1] = i + flow - gamma * i - eps_b + eps_g
    raw[..., 2] = 1.0 - raw[..., 0] - raw[..., 1]
    if not with_partials:
        return raw, None, None

    # state Jacobian rows for s' and i'; r' = 1 - s' - i'
    ds_pow = np.where(s > 0.0, v * np.where(s > 0.0, s, 1.0) ** (v - 1.0), 0.0)
    jac = np.zeros(state.shape[:-1] + (3, 3))
    jac[..., 0, 0] = 1.0 - beta * i * ds_pow
    jac[..., 0, 1] = -beta * s_pow
    jac[..., 1, 0] = beta * i * ds_pow
    jac[..., 1, 1] = 1.0 + beta * s_pow - gamma
    jac[..., 2, :] = -(jac[..., 0, :] + jac[..., 1, :])

    dtheta = np.zeros(state.shape[:-1] + (3, len(inferred)))
    log_s = np.where(s > 0.0, np.log(np.where(s > 0.0, s, 1.0)), 0.0)
    for k, name in enumerate(inferred):
        if name == "beta":
            d_eps = dscale_b * zb
            dtheta[..., 0, k] = -i * s_pow + d_eps
            dtheta[..., 1, k] = i * s_pow - d_eps
        elif name == "gamma":
            d_eps = dscale_g * zg
            dtheta[..., 1, k] = -i + d_eps
        elif name == "v":
            dtheta[..., 0, k] = -flow * log_s
            dtheta[..., 1, k] = flow * log_s
        else:
            raise KeyError(f"parameter {name!r} not part of the SIR dynamics")
        dtheta[..., 2, k] = -(dtheta[..., 0, k] + dtheta[..., 1, k])
    return raw, jac, dtheta


def _seir_raw(state, params, z, population, with_partials, inferred, reading):
    s = state[..., 0]
    e = state[..., 1]
    i = state[..., 2]
    r = state[..., 3]
    beta, gamma, delta = params.get("beta"), params.get("gamma"), params.get("delta")
    zb, zg, zd = z[..., 0], z[..., 1], z[..., 2]
    scale_b, dscale_b = _noise_coeffs(beta, population, reading)
    scale_g, dscale_g = _noise_coeffs(gamma, population, reading)
    scale_d, dscale_d = _noise_coeffs(delta, population, reading)
    eps_b = scale_b * zb
    eps_g = scale_g * zg
    eps_d = scale_d * zd

    flow = beta * i * s
    raw = np.empty(state.shape)
    raw[..., 0] = s - flow + eps_b
    raw[..., 1] = e + flow - delta * e - eps_b + eps_d
    raw[..., 2] = i + delta * e - gamma * i + eps_g - eps_d
    raw[..., 3] = r + gamma * i - eps_g
    if not with_partials:
        return raw, None, None

    jac = np.zeros(state.shape[:-1] + (4, 4))
    jac[..., 0, 0] = 1.0 - beta * i
    jac[..., 0, 2] = -beta * s
    jac[..., 1, 0] = beta * i
    jac[..., 1, 1] = 1.0 - delta
    jac[..., 1, 2] = beta * s
    jac[..., 2, 1] = delta
    jac[..., 2, 2] = 1.0 - gamma
    jac[..., 3, 2] = gamma
    jac[..., 3, 3] = 1.0

    dtheta = np.zeros(state.shape[:-1] + (4, len(inferred)))
    for k, name in enumerate(inferred):
        if name == "beta":
            d_eps = dscale_b * zb
            dtheta[..., 0, k] = -i * s + d_eps
            dtheta[..., 1, k] = i * s - d_eps
        elif name == "gamma":
            d_eps = dscale_g * zg
            dtheta[..., 2, k] = -i + d_eps
            dtheta[..., 3, k] = i - d_eps
        elif name == "delta":
            d_eps = dscale_d * zd
            dtheta[..., 1, k] = -e + d_eps
            dtheta[..., 2, k] = e - d_eps
        else:
            raise KeyError(f"parameter {name!r} not part of the SEIR dynamics")
    return raw, jac, dtheta


_RAW_STEPS = {"sir": _sir_raw, "seir": _seir_raw}
N_CHANNELS = {"sir": 2, "seir": 3}
N_COMPARTMENTS = {"sir": 3, "seir": 4}


def _check_step_inputs(kind, state, z):
    state = np.asarray(state, dtype=float)
    z = np.asarray(z, dtype=float)
    if state.shape[-1] != N_COMPARTMENTS[kind]:
        raise ValueError(f"{kind} state needs {N_COMPARTMENTS[kind]} compartments")
    if z.shape[-1] != N_CHANNELS[kind]:
        raise ValueError(f"{kind} step needs {N_CHANNELS[kind]} noise channels")
    if not (np.all(np.isfinite(state)) and np.all(np.isfinite(z))):
        raise ValueError("state and noise draws must be finite")
    return state, z


DEFAULT_NOISE_READING = "sd"


def sir_step(state, params: ParameterVector, z, population: int, noise_reading=DEFAULT_NOISE_READING):
    """One noisy SIR day; returns the clamped next state."""
    state, z = _check_step_inputs("sir", state, z)
    raw, _, _ = _sir_raw(state, params, z, population, False, (), noise_reading)
    out, _, _ = _finalize(raw, None)
    return out


def seir_step(state, params: ParameterVector, z, population: int, noise_reading=DEFAULT_NOISE_READING):
    """One noisy SEIR day; returns the clamped next state."""
    state, z = _check_step_inputs("seir", state, z)
    raw, _, _ = _seir_raw(state, params, z, population, False, (), noise_reading)
    out, _, _ = _finalize(raw, None)
    return out


def propagate(kind, state, sens, params, z, population, inferred, noise_reading=DEFAULT_NOISE_READING):
    """Advance states and, when ``sens`` is given, their parameter Jacobians.

    ``sens`` has shape ``(..., C, K)`` with rows ordered like the compartments
    and columns ordered like ``inferred``.  Returns
    ``(state, sens, n_clamped)``.
    """
    state, z = _check_step_inputs(kind, state, z)
    with_partials = sens is not None
    raw, jac, dtheta = _RAW_STEPS[kind](
        state, params, z, population, with_partials, inferred, noise_reading
    )
    raw_sens = None
    if with_partials:
        sens = np.asarray(sens, dtype=float)
        if sens.shape[-2:] != (state.shape[-1], len(inferred)):
            raise ValueError("sensitivity matrix shape does not match state/inferred")
        raw_sens = jac @ sens + dtheta
    return _finalize(raw, raw_sens)


def step_sensitivity(state, sens, params, z, population, kind, inferred, noise_reading=DEFAULT_NOISE_READING):
    """Propagate the compartment-by-parameter Jacobian through one step."""
    _, new_sens, _ = propagate(kind, state, sens, params, z, population, inferred, noise_reading)
    return new_sens


# --- observation density ---------------------------------------------------


def _obs_mean(infected, obs: ObservationModel):
    infected = np.asarray(infected, dtype=float)
    # i = 0 maps to mean 0 for any positive exponent
    safe = np.where(infected > 0.0, infected, 1.0)
    return obs.b * np.where(infected > 0.0, safe**obs.phi, 0.0)


def log_obs_density(y: float, infected, obs: ObservationModel):
    """Gaussian log-density of ``log y`` around ``b * i**phi``."""
    if y <= 0.0 or not math.isfinite(y):
        raise ValueError(f"observation must be positive and finite, got {y}")
    infected = np.asarray(infected, dtype=float)
    if np.any(infected < 0.0):
        raise ValueError("infected fraction must be >= 0")
    resid = math.log(y) - _obs_mean(infected, obs)
    return -0.5 * math.log(2.0 * math.pi * obs.sigma**2) - resid**2 / (2.0 * obs.sigma**2)


def d_log_obs_density(y: float, infected, d_infected, obs: ObservationModel):
    """Gradient of :func:`log_obs_density` w.r.t. the inferred parameters.

    ``d_infected`` is ``d i / d theta`` with shape ``(..., K)``; the
    observation constants are known, so the only route is through the
    infected fraction.
    """
    if y <= 0.0 or not math.isfinite(y):
        raise ValueError(f"observation must be positive and finite, got {y}")
    infected = np.asarray(infected, dtype=float)
    d_infected = np.asarray(d_infected, dtype=float)
    resid = math.log(y) - _obs_mean(infected, obs)
    safe = np.where(infected > 0.0, infected, 1.0)
    dmean_di = obs.b * obs.phi * np.where(infected > 0.0, safe ** (obs.phi - 1.0), 0.0)
    return (resid / obs.sigma**2 * dmean_di)[..., None] * d_infected


def gaussian_logpdf_derivs(x, mu, cov):
    """Derivatives of the multivariate Gaussian log-density.

    Returns ``(d/dx, d/dmu, d/dcov)`` where ``d/dx = -C^{-1}(x - mu)``,
    ``d/dmu = -d/dx`` and
    ``d/dcov = -(C^{-1} - C^{-1}(x-mu)(x-mu)^T C^{-1}) / 2``.
    Raises ``ValueError`` when the covariance is not symmetric positive
    definite.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    if x.shape != mu.shape or cov.shape != (x.size, x.size):
        raise ValueError("inconsistent shapes for x, mu, cov")
    if not np.allclose(cov, cov.T):
        raise ValueError("covariance must be symmetric")
    try:
        np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as err:
        raise ValueError("covariance must be positive definite") from err
    cov_inv = np.linalg.inv(cov)
    diff = x - mu
    d_x = -cov_inv @ diff
    d_cov = -0.5 * (cov_inv - cov_inv @ np.outer(diff, diff) @ cov_inv)
    return d_x, -d_x, d_cov


def r0(params: ParameterVector) -> float:
    """Basic reproduction number beta / gamma."""
    if params.gamma == 0.0:
        raise ValueError("gamma must be nonzero")
    return params.beta / params.gamma


# --- initial-state specifications -----------------------------------------


@dataclass(frozen=True)
class FixedInitial:
    """Every particle starts from the same compartment fractions."""

    values: tuple[float, ...]

    def __post_init__(self):
        values = tuple(float(x) for x in self.values)
        if any(x < 0.0 or x > 1.0 for x in values):
            raise ValueError("initial fractions must lie in [0, 1]")
        if abs(sum(values) - 1.0) > 1e-9:
            raise ValueError("initial fractions must sum to 1")
        object.__setattr__(self, "values", values)

    def draw(self, kind: str, n: int, stream) -> np.ndarray:
        if len(self.values) != N_COMPARTMENTS[kind]:
            raise ValueError(f"{kind} initial state needs {N_COMPARTMENTS[kind]} entries")
        return np.tile(np.array(self.values), (n, 1))


@dataclass(frozen=True)
class UniformInitial:
    """Latent seeds drawn per particle: ``i0`` (and ``e0`` for SEIR) uniform,
    ``s0`` the remainder, ``r0 = 0``."""

    i_low: float
    i_high: float
    e_low: float | None = None
    e_high: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.i_low < self.i_high:
            raise ValueError("need 0 <= i_low < i_high")
        if (self.e_low is None) != (self.e_high is None):
            raise ValueError("e bounds must be given together")
        if self.e_low is not None and not 0.0 <= self.e_low < self.e_high:
            raise ValueError("need 0 <= e_low < e_high")

    def draw(self, kind: str, n: int, stream) -> np.ndarray:
        states = np.zeros((n, N_COMPARTMENTS[kind]))
        if kind == "seir":
            if self.e_low is None:
                raise ValueError("SEIR uniform initial state needs e bounds")
            u = stream.random((n, 2))
            e0 = self.e_low + (self.e_high - self.e_low) * u[:, 0]
            i0 = self.i_low + (self.i_high - self.i_low) * u[:, 1]
            states[:, 1] = e0
            states[:, 2] = i0
            states[:, 0] = 1.0 - e0 - i0
        else:
            u = stream.random(n)
            i0 = self.i_low + (self.i_high - self.i_low) * u
            states[:, 1] = i0
            states[:, 0] = 1.0 - i0
        return states


# --- filter-facing model bundles -------------------------------------------


@dataclass(frozen=True)
class _CompartmentModel:
    params: ParameterVector
    observation: ObservationModel
    initial: FixedInitial | UniformInitial
    inferred: tuple[str, ...]
    noise_reading: str = DEFAULT_NOISE_READING

    kind = ""
    infected_col = 0

    def __post_init__(self):
        if self.noise_reading not in NOISE_READINGS:
            raise ValueError(f"noise_reading must be one of {NOISE_READINGS}")

    @property
    def n_state(self) -> int:
        return N_COMPARTMENTS[self.kind]

    @property
    def n_channels(self) -> int:
        return N_CHANNELS[self.kind]

    @property
    def n_inferred(self) -> int:
        return len(self.inferred)

    def bind(self, values) -> ParameterVector:
        """Base parameters with the inferred entries replaced by ``values``."""
        return self.params.with_values(self.inferred, values)

    def inferred_values(self) -> np.ndarray:
        return self.params.to_array(self.inferred)

    def init_states(self, n: int, layout: CRNLayout) -> np.ndarray:
        stream = layout.block_stream(Purpose.INITIAL_STATE, 0)
        return self.initial.draw(self.kind, n, stream)

    def propagate(self, values, states, sens, z):
        return propagate(
            self.kind, states, sens, self.bind(values), z,
            self.observation.population, self.inferred, self.noise_reading,
        )

    def log_obs(self, y: float, states) -> np.ndarray:
        return log_obs_density(y, states[..., self.infected_col], self.observation)

    def dlog_obs(self, y: float, states, sens) -> np.ndarray:
        return d_log_obs_density(
            y, states[..., self.infected_col], sens[..., self.infected_col, :], self.observation
        )


@dataclass(frozen=True)
class SirModel(_CompartmentModel):
    inferred: tuple[str, ...] = ("beta", "gamma")
    kind = "sir"
    infected_col = 1

    def __post_init__(self):
        super().__post_init__()
        self.params.get("v")  # required by the dynamics


@dataclass(frozen=True)
class SeirModel(_CompartmentModel):
    inferred: tuple[str, ...] = ("beta", "gamma", "delta")
    kind = "seir"
    infected_col = 2

    def __post_init__(self):
        super().__post_init__()
        self.params.get("delta")


# --- forward simulation -----------------------------------------------------


def simulate_epidemic(model, days: int, seed: int):
    """Simulate a latent trajectory and daily syndromic observations.

    Uses the model's own parameters as the truth.  The latent path draws its
    dynamics noise from the same addresses a filter pass would use; the
    observation draw for day ``t`` lives on the extra noise channel
    ``n_channels`` of the day-``t`` dynamics address.  Returns
    ``(trajectory, series)`` with ``trajectory`` of shape ``(days + 1, C)``
    including the initial state at row 0.
    """
    if days < 1:
        raise ValueError("days must be >= 1")
    layout = CRNLayout(seed)
    state = model.init_states(1, layout)[0]
    traj = np.empty((days + 1, model.n_state))
    traj[0] = state
    values = np.empty(days)
    params = model.params
    population = model.observation.population
    for t in range(1, days + 1):
        z = layout.dynamics_noise(t, 1, model.n_channels)[0]
        raw, _, _ = _RAW_STEPS[model.kind](
            state, params, z, population, False, (), model.noise_reading
        )
        state, _, _ = _finalize(raw, None)
        traj[t] = state
        obs_stream = layout.stream(
            StreamAddress(Purpose.DYNAMICS_NOISE, t, 0, model.n_channels)
        )
        z_obs = obs_stream.standard_normal()
        mean = float(_obs_mean(state[model.infected_col], model.observation))
        values[t - 1] = math.exp(mean + model.observation.sigma * z_obs)
    series = ObservationSeries(days=np.arange(1, days + 1), values=values)
    return traj, series


# --- CSV interchange --------------------------------------------------------

TRAJECTORY_HEADER = ["day", "s", "e", "i", "r", "y"]


def write_trajectory_csv(path, kind: str, trajectory, series: ObservationSeries) -> None:
    """Write ``day,s,e,i,r,y`` rows; the ``e`` column is empty for SIR and the
    day-0 row has no observation."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRAJECTORY_HEADER)
        obs_by_day = dict(zip(series.days.tolist(), series.values.tolist()))
        for day, row in enumerate(np.asarray(trajectory)):
            if kind == "sir":
                s, i, r = row
                e = ""
            else:
                s, e, i, r = row
                e = repr(float(e))
            y = obs_by_day.get(day)
            writer.writerow(
                [day, repr(float(s)), e, repr(float(i)), repr(float(r)),
                 "" if y is None else repr(y)]
            )


def write_observations_csv(path, series: ObservationSeries) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["day", "y"])
        for day, y in zip(series.days.tolist(), series.values.tolist()):
            writer.writerow([day, repr(y)])


def read_observations_csv(path) -> ObservationSeries:
    """Read an observation series from either a ``day,y`` file or a full
    trajectory file (rows without a ``y`` value are skipped)."""
    path = Path(path)
    days: list[int] = []
    values: list[float] = []
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "day" not in reader.fieldnames or "y" not in reader.fieldnames:
            raise ValueError(f"{path}: expected a CSV with 'day' and 'y' columns")
        for row in reader:
            y = row["y"]
            if y is None or y.strip() == "":
                continue
            days.append(int(row["day"]))
            values.append(float(y))
    return ObservationSeries(days=np.array(days), values=np.array(values))
