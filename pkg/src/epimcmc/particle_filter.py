"""Differentiable bootstrap particle filter with common-random-number noise.

The proposal equals the dynamics, so each particle's log-weight grows by the
observation log-density.  Alongside states the filter carries, per particle,

* the Jacobian of the state w.r.t. the inferred parameters (sensitivities),
* the derivative of the log unnormalised weight w.r.t. those parameters,

and returns both the log-likelihood estimate and its exact gradient under the
frozen noise layout.  Multinomial resampling uses uniforms addressed by time
only, so the ancestor vector is a piecewise-constant function of the
parameters: the log-likelihood surface is deterministic given one master seed
and differentiable away from ancestor changes.

A model object supplies the dynamics and observation density::

    n_state, n_channels, inferred, n_inferred
    init_states(n, layout)                  -> (N, D) states
    propagate(values, states, sens, z)      -> (states, sens, n_clamped)
    log_obs(y, states)                      -> (N,) log densities
    dlog_obs(y, states, sens)               -> (N, K) gradients

``sens`` may be ``None`` throughout when no gradient is requested.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .rng import CRNLayout, Purpose

__all__ = [
    "FilterConfig",
    "FilterError",
    "ParticleCloud",
    "FilterResult",
    "init_particles",
    "effective_sample_size",
    "weight_and_gradient_update",
    "multinomial_resample_crn",
    "run_filter",
]


class FilterError(RuntimeError):
    """Raised when a filter pass cannot continue; carries time/particle info."""


@dataclass(frozen=True)
class FilterConfig:
    """Particle count, resampling threshold and the frozen master seed.

    ``resample_threshold`` is compared against the effective sample size and
    defaults to ``n_particles / 2``.
    """

    n_particles: int
    master_seed: int
    resample_threshold: float | None = None

    def __post_init__(self):
        if self.n_particles < 1:
            raise ValueError("need at least one particle")
        if self.resample_threshold is not None and not (
            0.0 < self.resample_threshold <= self.n_particles
        ):
            raise ValueError("resample threshold must lie in (0, n_particles]")

    @property
    def threshold(self) -> float:
        if self.resample_threshold is None:
            return self.n_particles / 2.0
        return self.resample_threshold


@dataclass
class ParticleCloud:
    """Per-particle states, log-weights and gradient bookkeeping.

    ``log_weights`` store the log of the *unnormalised* weights, initialised
    to ``-log N`` so that the likelihood estimate is ``logsumexp`` of the
    final column.  ``sens`` is ``(N, C, K)``; ``weight_grad`` is the per
    particle ``d log w / d theta`` of shape ``(N, K)``.  The gradient arrays
    are ``None`` for weight-only passes.
    """

    states: np.ndarray
    log_weights: np.ndarray
    sens: np.ndarray | None = None
    weight_grad: np.ndarray | None = None

    @property
    def n(self) -> int:
        return len(self.log_weights)

    def normalized_weights(self) -> np.ndarray:
        lw = self.log_weights
        m = np.max(lw)
        if not np.isfinite(m):
            raise FilterError("degenerate particle weights (all zero)")
        w = np.exp(lw - m)
        return w / w.sum()


@dataclass(frozen=True)
class FilterResult:
    """Outcome of one filter pass under a frozen noise layout."""

    log_likelihood: float
    gradient: np.ndarray
    resample_count: int
    clamp_count: int
    ancestry_signature: bytes
    trace: list[tuple] | None = field(default=None, compare=False)


def _log_mean_exp(lw: np.ndarray) -> float:
    m = np.max(lw)
    if not np.isfinite(m):
        raise FilterError("degenerate particle weights (all zero)")
    return float(m + np.log(np.mean(np.exp(lw - m))))


def init_particles(model, config: FilterConfig, layout: CRNLayout, with_gradient=True) -> ParticleCloud:
    """Uniform weights, initial states from the model's initial spec, zero
    sensitivities and zero weight gradients (the initial state does not
    depend on the parameters)."""
    n = config.n_particles
    states = model.init_states(n, layout)
    cloud = ParticleCloud(
        states=states,
        log_weights=np.full(n, -np.log(n)),
    )
    if with_gradient:
        cloud.sens = np.zeros((n, model.n_state, model.n_inferred))
        cloud.weight_grad = np.zeros((n, model.n_inferred))
    return cloud


def effective_sample_size(cloud: ParticleCloud) -> float:
    """``1 / sum(w~ ** 2)`` over the normalised weights."""
    w = cloud.normalized_weights()
    return float(1.0 / np.sum(w**2))


def weight_and_gradient_update(cloud: ParticleCloud, y: float, model, t: int = 0) -> ParticleCloud:
    """Multiply weights by the observation density (in log domain) and grow
    each particle's weight gradient by the density's parameter gradient."""
    ll = np.asarray(model.log_obs(y, cloud.states), dtype=float)
    bad = ~np.isfinite(ll)
    if np.any(bad):
        idx = int(np.flatnonzero(bad)[0])
        raise FilterError(f"non-finite observation density at t={t}, particle {idx}")
    cloud.log_weights = cloud.log_weights + ll
    if cloud.weight_grad is not None:
        cloud.weight_grad = cloud.weight_grad + model.dlog_obs(y, cloud.states, cloud.sens)
    return cloud


def multinomial_resample_crn(cloud: ParticleCloud, stream) -> np.ndarray:
    """Resample the cloud in place with common random numbers.

    Ancestors are drawn with probability proportional to the normalised
    weights using ``N`` uniforms taken from ``stream`` in particle order.
    States and state sensitivities are copied from the ancestors.  Log
    weights are reset so every unnormalised weight equals the pre-resampling
    mean, and the weight gradients are reset to the weighted mean of the old
    ones, which is the exact parameter derivative of that mean weight.
    Returns the ancestor index vector.
    """
    w = cloud.normalized_weights()
    n = cloud.n
    u = stream.random(n)
    ancestors = np.searchsorted(np.cumsum(w), u).clip(max=n - 1)

    cloud.states = cloud.states[ancestors]
    log_mean = _log_mean_exp(cloud.log_weights)
    cloud.log_weights = np.full(n, log_mean)
    if cloud.weight_grad is not None:
        cloud.sens = cloud.sens[ancestors]
        mean_grad = w @ cloud.weight_grad
        cloud.weight_grad = np.broadcast_to(mean_grad, cloud.weight_grad.shape).copy()
    return ancestors


def run_filter(
    model,
    observations,
    config: FilterConfig,
    values=None,
    with_gradient: bool = True,
    record_trace: bool = False,
) -> FilterResult:
    """One pass of the filter; returns the log-likelihood estimate and its
    gradient w.r.t. the model's inferred parameters.

    ``values`` overrides the inferred entries of the model's parameters
    (defaults to the model's own values).  Dynamics noise for day ``t`` comes
    from the day-``t`` dynamics address of the layout, resampling uniforms
    from the day-``t`` resampling address, so repeated calls with equal
    ``(values, seed, config)`` are bit-identical.
    """
    if len(observations) == 0:
        raise ValueError("observation series is empty")
    if values is None:
        values = model.inferred_values()
    values = np.asarray(values, dtype=float)
    layout = CRNLayout(config.master_seed)

    cloud = init_particles(model, config, layout, with_gradient=with_gradient)
    threshold = config.threshold
    resample_count = 0
    clamp_count = 0
    signature = hashlib.sha256()
    trace: list[tuple] | None = [] if record_trace else None

    day = 0
    for t, y in zip(observations.days, observations.values):
        neff = effective_sample_size(cloud)
        resampled = neff <= threshold
        if resampled:
            stream = layout.block_stream(Purpose.RESAMPLING, int(t))
            ancestors = multinomial_resample_crn(cloud, stream)
            resample_count += 1
            signature.update(np.int64(t).tobytes())
            signature.update(ancestors.astype(np.int64).tobytes())
        while day < t:
            day += 1
            z = layout.dynamics_noise(day, cloud.n, model.n_channels)
            try:
                cloud.states, cloud.sens, n_clamped = model.propagate(
                    values, cloud.states, cloud.sens, z
                )
            except (ValueError, FloatingPointError) as err:
                raise FilterError(f"state propagation failed at t={day}: {err}") from err
            clamp_count += n_clamped
        weight_and_gradient_update(cloud, float(y), model, t=int(t))
        if record_trace:
            trace.append((int(t), neff, resampled, _log_mean_exp(cloud.log_weights) + np.log(cloud.n)))

    lw = cloud.log_weights
    m = np.max(lw)
    if not np.isfinite(m):
        raise FilterError("degenerate particle weights at the final time")
    log_likelihood = float(m + np.log(np.sum(np.exp(lw - m))))
    if with_gradient:
        w = cloud.normalized_weights()
        gradient = w @ cloud.weight_grad
    else:
        gradient = np.zeros(model.n_inferred)
    return FilterResult(
        log_likelihood=log_likelihood,
        gradient=np.asarray(gradient, dtype=float),
        resample_count=resample_count,
        clamp_count=clamp_count,
        ancestry_signature=signature.digest(),
        trace=trace,
    )
