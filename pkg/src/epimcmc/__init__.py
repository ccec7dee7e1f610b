"""Particle MCMC for stochastic compartmental epidemic models.

A differentiable bootstrap particle filter supplies the marginal
log-likelihood of SIR/SEIR parameters and its gradient under common random
numbers, feeding either a random-walk Metropolis-Hastings sampler or the
No-U-Turn Sampler.
"""

from .diagnostics import ChainSummary, acf, ess, histogram, iact, mse, summarize
from .models import (
    FixedInitial,
    ObservationModel,
    ObservationSeries,
    ParameterVector,
    SeirModel,
    SirModel,
    UniformInitial,
    gaussian_logpdf_derivs,
    log_obs_density,
    r0,
    simulate_epidemic,
    sir_step,
    seir_step,
)
from .particle_filter import FilterConfig, FilterResult, run_filter
from .rng import CRNLayout, Purpose, StreamAddress, derive_stream
from .samplers import (
    Chain,
    HalfNormalPrior,
    MhConfig,
    NutsConfig,
    TruncatedNormalPrior,
    UniformPrior,
    run_chain,
)

__version__ = "0.1.0"
