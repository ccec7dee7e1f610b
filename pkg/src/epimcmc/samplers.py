"""Particle-MCMC outer loops: random-walk Metropolis-Hastings and NUTS.

Both samplers target the parameter posterior through the particle filter's
log-likelihood estimate, evaluated under one frozen noise seed per chain so
that every posterior evaluation sees the same deterministic surface.

MH proposes Gaussian steps on the constrained (positive) scale with
user-chosen per-parameter step sizes.  NUTS works on ``phi = log theta``:
the unconstrained log-posterior includes the ``sum(phi)`` Jacobian term and
its gradient is obtained from the filter's parameter gradient by the chain
rule through ``exp``.  The NUTS trajectory doubles in a random direction
until the path turns back on itself, diverges, or hits the depth cap; the
next state is drawn from the slice-valid set, which keeps the kernel
reversible.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .models import ObservationSeries
from .particle_filter import FilterConfig, run_filter
from .rng import CRNLayout, Purpose, StreamAddress

__all__ = [
    "HalfNormalPrior",
    "TruncatedNormalPrior",
    "UniformPrior",
    "default_prior",
    "PosteriorEvaluator",
    "log_posterior_and_grad",
    "mh_step",
    "leapfrog",
    "nuts_step",
    "MhConfig",
    "NutsConfig",
    "Chain",
    "run_chain",
    "write_chain_csv",
    "read_chain_csv",
]


# --- priors -----------------------------------------------------------------


@dataclass(frozen=True)
class HalfNormalPrior:
    """Half-normal on theta > 0 with the given scale."""

    scale: float

    def log_density(self, x: float) -> float:
        if x <= 0.0:
            return -math.inf
        return 0.5 * math.log(2.0 / math.pi) - math.log(self.scale) - x**2 / (2.0 * self.scale**2)

    def d_log_density(self, x: float) -> float:
        return -x / self.scale**2

    def median(self) -> float:
        # |Z| quantile: scale * Phi^-1(0.75)
        return self.scale * 0.6744897501960817


@dataclass(frozen=True)
class TruncatedNormalPrior:
    """Normal(mean, sd) restricted and renormalised to theta > 0."""

    mean: float
    sd: float

    def _log_norm(self) -> float:
        # mass above zero: Phi(mean / sd)
        return math.log(0.5 * math.erfc(-self.mean / (self.sd * math.sqrt(2.0))))

    def log_density(self, x: float) -> float:
        if x <= 0.0:
            return -math.inf
        return (
            -0.5 * math.log(2.0 * math.pi)
            - math.log(self.sd)
            - (x - self.mean) ** 2 / (2.0 * self.sd**2)
            - self._log_norm()
        )

    def d_log_density(self, x: float) -> float:
        return -(x - self.mean) / self.sd**2

    def median(self) -> float:
        from scipy.stats import truncnorm

        return float(truncnorm.median(-self.mean / self.sd, np.inf, loc=self.mean, scale=self.sd))


@dataclass(frozen=True)
class UniformPrior:
    low: float
    high: float

    def __post_init__(self):
        if not self.low < self.high:
            raise ValueError("need low < high")

    def log_density(self, x: float) -> float:
        if x < self.low or x > self.high:
            return -math.inf
        return -math.log(self.high - self.low)

    def d_log_density(self, x: float) -> float:
        return 0.0

    def median(self) -> float:
        return 0.5 * (self.low + self.high)


def default_prior(name: str):
    """Reference priors: half-normal(0.5) for the contact rate, normal(4, 5)
    truncated to the positive axis for the recovery and incubation rates."""
    if name == "beta":
        return HalfNormalPrior(0.5)
    if name in ("gamma", "delta"):
        return TruncatedNormalPrior(4.0, 5.0)
    raise KeyError(f"no default prior for parameter {name!r}")


# --- posterior evaluation ----------------------------------------------------


@dataclass(frozen=True)
class PosteriorEvaluator:
    """Filter-backed posterior for one chain's frozen seed.

    ``constrained(values)`` returns ``(log prior + log likelihood, loglik)``
    without gradients (MH).  ``unconstrained(phi)`` returns the log-posterior
    on the log scale including the Jacobian term, its gradient, and the raw
    log-likelihood (NUTS).  Out-of-support or non-finite points come back as
    ``-inf`` with a zero gradient.
    """

    model: object
    observations: ObservationSeries
    priors: tuple
    filter_config: FilterConfig

    def log_prior(self, values: np.ndarray) -> float:
        return float(sum(p.log_density(float(x)) for p, x in zip(self.priors, values, strict=True)))

    def d_log_prior(self, values: np.ndarray) -> np.ndarray:
        return np.array([p.d_log_density(float(x)) for p, x in zip(self.priors, values, strict=True)])

    def constrained(self, values: np.ndarray):
        lp = self.log_prior(values)
        if not math.isfinite(lp):
            return -math.inf, -math.inf
        result = run_filter(
            self.model, self.observations, self.filter_config, values=values, with_gradient=False
        )
        return lp + result.log_likelihood, result.log_likelihood

    def unconstrained(self, phi: np.ndarray):
        phi = np.asarray(phi, dtype=float)
        k = len(phi)
        with np.errstate(over="ignore"):
            values = np.exp(phi)
        if not np.all(np.isfinite(values)) or np.any(values <= 0.0):
            return -math.inf, np.zeros(k), -math.inf
        lp = self.log_prior(values)
        if not math.isfinite(lp):
            return -math.inf, np.zeros(k), -math.inf
        result = run_filter(
            self.model, self.observations, self.filter_config, values=values, with_gradient=True
        )
        value = lp + result.log_likelihood + float(np.sum(phi))
        grad = values * (self.d_log_prior(values) + result.gradient) + 1.0
        if not (math.isfinite(value) and np.all(np.isfinite(grad))):
            return -math.inf, np.zeros(k), -math.inf
        return value, grad, result.log_likelihood


def log_posterior_and_grad(phi: np.ndarray, evaluator: PosteriorEvaluator):
    """Log-posterior on the log-parameter scale and its gradient."""
    value, grad, _ = evaluator.unconstrained(phi)
    return value, grad


# --- Metropolis-Hastings ------------------------------------------------------


def mh_step(values, step_sizes, evaluator: PosteriorEvaluator, stream, current=None):
    """One random-walk step on the constrained scale.

    The proposal is symmetric Gaussian, so the acceptance ratio reduces to the
    posterior ratio; proposals outside the prior support are rejected without
    running the filter.  ``current`` carries ``(log posterior, loglik)`` of
    the current point to avoid re-evaluating it.  Returns
    ``(values, current, accepted)``.
    """
    values = np.asarray(values, dtype=float)
    if current is None:
        current = evaluator.constrained(values)
    step = np.asarray(step_sizes, dtype=float)
    z = stream.standard_normal(len(values))
    u = stream.random()
    proposal = values + step * z
    if not math.isfinite(evaluator.log_prior(proposal)):
        return values, current, False
    cand = evaluator.constrained(proposal)
    log_alpha = cand[0] - current[0]
    if math.log(u) < log_alpha:
        return proposal, cand, True
    return values, current, False


# --- Hamiltonian pieces --------------------------------------------------------


def leapfrog(phi, m, step: float, grad_fn):
    """One leapfrog step with unit mass matrix.

    ``grad_fn(phi)`` must return ``(log target, gradient, ...)``.  Returns
    ``(phi', m', payload)`` where ``payload`` is ``grad_fn``'s full output at
    the new point.
    """
    _, grad0, *_ = grad_fn(phi)
    m_half = m + 0.5 * step * grad0
    phi_new = phi + step * m_half
    payload = grad_fn(phi_new)
    m_new = m_half + 0.5 * step * payload[1]
    return phi_new, m_new, payload


@dataclass(frozen=True)
class NutsConfig:
    """Fixed leapfrog step size, depth cap and divergence threshold; the mass
    matrix is the identity.  ``max_tree_depth = d`` allows doublings
    ``0..d``, so ``d = 0`` degenerates to a single leapfrog accept/reject."""

    step_size: float
    max_tree_depth: int = 10
    divergence_threshold: float = 1000.0

    def __post_init__(self):
        if self.step_size <= 0.0:
            raise ValueError("step size must be > 0")
        if self.max_tree_depth < 0:
            raise ValueError("max tree depth must be >= 0")


@dataclass(frozen=True)
class MhConfig:
    """Per-parameter Gaussian step sizes on the constrained scale."""

    step_sizes: tuple[float, ...]

    def __post_init__(self):
        if any(s <= 0.0 for s in self.step_sizes):
            raise ValueError("step sizes must be > 0")


class _Point:
    """Position, momentum and cached target value/gradient at one endpoint."""

    __slots__ = ("phi", "m", "value", "grad", "loglik")

    def __init__(self, phi, m, value, grad, loglik):
        self.phi = phi
        self.m = m
        self.value = value
        self.grad = grad
        self.loglik = loglik

    def joint(self) -> float:
        return self.value - 0.5 * float(self.m @ self.m)


class _Tree:
    __slots__ = ("minus", "plus", "sample", "n", "ok", "n_evals", "diverged")

    def __init__(self, minus, plus, sample, n, ok, n_evals, diverged):
        self.minus = minus
        self.plus = plus
        self.sample = sample
        self.n = n
        self.ok = ok
        self.n_evals = n_evals
        self.diverged = diverged


def _leapfrog_point(point: _Point, step: float, target) -> _Point:
    m_half = point.m + 0.5 * step * point.grad
    phi = point.phi + step * m_half
    value, grad, loglik = target(phi)
    m = m_half + 0.5 * step * grad
    return _Point(phi, m, value, grad, loglik)


def _no_uturn(minus: _Point, plus: _Point) -> bool:
    span = plus.phi - minus.phi
    return float(span @ minus.m) >= 0.0 and float(span @ plus.m) >= 0.0


def _build_tree(point, log_u, direction, depth, config, target, rng):
    if depth == 0:
        new = _leapfrog_point(point, direction * config.step_size, target)
        joint = new.joint()
        n = 1 if log_u <= joint else 0
        diverged = (log_u - joint) > config.divergence_threshold
        return _Tree(new, new, new, n, not diverged, 1, diverged)

    inner = _build_tree(point, log_u, direction, depth - 1, config, target, rng)
    if not inner.ok:
        return inner
    start = inner.plus if direction > 0 else inner.minus
    outer = _build_tree(start, log_u, direction, depth - 1, config, target, rng)
    if direction > 0:
        minus, plus = inner.minus, outer.plus
    else:
        minus, plus = outer.minus, inner.plus
    total = inner.n + outer.n
    sample = inner.sample
    if outer.n > 0 and rng.random() < outer.n / total:
        sample = outer.sample
    ok = outer.ok and _no_uturn(minus, plus)
    return _Tree(
        minus, plus, sample, total, ok,
        inner.n_evals + outer.n_evals, inner.diverged or outer.diverged,
    )


def nuts_step(phi, current, config: NutsConfig, target, rng):
    """One no-U-turn transition from ``phi``.

    ``current`` is the cached ``(value, grad, loglik)`` at ``phi``;
    ``target(phi)`` returns that triple.  Builds a doubling trajectory until
    it turns back on itself, diverges, or reaches the depth cap, and samples
    the next state from the slice-valid set.  Returns
    ``(phi, current, moved, n_evals, diverged)``.
    """
    phi = np.asarray(phi, dtype=float)
    k = len(phi)
    m0 = rng.standard_normal(k)
    value0, grad0, loglik0 = current
    start = _Point(phi, m0, value0, grad0, loglik0)
    # u ~ U(0, exp(joint)) sampled as log u = joint - Exp(1), safe in log space
    log_u = start.joint() - rng.standard_exponential()

    minus = start
    plus = start
    sample = start
    n = 1
    n_evals = 0
    diverged = False
    for depth in range(config.max_tree_depth + 1):
        direction = 1 if rng.random() < 0.5 else -1
        origin = plus if direction > 0 else minus
        tree = _build_tree(origin, log_u, direction, depth, config, target, rng)
        n_evals += tree.n_evals
        diverged = diverged or tree.diverged
        if direction > 0:
            plus = tree.plus
        else:
            minus = tree.minus
        if tree.ok and tree.n > 0 and rng.random() < min(1.0, tree.n / n):
            sample = tree.sample
        n += tree.n
        if not (tree.ok and _no_uturn(minus, plus)):
            break
    moved = sample is not start
    new_current = (sample.value, sample.grad, sample.loglik)
    return sample.phi, new_current, moved, n_evals, diverged


# --- chain runner ---------------------------------------------------------------


@dataclass
class Chain:
    """Ordered MCMC output; rejected iterations repeat the previous sample."""

    kind: str
    param_names: tuple[str, ...]
    samples: np.ndarray
    log_likelihoods: np.ndarray
    accepted: np.ndarray
    cum_seconds: np.ndarray
    burn_in: int = 0

    def __len__(self) -> int:
        return len(self.samples)

    def post_burn(self) -> np.ndarray:
        return self.samples[self.burn_in :]

    def acceptance_rate(self) -> float:
        return float(np.mean(self.accepted[self.burn_in :]))


def run_chain(
    model,
    observations: ObservationSeries,
    priors: tuple,
    filter_config: FilterConfig,
    sampler_config,
    iterations: int,
    burn_in: int = 0,
    init_values=None,
) -> Chain:
    """Run one MCMC chain; the filter seed is frozen for its whole life.

    The sampler's own randomness (proposal draws, momenta, accept uniforms)
    comes from per-iteration addresses of the same master seed, so two runs
    with identical arguments produce identical chains.  ``init_values``
    defaults to the model's parameter values for the inferred entries.
    """
    if iterations <= burn_in or burn_in < 0:
        raise ValueError("need iterations > burn_in >= 0")
    evaluator = PosteriorEvaluator(model, observations, priors, filter_config)
    layout = CRNLayout(filter_config.master_seed)
    names = tuple(model.inferred)
    k = len(names)
    if init_values is None:
        init_values = model.inferred_values()
    values = np.asarray(init_values, dtype=float)
    if values.shape != (k,):
        raise ValueError(f"initial values must have shape ({k},)")

    samples = np.empty((iterations, k))
    logliks = np.empty(iterations)
    accepted = np.zeros(iterations, dtype=bool)
    cum_seconds = np.empty(iterations)

    is_nuts = isinstance(sampler_config, NutsConfig)
    t0 = time.perf_counter()
    if is_nuts:
        phi = np.log(values)
        current = evaluator.unconstrained(phi)
        if not math.isfinite(current[0]):
            raise ValueError("initial point has zero posterior density")
        for i in range(iterations):
            rng = layout.stream(StreamAddress(Purpose.MOMENTUM, i))
            phi, current, moved, _, _ = nuts_step(
                phi, current, sampler_config, evaluator.unconstrained, rng
            )
            samples[i] = np.exp(phi)
            logliks[i] = current[2]
            accepted[i] = moved
            cum_seconds[i] = time.perf_counter() - t0
    else:
        current = evaluator.constrained(values)
        if not math.isfinite(current[0]):
            raise ValueError("initial point has zero posterior density")
        steps = np.asarray(sampler_config.step_sizes, dtype=float)
        if steps.shape != (k,):
            raise ValueError(f"need one step size per inferred parameter ({k})")
        for i in range(iterations):
            stream = layout.stream(StreamAddress(Purpose.PROPOSAL, i))
            values, current, acc = mh_step(values, steps, evaluator, stream, current)
            samples[i] = values
            logliks[i] = current[1]
            accepted[i] = acc
            cum_seconds[i] = time.perf_counter() - t0

    return Chain(
        kind="nuts" if is_nuts else "mh",
        param_names=names,
        samples=samples,
        log_likelihoods=logliks,
        accepted=accepted,
        cum_seconds=cum_seconds,
        burn_in=burn_in,
    )


# --- chain CSV interchange -------------------------------------------------------

CHAIN_COLUMNS = ("iter", "beta", "gamma", "delta", "loglik", "accepted", "cum_seconds")


def write_chain_csv(path, chain: Chain) -> None:
    """``iter,beta,gamma,delta,loglik,accepted,cum_seconds`` rows; parameters
    the chain did not infer are left empty, extra ones are appended."""
    path = Path(path)
    extra = [n for n in chain.param_names if n not in ("beta", "gamma", "delta")]
    header = list(CHAIN_COLUMNS) + extra
    index = {name: chain.param_names.index(name) for name in chain.param_names}
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(len(chain)):
            row = [i]
            for name in ("beta", "gamma", "delta"):
                row.append(repr(float(chain.samples[i, index[name]])) if name in index else "")
            row.append(repr(float(chain.log_likelihoods[i])))
            row.append(int(chain.accepted[i]))
            row.append(repr(float(chain.cum_seconds[i])))
            for name in extra:
                row.append(repr(float(chain.samples[i, index[name]])))
            writer.writerow(row)


def read_chain_csv(path, burn_in: int = 0) -> Chain:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "iter" not in reader.fieldnames:
            raise ValueError(f"{path}: not a chain CSV")
        rows = list(reader)
    if not rows:
        raise ValueError(f"{path}: empty chain")
    names = [
        n for n in reader.fieldnames
        if n not in ("iter", "loglik", "accepted", "cum_seconds") and rows[0][n].strip() != ""
    ]
    samples = np.array([[float(r[n]) for n in names] for r in rows])
    logliks = np.array([float(r["loglik"]) for r in rows])
    accepted = np.array([r["accepted"].strip() in ("1", "True", "true") for r in rows])
    seconds = np.array([float(r["cum_seconds"]) for r in rows])
    return Chain(
        kind="unknown",
        param_names=tuple(names),
        samples=samples,
        log_likelihoods=logliks,
        accepted=accepted,
        cum_seconds=seconds,
        burn_in=burn_in,
    )
