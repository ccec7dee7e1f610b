import math

import numpy as np
import pytest

from epimcmc.diagnostics import iact
from epimcmc.models import (
    FixedInitial,
    ObservationModel,
    ParameterVector,
    SirModel,
    simulate_epidemic,
)
from epimcmc.particle_filter import FilterConfig
from epimcmc.rng import CRNLayout, Purpose, StreamAddress
from epimcmc.samplers import (
    Chain,
    HalfNormalPrior,
    MhConfig,
    NutsConfig,
    PosteriorEvaluator,
    TruncatedNormalPrior,
    UniformPrior,
    default_prior,
    leapfrog,
    log_posterior_and_grad,
    mh_step,
    nuts_step,
    read_chain_csv,
    run_chain,
    write_chain_csv,
)

PARAMS = ParameterVector(beta=0.254, gamma=0.111, v=1.246)
OBS = ObservationModel(b=0.25, phi=1.07, sigma=0.0012, population=5000)


def sir_model():
    return SirModel(
        params=PARAMS,
        observation=OBS,
        initial=FixedInitial((4990 / 5000, 10 / 5000, 0.0)),
        inferred=("beta", "gamma"),
    )


# --- priors ---------------------------------------------------------------


def test_halfnormal_prior():
    p = HalfNormalPrior(0.5)
    assert p.log_density(-0.1) == -math.inf
    # density integrates to one on the half line: compare against scipy
    from scipy.stats import halfnorm

    for x in (0.05, 0.3, 1.2):
        assert p.log_density(x) == pytest.approx(halfnorm.logpdf(x, scale=0.5), rel=1e-12)
        h = 1e-6
        fd = (p.log_density(x + h) - p.log_density(x - h)) / (2 * h)
        assert p.d_log_density(x) == pytest.approx(fd, rel=1e-6)


def test_truncated_normal_prior():
    from scipy.stats import truncnorm

    p = TruncatedNormalPrior(4.0, 5.0)
    a = -4.0 / 5.0
    for x in (0.1, 0.4, 3.0, 9.0):
        assert p.log_density(x) == pytest.approx(
            truncnorm.logpdf(x, a, np.inf, loc=4.0, scale=5.0), rel=1e-10
        )
        h = 1e-6
        fd = (p.log_density(x + h) - p.log_density(x - h)) / (2 * h)
        assert p.d_log_density(x) == pytest.approx(fd, rel=1e-6)
    assert p.log_density(0.0) == -math.inf


def test_uniform_prior():
    p = UniformPrior(0.1, 0.9)
    assert p.log_density(0.5) == pytest.approx(-math.log(0.8))
    assert p.d_log_density(0.5) == 0.0
    assert p.log_density(1.0) == -math.inf
    with pytest.raises(ValueError):
        UniformPrior(1.0, 0.5)


def test_default_priors():
    assert isinstance(default_prior("beta"), HalfNormalPrior)
    assert isinstance(default_prior("gamma"), TruncatedNormalPrior)
    with pytest.raises(KeyError):
        default_prior("v")


# --- posterior evaluation ----------------------------------------------------


@pytest.fixture(scope="module")
def sir_setup():
    model = sir_model()
    _, series = simulate_epidemic(model, days=40, seed=42)
    priors = (default_prior("beta"), default_prior("gamma"))
    evaluator = PosteriorEvaluator(model, series, priors, FilterConfig(60, master_seed=4))
    return evaluator


def test_unconstrained_gradient_matches_finite_differences(sir_setup):
    evaluator = sir_setup
    phi = np.log(np.array([0.254, 0.111]))
    value, grad = log_posterior_and_grad(phi, evaluator)
    assert math.isfinite(value)
    for k in range(2):
        h = 1e-7
        up, dn = phi.copy(), phi.copy()
        up[k] += h
        dn[k] -= h
        v_up, _, _ = evaluator.unconstrained(up)
        v_dn, _, _ = evaluator.unconstrained(dn)
        fd = (v_up - v_dn) / (2 * h)
        assert grad[k] == pytest.approx(fd, rel=1e-4)


def test_uniform_prior_contributes_zero_gradient(sir_setup):
    base = sir_setup
    flat = PosteriorEvaluator(
        base.model, base.observations, (UniformPrior(0.01, 1.0), UniformPrior(0.01, 1.0)),
        base.filter_config,
    )
    phi = np.log(np.array([0.254, 0.111]))
    _, grad_flat, _ = flat.unconstrained(phi)
    from epimcmc.particle_filter import run_filter

    result = run_filter(flat.model, flat.observations, flat.filter_config, values=np.exp(phi))
    # chain rule through exp plus the log-scale Jacobian term only
    np.testing.assert_allclose(grad_flat, np.exp(phi) * result.gradient + 1.0, rtol=1e-12)


def test_out_of_support_is_minus_infinity(sir_setup):
    evaluator = PosteriorEvaluator(
        sir_setup.model, sir_setup.observations,
        (UniformPrior(0.2, 0.3), UniformPrior(0.05, 0.2)), sir_setup.filter_config,
    )
    value, grad, loglik = evaluator.unconstrained(np.log(np.array([0.5, 0.1])))
    assert value == -math.inf and np.all(grad == 0.0)


# --- Metropolis-Hastings -------------------------------------------------------


class QuadraticTarget:
    """Analytic stand-in for the filter-backed evaluator."""

    def __init__(self, priors=()):
        self.priors = priors

    def log_prior(self, values):
        if len(self.priors) == 0:
            return 0.0
        return float(sum(p.log_density(float(x)) for p, x in zip(self.priors, values)))

    def constrained(self, values):
        lp = self.log_prior(values)
        if not math.isfinite(lp):
            return -math.inf, -math.inf
        ll = -0.5 * float(np.sum(np.asarray(values) ** 2))
        return lp + ll, ll


def test_mh_always_accepts_uphill():
    target = QuadraticTarget()
    layout = CRNLayout(1)
    values = np.array([5.0])
    uphill = 0
    for i in range(100):
        # replay the proposal draw to know where the step went
        probe = layout.stream(StreamAddress(Purpose.PROPOSAL, i))
        proposal = values + 0.01 * probe.standard_normal(1)
        stream = layout.stream(StreamAddress(Purpose.PROPOSAL, i))
        new, cur, acc = mh_step(values, [0.01], target, stream)
        if target.constrained(proposal)[0] >= target.constrained(values)[0]:
            uphill += 1
            assert acc and np.array_equal(new, proposal)
        values = new
    assert uphill > 20


def test_mh_rejects_outside_prior_support():
    target = QuadraticTarget(priors=(HalfNormalPrior(0.5),))
    layout = CRNLayout(2)
    values = np.array([0.001])
    # huge steps mostly propose negative values, which must be rejected
    rejected_neg = 0
    for i in range(200):
        stream = layout.stream(StreamAddress(Purpose.PROPOSAL, i))
        new, _, acc = mh_step(values, [5.0], target, stream)
        if not acc:
            rejected_neg += 1
        assert new[0] > 0.0
    assert rejected_neg > 50


def test_mh_decision_replays_bit_identically():
    target = QuadraticTarget()
    layout = CRNLayout(3)
    stream_a = layout.stream(StreamAddress(Purpose.PROPOSAL, 7))
    stream_b = layout.stream(StreamAddress(Purpose.PROPOSAL, 7))
    out_a = mh_step(np.array([1.0, 2.0]), [0.1, 0.1], target, stream_a)
    out_b = mh_step(np.array([1.0, 2.0]), [0.1, 0.1], target, stream_b)
    assert np.array_equal(out_a[0], out_b[0]) and out_a[2] == out_b[2]


def test_mh_samples_standard_normal():
    target = QuadraticTarget()
    layout = CRNLayout(5)
    values = np.array([0.0])
    draws = np.empty(10**5)
    current = target.constrained(values)
    for i in range(len(draws)):
        stream = layout.stream(StreamAddress(Purpose.PROPOSAL, i))
        values, current, _ = mh_step(values, [2.4], target, stream, current)
        draws[i] = values[0]
    tau = iact(draws)
    se = draws.std(ddof=1) * math.sqrt(tau / len(draws))
    assert abs(draws.mean()) < 3 * se
    assert abs(draws.var(ddof=1) - 1.0) < 0.05


# --- leapfrog --------------------------------------------------------------------


def _quad_target(phi):
    return -0.5 * float(phi @ phi), -phi, 0.0


def test_leapfrog_free_particle():
    def flat(phi):
        return 0.0, np.zeros_like(phi), 0.0

    phi, m = np.array([1.0, -2.0]), np.array([0.5, 0.25])
    phi2, m2, _ = leapfrog(phi, m, 0.01, flat)
    np.testing.assert_allclose(phi2, phi + 0.01 * m)
    np.testing.assert_allclose(m2, m)


def test_leapfrog_conserves_energy_on_quadratic():
    phi, m = np.array([1.0]), np.array([0.0])
    h0 = 0.5 * float(m @ m) - _quad_target(phi)[0]
    for _ in range(1000):
        phi, m, _ = leapfrog(phi, m, 0.01, _quad_target)
    h1 = 0.5 * float(m @ m) - _quad_target(phi)[0]
    assert abs(h1 - h0) < 1e-3


def test_leapfrog_reversible():
    phi, m = np.array([0.3, -1.1]), np.array([0.7, 0.2])
    phi2, m2, _ = leapfrog(phi, m, 0.05, _quad_target)
    phi3, m3, _ = leapfrog(phi2, m2, -0.05, _quad_target)
    np.testing.assert_allclose(phi3, phi, atol=1e-12)
    np.testing.assert_allclose(m3, m, atol=1e-12)


def test_leapfrog_volume_preserving():
    # numeric Jacobian of the (phi, m) -> (phi', m') map on random 2-D points
    rng = np.random.default_rng(8)
    for _ in range(5):
        state = rng.standard_normal(4)
        h = 1e-6
        jac = np.empty((4, 4))
        for k in range(4):
            up, dn = state.copy(), state.copy()
            up[k] += h
            dn[k] -= h

            def step(s):
                p2, m2, _ = leapfrog(s[:2].copy(), s[2:].copy(), 0.05, _quad_target)
                return np.concatenate([p2, m2])

            jac[:, k] = (step(up) - step(dn)) / (2 * h)
        assert abs(np.linalg.det(jac) - 1.0) < 1e-8


# --- NUTS ------------------------------------------------------------------------


def _run_nuts(target, phi0, step_size, iterations, seed, max_depth=10):
    layout = CRNLayout(seed)
    config = NutsConfig(step_size=step_size, max_tree_depth=max_depth)
    phi = np.asarray(phi0, dtype=float)
    current = target(phi)
    out = np.empty((iterations, len(phi)))
    for i in range(iterations):
        rng = layout.stream(StreamAddress(Purpose.MOMENTUM, i))
        phi, current, _, _, _ = nuts_step(phi, current, config, target, rng)
        out[i] = phi
    return out


def test_nuts_standard_normal_moments():
    draws = _run_nuts(_quad_target, [0.0], 0.5, 5000, seed=1)[:, 0]
    tau = iact(draws)
    se = draws.std(ddof=1) * math.sqrt(tau / len(draws))
    assert abs(draws.mean()) < 3 * se
    assert abs(draws.var(ddof=1) - 1.0) < 0.1


def test_nuts_correlated_gaussian_moments():
    rho = 0.9
    cov_inv = np.linalg.inv(np.array([[1.0, rho], [rho, 1.0]]))

    def target(phi):
        return -0.5 * float(phi @ cov_inv @ phi), -(cov_inv @ phi), 0.0

    draws = _run_nuts(target, [0.0, 0.0], 0.25, 10**4, seed=2)
    for j in range(2):
        tau = iact(draws[:, j])
        se = draws[:, j].std(ddof=1) * math.sqrt(tau / len(draws))
        assert abs(draws[:, j].mean()) < 3 * se
        assert abs(draws[:, j].var(ddof=1) - 1.0) < 0.1
    corr = np.corrcoef(draws.T)[0, 1]
    assert corr == pytest.approx(rho, abs=0.03)


def test_nuts_no_uturn_when_momenta_align():
    from epimcmc.samplers import _no_uturn, _Point

    minus = _Point(np.array([0.0, 0.0]), np.array([1.0, 0.5]), 0.0, np.zeros(2), 0.0)
    plus = _Point(np.array([1.0, 0.5]), np.array([2.0, 1.0]), 0.0, np.zeros(2), 0.0)
    assert _no_uturn(minus, plus)
    turned = _Point(np.array([1.0, 0.5]), np.array([-2.0, -1.0]), 0.0, np.zeros(2), 0.0)
    assert not _no_uturn(minus, turned)


def test_nuts_depth_zero_is_single_leapfrog():
    layout = CRNLayout(3)
    config = NutsConfig(step_size=0.3, max_tree_depth=0)
    phi = np.array([0.4])
    current = _quad_target(phi)
    seen_evals = []
    for i in range(50):
        rng = layout.stream(StreamAddress(Purpose.MOMENTUM, i))
        phi, current, moved, n_evals, _ = nuts_step(phi, current, config, _quad_target, rng)
        seen_evals.append(n_evals)
    assert max(seen_evals) == 1


def test_nuts_divergence_truncates_but_never_raises():
    # cliff target: fine at the start, divergent once phi goes negative
    def cliff(phi):
        if phi[0] < 0.0:
            return -math.inf, np.zeros(1), -math.inf
        return -0.5 * float(phi @ phi), -phi, 0.0

    draws = _run_nuts(cliff, [2.0], 0.9, 200, seed=4)
    assert np.all(draws[:, 0] >= 0.0)


# --- chains ---------------------------------------------------------------------


@pytest.fixture(scope="module")
def tiny_fit():
    model = sir_model()
    _, series = simulate_epidemic(model, days=30, seed=42)
    priors = (default_prior("beta"), default_prior("gamma"))
    return model, series, priors


def test_chain_single_iteration(tiny_fit):
    model, series, priors = tiny_fit
    chain = run_chain(
        model, series, priors, FilterConfig(30, master_seed=1), MhConfig((0.005, 0.001)),
        iterations=1, init_values=np.array([0.2, 0.15]),
    )
    assert len(chain) == 1
    assert chain.samples.shape == (1, 2)


def test_rejected_iterations_repeat_previous_sample(tiny_fit):
    model, series, priors = tiny_fit
    chain = run_chain(
        model, series, priors, FilterConfig(30, master_seed=2), MhConfig((0.005, 0.001)),
        iterations=40, init_values=np.array([0.2, 0.15]),
    )
    for i in range(1, len(chain)):
        if not chain.accepted[i]:
            assert np.array_equal(chain.samples[i], chain.samples[i - 1])
            assert chain.log_likelihoods[i] == chain.log_likelihoods[i - 1]


def test_chains_replay_identically(tiny_fit):
    model, series, priors = tiny_fit
    for sampler in (MhConfig((0.005, 0.001)), NutsConfig(step_size=0.002, max_tree_depth=4)):
        a = run_chain(model, series, priors, FilterConfig(30, master_seed=3), sampler,
                      iterations=15, init_values=np.array([0.2, 0.15]))
        b = run_chain(model, series, priors, FilterConfig(30, master_seed=3), sampler,
                      iterations=15, init_values=np.array([0.2, 0.15]))
        assert np.array_equal(a.samples, b.samples)
        assert np.array_equal(a.accepted, b.accepted)
        assert np.array_equal(a.log_likelihoods, b.log_likelihoods)


def test_chain_timing_monotone(tiny_fit):
    model, series, priors = tiny_fit
    chain = run_chain(model, series, priors, FilterConfig(30, master_seed=5),
                      MhConfig((0.005, 0.001)), iterations=10, init_values=np.array([0.2, 0.15]))
    assert np.all(np.diff(chain.cum_seconds) >= 0.0)


def test_chain_argument_validation(tiny_fit):
    model, series, priors = tiny_fit
    with pytest.raises(ValueError):
        run_chain(model, series, priors, FilterConfig(30, master_seed=1),
                  MhConfig((0.005, 0.001)), iterations=5, burn_in=5)
    with pytest.raises(ValueError):
        run_chain(model, series, priors, FilterConfig(30, master_seed=1),
                  MhConfig((0.005,)), iterations=5)


def test_chain_csv_round_trip(tmp_path, tiny_fit):
    model, series, priors = tiny_fit
    chain = run_chain(model, series, priors, FilterConfig(30, master_seed=6),
                      MhConfig((0.005, 0.001)), iterations=12, burn_in=3,
                      init_values=np.array([0.2, 0.15]))
    path = tmp_path / "chain.csv"
    write_chain_csv(path, chain)
    header = path.read_text().splitlines()[0]
    assert header == "iter,beta,gamma,delta,loglik,accepted,cum_seconds"
    loaded = read_chain_csv(path, burn_in=3)
    assert loaded.param_names == ("beta", "gamma")
    np.testing.assert_array_equal(loaded.samples, chain.samples)
    np.testing.assert_array_equal(loaded.accepted, chain.accepted)
    np.testing.assert_array_equal(loaded.log_likelihoods, chain.log_likelihoods)
