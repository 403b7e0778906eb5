import numpy as np
import pytest

from dptraverse.observation import Observation, identity_operator
from dptraverse.posterior import GaussianPosterior
from dptraverse.priors import gaussian
from dptraverse.scores import (
    BatchedPosteriorScore,
    ExactPosteriorScore,
    ExactPriorScore,
    GuidedScore,
    epsilon_prediction,
    exact_prior_grad_weight,
    gaussian_conditional_var,
    observation_evidence_score,
    one_sided_lipschitz,
    prior_grad_estimate,
    tweedie_denoise,
)


def test_exact_posterior_score_trivial(running_posterior, schedule):
    sc = ExactPosteriorScore(running_posterior, schedule)
    assert sc(np.array([0.5]), 0)[0] == pytest.approx(0.0)


def test_exact_posterior_score_unit_invariance(schedule):
    sc = ExactPosteriorScore(GaussianPosterior(mean=[0.0], cov=[[1.0]]), schedule)
    for t in (0, 300, 1000):
        assert sc(np.array([1.0]), t)[0] == pytest.approx(-1.0)


def test_exact_posterior_score_fd(two_mode_posterior, schedule):
    sc = ExactPosteriorScore(two_mode_posterior, schedule)
    x = np.array([0.0])
    d = two_mode_posterior.diffuse(schedule, 0)
    h = 1e-6
    fd = (d.logpdf(x + h) - d.logpdf(x - h)) / (2 * h)
    assert sc(x, 0)[0] == pytest.approx(float(fd), rel=1e-6)


def test_exact_prior_score_fd_invariant(two_mode_prior, schedule):
    sc = ExactPriorScore(two_mode_prior, schedule)
    rng = np.random.default_rng(0)
    for t in (50.0, 400.0):
        mix = two_mode_prior.diffuse(schedule, t)
        xs = rng.uniform(-3, 3, size=(20, 1))
        h = 1e-6
        fd = (mix.logpdf(xs + h) - mix.logpdf(xs - h)) / (2 * h)
        np.testing.assert_allclose(sc(xs, t)[:, 0], fd, rtol=1e-5)


def test_tweedie_identity_at_zero(unit_prior, schedule):
    sc = ExactPriorScore(unit_prior, schedule)
    x = np.array([1.7])
    np.testing.assert_allclose(tweedie_denoise(sc, schedule, x, 0), x)


def test_tweedie_unit_prior_shrinkage(unit_prior, schedule):
    # unit Gaussian prior: score is -x, so xhat = sqrt(ab) x
    sc = ExactPriorScore(unit_prior, schedule)
    t = 657
    ab = float(schedule.alpha_bar_at(t))
    got = tweedie_denoise(sc, schedule, np.array([1.0]), t)
    assert got[0] == pytest.approx(np.sqrt(ab))


def test_tweedie_tight_prior_recovers_mean(schedule):
    sc = ExactPriorScore(gaussian(2.0, 1e-6), schedule)
    for x in (-3.0, 0.0, 5.0):
        got = tweedie_denoise(sc, schedule, np.array([x]), 500)
        assert got[0] == pytest.approx(2.0, abs=1e-3)


def test_tweedie_underflow_guard(unit_prior):
    from dptraverse.schedule import Schedule

    s = Schedule(alpha_bar=np.array([1.0, 1e-10, 1e-11]))
    sc = ExactPriorScore(unit_prior, s)
    with pytest.raises(ValueError):
        tweedie_denoise(sc, s, np.array([0.0]), 1)


def test_epsilon_prediction_view(unit_prior, schedule):
    sc = ExactPriorScore(unit_prior, schedule)
    t = 400
    ab = float(schedule.alpha_bar_at(t))
    x = np.array([0.8])
    np.testing.assert_allclose(epsilon_prediction(sc, schedule, x, t),
                               -np.sqrt(1 - ab) * sc(x, t))


def test_guided_score_zero_residual(unit_prior, schedule):
    # a consistent observation contributes no likelihood pull
    sc = ExactPriorScore(unit_prior, schedule)
    t = 200
    ab = float(schedule.alpha_bar_at(t))
    x = np.array([1.3])
    x_hat = np.sqrt(ab) * x  # unit-prior denoiser output
    obs = Observation(y=x_hat, operator=identity_operator(1), sigma_y=1.0)
    guided = GuidedScore(sc, schedule, obs, xi=1.0)
    np.testing.assert_allclose(guided(x, t), sc(x, t), atol=1e-12)


def test_guided_score_xi_zero(unit_prior, running_obs, schedule):
    sc = ExactPriorScore(unit_prior, schedule)
    guided = GuidedScore(sc, schedule, running_obs, xi=0.0)
    x = np.linspace(-2, 2, 9)[:, None]
    np.testing.assert_allclose(guided(x, 300.0), sc(x, 300.0))


def test_guided_score_matches_exact_near_zero(unit_prior, running_obs, running_posterior, schedule):
    exact = ExactPosteriorScore(running_posterior, schedule)
    guided = GuidedScore(ExactPriorScore(unit_prior, schedule), schedule, running_obs, xi=1.0)
    xs = np.linspace(-3, 3, 61)[:, None]
    # the residual approximation error scales with 1 - alpha_bar(t)
    assert np.max(np.abs(guided(xs, 1.0) - exact(xs, 1.0))) <= 1e-3
    assert np.max(np.abs(guided(xs, 1e-3) - exact(xs, 1e-3))) <= 1e-6


def test_guided_score_stopgrad_variant(unit_prior, running_obs, schedule):
    full = GuidedScore(ExactPriorScore(unit_prior, schedule), schedule, running_obs,
                       xi=1.0, jacobian="full")
    stop = GuidedScore(ExactPriorScore(unit_prior, schedule), schedule, running_obs,
                       xi=1.0, jacobian="stopgrad")
    x = np.array([[0.3]])
    t = 500.0
    ab = float(schedule.alpha_bar_at(t))
    # unit prior: full-chain Jacobian is sqrt(ab) vs 1/sqrt(ab) for stopgrad
    diff_full = full(x, t) - ExactPriorScore(unit_prior, schedule)(x, t)
    diff_stop = stop(x, t) - ExactPriorScore(unit_prior, schedule)(x, t)
    assert diff_stop[0, 0] == pytest.approx(diff_full[0, 0] / ab)


def test_prior_grad_estimate_expectation(unit_prior, schedule):
    # exact-coefficient estimator is unbiased for the prior score
    sc = ExactPriorScore(unit_prior, schedule)
    rng = np.random.default_rng(1)
    t1 = 50.0
    r2 = gaussian_conditional_var(schedule, t1, 1.0)
    ab = float(schedule.alpha_bar_at(t1))
    assert r2 == pytest.approx(1 - ab)  # unit prior collapses to 1 - ab
    w = exact_prior_grad_weight(schedule, t1, r2)
    est = prior_grad_estimate(sc, schedule, np.full((100_000, 1), 1.0), t1, w, rng=rng)
    se = est.std(ddof=1) / np.sqrt(est.size)
    assert est.mean() == pytest.approx(-1.0, abs=3 * se)


def test_prior_grad_estimate_mode_and_linearity(unit_prior, schedule):
    sc = ExactPriorScore(unit_prior, schedule)
    x = np.zeros((50_000, 1))
    est1 = prior_grad_estimate(sc, schedule, x, 100.0, 1.0,
                               rng=np.random.default_rng(2))
    se = est1.std(ddof=1) / np.sqrt(est1.size)
    assert abs(est1.mean()) <= 3 * se
    eps = np.random.default_rng(3).standard_normal(x.shape)
    a = prior_grad_estimate(sc, schedule, x + 1.0, 100.0, 1.0, eps=eps)
    b = prior_grad_estimate(sc, schedule, x + 1.0, 100.0, 2.0, eps=eps)
    np.testing.assert_allclose(b, 2 * a)


def test_prior_grad_estimate_validation(unit_prior, schedule):
    sc = ExactPriorScore(unit_prior, schedule)
    with pytest.raises(ValueError):
        prior_grad_estimate(sc, schedule, np.zeros(1), 0.0, 1.0,
                            rng=np.random.default_rng(0))
    with pytest.raises(ValueError):
        prior_grad_estimate(sc, schedule, np.zeros(1), 10.0, -1.0,
                            rng=np.random.default_rng(0))


@pytest.mark.parametrize("t1", [10.0, 50.0, 200.0])
def test_prior_grad_identity_general_gaussian(schedule, t1):
    # N(m, sigma^2) prior: exact-weight estimator mean equals -(x - m)/sigma^2
    m, sig2 = 0.7, 2.5
    prior = gaussian(m, sig2)
    sc = ExactPriorScore(prior, schedule)
    r2 = gaussian_conditional_var(schedule, t1, sig2)
    w = exact_prior_grad_weight(schedule, t1, r2)
    rng = np.random.default_rng(int(t1))
    x0 = 2.0
    est = prior_grad_estimate(sc, schedule, np.full((100_000, 1), x0), t1, w, rng=rng)
    se = est.std(ddof=1) / np.sqrt(est.size)
    assert est.mean() == pytest.approx(-(x0 - m) / sig2, abs=3 * se)


def test_score_decomposition_identity(two_mode_prior, running_obs, two_mode_posterior, schedule):
    # conditional score minus prior score equals the evidence-side gradient
    prior_sc = ExactPriorScore(two_mode_prior, schedule)
    post_sc = ExactPosteriorScore(two_mode_posterior, schedule)
    for t, x in ((0.0, 0.0), (137.0, 0.7), (600.0, -1.1)):
        xt = np.array([x])
        lhs = post_sc(xt, t) - prior_sc(xt, t)
        rhs = observation_evidence_score(two_mode_prior, running_obs, schedule, xt, t)
        np.testing.assert_allclose(lhs, rhs, rtol=1e-8)


def test_batched_posterior_score_matches_single(two_mode_prior, schedule):
    from dptraverse.posterior import batched_gm_posterior_params, gm_posterior

    op = identity_operator(1)
    Y = np.array([[0.3], [1.0], [-2.0]])
    log_w, means, covs = batched_gm_posterior_params(two_mode_prior, op, 1.0, Y)
    batched = BatchedPosteriorScore(log_w, means, covs, schedule)
    x = np.array([[0.1], [0.4], [-0.2]])
    got = batched(x, 250.0)
    for i in range(3):
        obs = Observation(y=Y[i], operator=op, sigma_y=1.0)
        single = ExactPosteriorScore(gm_posterior(two_mode_prior, obs), schedule)
        assert got[i, 0] == pytest.approx(single(x[i], 250.0)[0], rel=1e-10)


def test_one_sided_lipschitz_affine(running_posterior, schedule):
    # affine posterior score: constant is -1/max variance, about -1
    sc = ExactPosteriorScore(running_posterior, schedule)
    ls = one_sided_lipschitz(sc, 1, np.arange(0.0, 1001.0, 100.0),
                             np.random.default_rng(4), n_pairs=4000)
    assert ls == pytest.approx(-1.0, abs=1e-3)
