"""Exact posterior laws and the ideal distortion-perception frontier.

For a Gaussian (mixture) prior with linear-Gaussian observations every
posterior quantity is available in closed form by conjugacy:

    cov  = (Sigma^-1 + A^T A / sigma^2)^-1
    mean = cov (Sigma^-1 m + A^T y / sigma^2)

Mixture posteriors reweight components by the per-component evidence
w_k N(y; A m_k, A Sigma_k A^T + sigma^2 I).  These laws are the ground truth
that every algorithmic result in the package is judged against.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .observation import LinearOperator, Observation
from .priors import GaussianMixture, GridPrior, gaussian

_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class GaussianPosterior:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        np.linalg.cholesky(0.5 * (cov + cov.T))  # SPD check
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.size

    def as_mixture(self) -> GaussianMixture:
        return gaussian(self.mean, self.cov)


@dataclass(frozen=True)
class DpEndpoints:
    """Endpoints of the ideal MSE-W2 tradeoff curve."""

    d_star: float
    p_star: float

    def __post_init__(self):
        if self.d_star < 0 or self.p_star < 0:
            raise ValueError("endpoints must be nonnegative")


def _posterior_nat_params(prior: GaussianMixture, obs: Observation):
    if not isinstance(obs.operator, LinearOperator):
        raise TypeError("closed-form posteriors need a linear operator")
    if obs.sigma_y <= 0:
        raise ValueError("closed-form posteriors need sigma_y > 0")
    A = obs.operator.as_matrix()
    return A, A.T @ A / obs.sigma_y**2


def gaussian_posterior(prior: GaussianMixture, obs: Observation) -> GaussianPosterior:
    """Conjugate posterior for a single-Gaussian prior and linear observation."""
    if prior.n_components != 1:
        raise ValueError("gaussian_posterior needs a single-component prior")
    A, lik_prec = _posterior_nat_params(prior, obs)
    prior_prec = np.linalg.inv(prior.covs[0])
    cov = np.linalg.inv(prior_prec + lik_prec)
    mean = cov @ (prior_prec @ prior.means[0] + A.T @ obs.y / obs.sigma_y**2)
    return GaussianPosterior(mean=mean, cov=cov)


def gm_posterior(prior: GaussianMixture, obs: Observation) -> GaussianMixture:
    """Exact mixture posterior by componentwise conjugacy with evidence reweighting."""
    A, lik_prec = _posterior_nat_params(prior, obs)
    sig2 = obs.sigma_y**2
    K = prior.n_components
    means = np.empty_like(prior.means)
    covs = np.empty_like(prior.covs)
    log_ev = np.empty(K)
    for k in range(K):
        prior_prec = np.linalg.inv(prior.covs[k])
        covs[k] = np.linalg.inv(prior_prec + lik_prec)
        means[k] = covs[k] @ (prior_prec @ prior.means[k] + A.T @ obs.y / sig2)
        ev_cov = A @ prior.covs[k] @ A.T + sig2 * np.eye(A.shape[0])
        diff = obs.y - A @ prior.means[k]
        L = np.linalg.cholesky(ev_cov)
        maha = np.sum(np.linalg.solve(L, diff) ** 2)
        log_ev[k] = -0.5 * (maha + 2.0 * np.sum(np.log(np.diag(L))) + A.shape[0] * _LOG_2PI)
    with np.errstate(divide="ignore"):
        logw = np.log(prior.weights) + log_ev
    weights = np.exp(logw - logsumexp(logw))
    weights = weights / weights.sum()
    return GaussianMixture(weights=weights, means=means, covs=covs)


def batched_gm_posterior_params(prior: GaussianMixture, operator: LinearOperator,
                                sigma_y: float, Y: np.ndarray):
    """Per-sample posterior mixture parameters for a batch of observations.

    Returns (log_weights (B, K), means (B, K, n), covs (K, n, n)); covariances
    do not depend on y, so they are shared across the batch.
    """
    if sigma_y <= 0:
        raise ValueError("need sigma_y > 0")
    A = operator.as_matrix()
    sig2 = sigma_y**2
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    K, n = prior.means.shape
    covs = np.empty_like(prior.covs)
    means = np.empty((Y.shape[0], K, n))
    log_w = np.empty((Y.shape[0], K))
    for k in range(K):
        prior_prec = np.linalg.inv(prior.covs[k])
        covs[k] = np.linalg.inv(prior_prec + A.T @ A / sig2)
        base = covs[k] @ prior_prec @ prior.means[k]
        means[:, k, :] = base + Y @ (covs[k] @ A.T / sig2).T
        ev_cov = A @ prior.covs[k] @ A.T + sig2 * np.eye(A.shape[0])
        L = np.linalg.cholesky(ev_cov)
        diff = Y - prior.means[k] @ A.T
        maha = np.sum(np.linalg.solve(L, diff.T) ** 2, axis=0)
        with np.errstate(divide="ignore"):
            log_w[:, k] = np.log(prior.weights[k]) - 0.5 * (
                maha + 2.0 * np.sum(np.log(np.diag(L))) + A.shape[0] * _LOG_2PI
            )
    log_w = log_w - logsumexp(log_w, axis=1, keepdims=True)
    return log_w, means, covs


def mmse(post) -> np.ndarray:
    """Posterior mean."""
    if isinstance(post, GaussianPosterior):
        return post.mean.copy()
    return post.mean()


def map_point(post, max_iter: int = 200, grad_tol: float = 1e-10) -> np.ndarray:
    """Global posterior mode.

    Gaussian: the mean.  Mixture: damped Newton ascent restarted from every
    component mean and from the posterior mean, keeping the highest-density
    converged point; ties broken toward the lowest-index start.
    """
    if isinstance(post, GaussianPosterior):
        return post.mean.copy()
    starts = np.vstack([post.means, post.mean()[None]])
    best_x, best_logp = None, -np.inf
    for x0 in starts:
        x, logp, converged = _newton_ascent(post, x0, max_iter, grad_tol)
        if not converged:
            warnings.warn("mode search did not converge; using best iterate", RuntimeWarning)
        if logp > best_logp + 1e-12:
            best_logp, best_x = logp, x
    return best_x


def _newton_ascent(mix: GaussianMixture, x0, max_iter, grad_tol):
    x = np.array(x0, dtype=float)
    logp = float(mix.logpdf(x))
    for _ in range(max_iter):
        g = mix.score(x)
        if np.linalg.norm(g) < grad_tol:
            return x, logp, True
        H = mix.score_jacobian(x)
        try:
            step = np.linalg.solve(-H, g)
            if np.dot(step, g) <= 0:  # Hessian not negative definite here
                step = g
        except np.linalg.LinAlgError:
            step = g
        # backtracking halving on the log density
        scale = 1.0
        for _ in range(60):
            cand = x + scale * step
            cand_logp = float(mix.logpdf(cand))
            if cand_logp > logp:
                x, logp = cand, cand_logp
                break
            scale *= 0.5
        else:
            return x, logp, True  # no ascent direction left: at a mode
    return x, logp, False


def posterior_covariance(post) -> np.ndarray:
    if isinstance(post, GaussianPosterior):
        return post.cov.copy()
    return post.covariance()


def ideal_curve(endpoints: DpEndpoints, perception: float) -> float:
    """Ideal frontier D(P) = D* + max(P* - P, 0)^2."""
    if perception < 0:
        raise ValueError("perception must be >= 0")
    gap = max(endpoints.p_star - perception, 0.0)
    return endpoints.d_star + gap * gap


def interpolated_estimator(x_perceptual, x_mmse, perception: float, p_star: float) -> np.ndarray:
    """Convex combination traversing the ideal curve between the endpoints."""
    if p_star <= 0:
        raise ZeroDivisionError("p_star must be positive to interpolate")
    if not 0.0 <= perception <= p_star:
        raise ValueError("perception must lie in [0, p_star]")
    lam = perception / p_star
    return (1.0 - lam) * np.asarray(x_perceptual, dtype=float) + lam * np.asarray(x_mmse, dtype=float)


def dp_endpoints(prior: GaussianMixture, operator: LinearOperator, sigma_y: float,
                 n_mc: int = 10_000, rng: np.random.Generator | None = None,
                 pair_count: int = 2048, repetitions: int = 8) -> DpEndpoints:
    """Tradeoff endpoints D* (MSE of the posterior mean) and P* (W2 to its law).

    Single-Gaussian priors are handled in closed form.  Mixtures use Monte
    Carlo: D* averages the per-observation posterior covariance trace over
    n_mc observation draws (law of total variance), and P* is the empirical
    assignment-W2 between paired prior / posterior-mean samples, averaged
    over `repetitions` resamples of `pair_count` pairs.
    """
    from .metrics import w2_assign, w2_gaussian

    if prior.n_components == 1:
        A = operator.as_matrix()
        sig2 = sigma_y**2
        prior_prec = np.linalg.inv(prior.covs[0])
        cov = np.linalg.inv(prior_prec + A.T @ A / sig2)
        d_star = float(np.trace(cov))
        # posterior mean is affine in y; y ~ N(A m, A Sigma A^T + sig2 I)
        B = cov @ A.T / sig2
        y_cov = A @ prior.covs[0] @ A.T + sig2 * np.eye(A.shape[0])
        mmse_cov = B @ y_cov @ B.T
        p_star = w2_gaussian(prior.means[0], prior.covs[0], prior.means[0], mmse_cov)
        return DpEndpoints(d_star=d_star, p_star=p_star)

    if rng is None:
        raise ValueError("mixture endpoints need a random stream")
    if n_mc < 10_000:
        raise ValueError("mixture endpoints need n_mc >= 10^4")

    X = prior.sample(rng, size=n_mc)
    Y = operator.apply(X) + sigma_y * rng.standard_normal((n_mc, operator.out_dim))
    log_w, means, covs = batched_gm_posterior_params(prior, operator, sigma_y, Y)
    w = np.exp(log_w)
    mm = np.einsum("bk,bkn->bn", w, means)
    tr_covs = np.trace(covs, axis1=1, axis2=2)
    spread = np.sum(w * np.sum((means - mm[:, None, :]) ** 2, axis=-1), axis=-1)
    d_star = float(np.mean(w @ tr_covs + spread))

    vals = []
    for _ in range(repetitions):
        xa = prior.sample(rng, size=pair_count)
        xb = prior.sample(rng, size=pair_count)
        yb = operator.apply(xb) + sigma_y * rng.standard_normal((pair_count, operator.out_dim))
        lw, mus, cvs = batched_gm_posterior_params(prior, operator, sigma_y, yb)
        mb = np.einsum("bk,bkn->bn", np.exp(lw), mus)
        vals.append(w2_assign(xa, mb))
    return DpEndpoints(d_star=d_star, p_star=float(np.mean(vals)))


def grid_posterior_stats(prior: GridPrior, obs: Observation):
    """Quadrature posterior statistics for a 1D grid prior.

    Returns (mmse, map, mu, variance): trapezoid mean, parabolic-refined mode,
    minimum posterior curvature, and the posterior variance (the per-instance
    contribution to D*).  Raises if posterior mass leaks past the lattice.
    """
    if prior.dim != 1:
        raise NotImplementedError("quadrature posterior stats implemented in 1D")
    if obs.sigma_y <= 0:
        raise ValueError("grid posterior needs sigma_y > 0")
    a = prior.axes[0]
    h = prior.spacing()
    pred = obs.operator.apply(a[:, None]) if obs.operator.in_dim == 1 else None
    if pred is None:
        raise ValueError("grid posterior needs a 1D observation operator")
    resid = obs.y - pred
    log_post = prior.log_density - 0.5 * np.sum(resid**2, axis=-1) / obs.sigma_y**2
    log_post = log_post - log_post.max()
    p = np.exp(log_post)
    z = np.trapezoid(p, dx=h)
    p = p / z
    edge_mass = (p[0] + p[1] + p[-2] + p[-1]) * h
    if edge_mass > 1e-9:
        raise ValueError(f"posterior mass leaks outside the grid ({edge_mass:.3e})")
    mean = float(np.trapezoid(a * p, dx=h))
    var = float(np.trapezoid((a - mean) ** 2 * p, dx=h))
    j = int(np.argmax(log_post))
    j = min(max(j, 1), a.size - 2)
    # parabolic refinement of the mode through three lattice points
    y0, y1, y2 = log_post[j - 1], log_post[j], log_post[j + 1]
    denom = y0 - 2.0 * y1 + y2
    offset = 0.0 if denom >= 0 else 0.5 * (y0 - y2) / denom
    mode = float(a[j] + np.clip(offset, -1.0, 1.0) * h)
    neg = -log_post
    curv = (neg[2:] - 2.0 * neg[1:-1] + neg[:-2]) / h**2
    mu = float(curv.min())
    return mean, mode, mu, var
