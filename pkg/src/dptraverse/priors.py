"""Analytic priors: Gaussian mixtures and tabulated grid densities.

Gaussian mixtures are the workhorse: under the VP forward kernel each
component N(m, S) maps to N(sqrt(ab) m, ab S + (1 - ab) I) with unchanged
weights, so the diffused density, score and score Jacobian are all exact.

Grid priors tabulate a 1D or 2D log-density on a uniform lattice and provide
a quadrature-based diffused score, used as an independent oracle for
non-Gaussian log-concave tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .schedule import Schedule

_LOG_2PI = np.log(2.0 * np.pi)


def logsumexp(a, axis=-1, keepdims=False):
    """Stable log-sum-exp over one axis (lean hot-path variant)."""
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):  # all-(-inf) rows legitimately yield -inf
        out = m + np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True))
    return out if keepdims else np.squeeze(out, axis=axis)


def _mixture_terms(x, means, precisions, logdets, log_weights):
    """Weighted log component densities and precision-whitened residuals.

    x: (..., n); means: (..., K, n) (leading batch axes allowed);
    precisions: (K, n, n); logdets: (K,) log|S_k|.  Returns
    (terms (..., K), sol (..., K, n)) with sol_k = P_k (x - m_k), so the
    component scores are -sol and the Mahalanobis terms diff . sol.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    diff = x[..., None, :] - means
    sol = np.einsum("kij,...kj->...ki", precisions, diff)
    maha = np.einsum("...ki,...ki->...k", diff, sol)
    terms = -0.5 * (maha + logdets + n * _LOG_2PI) + log_weights
    return terms, sol


@dataclass(frozen=True)
class GaussianMixture:
    """Mixture of K Gaussians in n dimensions.

    weights: (K,) probabilities summing to 1.
    means:   (K, n).
    covs:    (K, n, n) symmetric positive definite.
    """

    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray

    _chols: tuple = field(init=False, repr=False)
    _precisions: np.ndarray = field(init=False, repr=False)
    _logdets: np.ndarray = field(init=False, repr=False)
    _log_w: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        m = np.atleast_2d(np.asarray(self.means, dtype=float))
        C = np.asarray(self.covs, dtype=float)
        if C.ndim == 2:
            C = C[None]
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("mixture weights must sum to 1 within 1e-12")
        if np.any(w < 0):
            raise ValueError("mixture weights must be nonnegative")
        if m.shape[0] != w.size or C.shape[0] != w.size:
            raise ValueError("weights, means, covs must agree on K")
        if C.shape[1:] != (m.shape[1], m.shape[1]):
            raise ValueError("covariance shape must be (K, n, n)")
        # Cholesky doubles as the SPD check.
        chols = tuple(np.linalg.cholesky(0.5 * (Ck + Ck.T)) for Ck in C)
        precisions, logdets = _precision_stack(chols)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "covs", C)
        object.__setattr__(self, "_chols", chols)
        object.__setattr__(self, "_precisions", precisions)
        object.__setattr__(self, "_logdets", logdets)
        with np.errstate(divide="ignore"):
            object.__setattr__(self, "_log_w", np.log(w))

    @property
    def n_components(self) -> int:
        return self.weights.size

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def logpdf(self, x) -> np.ndarray:
        """Log density at x of shape (..., n), evaluated in log space."""
        terms, _ = _mixture_terms(x, self.means, self._precisions, self._logdets, self._log_w)
        return logsumexp(terms, axis=-1)

    def score(self, x) -> np.ndarray:
        """Exact gradient of the log density at x of shape (..., n)."""
        terms, sol = _mixture_terms(x, self.means, self._precisions, self._logdets, self._log_w)
        resp = np.exp(terms - logsumexp(terms, axis=-1, keepdims=True))
        return -np.sum(resp[..., None] * sol, axis=-2)

    def score_jacobian(self, x) -> np.ndarray:
        """Exact Jacobian d score / dx at x of shape (..., n), shape (..., n, n).

        For a mixture, J = sum_k r_k (-P_k) + sum_k r_k s_k s_k^T - s s^T,
        with P_k the component precisions, s_k the component scores and
        r_k the responsibilities.
        """
        terms, sol = _mixture_terms(x, self.means, self._precisions, self._logdets, self._log_w)
        resp = np.exp(terms - logsumexp(terms, axis=-1, keepdims=True))
        comp_scores = -sol
        s = np.sum(resp[..., None] * comp_scores, axis=-2)
        jac = -np.einsum("...k,kij->...ij", resp, self._precisions)
        jac += np.einsum("...k,...ki,...kj->...ij", resp, comp_scores, comp_scores)
        jac -= s[..., :, None] * s[..., None, :]
        return jac

    def responsibilities(self, x) -> np.ndarray:
        """Posterior component probabilities at x, shape (..., K)."""
        terms, _ = _mixture_terms(x, self.means, self._precisions, self._logdets, self._log_w)
        return np.exp(terms - logsumexp(terms, axis=-1, keepdims=True))

    def quantiles(self, probs) -> np.ndarray:
        """Quantile function of a 1D mixture, by bisection on the CDF."""
        from scipy.stats import norm

        if self.dim != 1:
            raise ValueError("quantiles are defined for 1D mixtures")
        probs = np.asarray(probs, dtype=float)
        locs = self.means.ravel()
        scales = np.sqrt(self.covs.ravel())
        span = float(np.max(np.abs(locs)) + 10.0 * scales.max())
        lo = np.full(probs.shape, -span)
        hi = np.full(probs.shape, span)
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            cdf = sum(w * norm.cdf((mid - locs[k]) / scales[k])
                      for k, w in enumerate(self.weights))
            above = cdf >= probs
            hi = np.where(above, mid, hi)
            lo = np.where(above, lo, mid)
        return 0.5 * (lo + hi)

    def sample(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
        """Draw samples: component index by weight, then the Gaussian."""
        m = 1 if size is None else int(size)
        ks = rng.choice(self.n_components, size=m, p=self.weights)
        eps = rng.standard_normal((m, self.dim))
        out = np.empty((m, self.dim))
        for k in range(self.n_components):
            sel = ks == k
            if np.any(sel):
                out[sel] = self.means[k] + eps[sel] @ self._chols[k].T
        return out[0] if size is None else out

    def mean(self) -> np.ndarray:
        return self.weights @ self.means

    def covariance(self) -> np.ndarray:
        mbar = self.mean()
        centered = self.means - mbar
        second = np.einsum("k,kij->ij", self.weights, self.covs)
        spread = np.einsum("k,ki,kj->ij", self.weights, centered, centered)
        return second + spread

    def diffuse(self, schedule: Schedule, t) -> "GaussianMixture":
        """Exact law of X_t under the VP forward kernel started from this mixture."""
        ab = float(schedule.alpha_bar_at(t))
        eye = np.eye(self.dim)
        return GaussianMixture(
            weights=self.weights.copy(),
            means=np.sqrt(ab) * self.means,
            covs=np.stack([ab * Ck + (1.0 - ab) * eye for Ck in self.covs]),
        )


def _precision_stack(chols):
    """Precision matrices and log determinants from Cholesky factors."""
    n = chols[0].shape[0]
    eye = np.eye(n)
    precisions = np.stack(
        [np.linalg.solve(L.T, np.linalg.solve(L, eye)) for L in chols])
    logdets = np.array([2.0 * np.sum(np.log(np.diag(L))) for L in chols])
    return precisions, logdets


def gaussian(mean, cov) -> GaussianMixture:
    """Single-component mixture, accepting scalars in 1D."""
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.asarray(cov, dtype=float)
    if cov.ndim == 0:
        cov = cov[None, None]
    elif cov.ndim == 1:
        cov = np.diag(cov)
    return GaussianMixture(weights=np.array([1.0]), means=mean[None], covs=cov[None])


# ---------------------------------------------------------------------------
# Batched mixtures: per-sample means / log-weights with shared covariances.
# Used by the sweep runner where every trial has its own conditional law.
# ---------------------------------------------------------------------------


def batched_mixture_score(x, log_weights, means, covs) -> np.ndarray:
    """Score of per-sample mixtures.

    x:           (B, n) evaluation points.
    log_weights: (B, K) unnormalized log weights per sample.
    means:       (B, K, n) per-sample component means.
    covs:        (K, n, n) covariances shared across the batch.
    """
    chols = [np.linalg.cholesky(C) for C in np.asarray(covs, dtype=float)]
    precisions, logdets = _precision_stack(chols)
    terms, sol = _mixture_terms(x, means, precisions, logdets, log_weights)
    resp = np.exp(terms - logsumexp(terms, axis=-1, keepdims=True))
    return -np.sum(resp[..., None] * sol, axis=-2)


# ---------------------------------------------------------------------------
# Grid priors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridPrior:
    """Tabulated log-density on a uniform lattice, normalized at construction.

    1D: axes = (grid,) with log_density of shape (N,).
    2D: axes = (grid_x, grid_y) with log_density of shape (Nx, Ny).
    """

    axes: tuple
    log_density: np.ndarray

    def __post_init__(self):
        axes = tuple(np.asarray(a, dtype=float) for a in self.axes)
        logp = np.asarray(self.log_density, dtype=float)
        if len(axes) not in (1, 2):
            raise ValueError("grid priors support dimension 1 or 2")
        if logp.shape != tuple(a.size for a in axes):
            raise ValueError("log_density shape must match the grid axes")
        for a in axes:
            steps = np.diff(a)
            if not np.allclose(steps, steps[0], rtol=1e-10):
                raise ValueError("grid axes must be uniform")
        logp = logp - _grid_log_norm(axes, logp)
        p = np.exp(logp)
        boundary = _boundary_max(p)
        if boundary > 1e-12:
            raise ValueError(
                f"density must decay below 1e-12 at the grid boundary (got {boundary:.3e})"
            )
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "log_density", logp)

    @property
    def dim(self) -> int:
        return len(self.axes)

    def spacing(self, axis: int = 0) -> float:
        return float(self.axes[axis][1] - self.axes[axis][0])

    def sample(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
        """Inverse-CDF sampling on the lattice (1D only)."""
        if self.dim != 1:
            raise NotImplementedError("lattice sampling implemented in 1D")
        a = self.axes[0]
        p = self.density()
        cdf = np.concatenate([[0.0], np.cumsum(0.5 * (p[1:] + p[:-1]) * np.diff(a))])
        cdf = cdf / cdf[-1]
        u = rng.random(1 if size is None else int(size))
        draws = np.interp(u, cdf, a)[:, None]
        return draws[0] if size is None else draws

    def density(self) -> np.ndarray:
        return np.exp(self.log_density)

    def check_in_support(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        for d, a in enumerate(self.axes):
            v = x[..., d] if self.dim > 1 else x
            if np.any(v < a[0]) or np.any(v > a[-1]):
                raise ValueError("query point outside the tabulated support")


def _grid_log_norm(axes, logp):
    """Log of the trapezoid integral of exp(logp) over the lattice."""
    shift = logp.max()
    p = np.exp(logp - shift)
    for d, a in enumerate(reversed(axes)):
        p = np.trapezoid(p, dx=a[1] - a[0], axis=-1)
    return shift + np.log(p)


def _boundary_max(p):
    if p.ndim == 1:
        return max(p[0], p[-1])
    return max(p[0, :].max(), p[-1, :].max(), p[:, 0].max(), p[:, -1].max())


def make_grid_prior(log_density_fn, bounds=(-8.0, 8.0), points: int = 4096, dim: int = 1) -> GridPrior:
    """Tabulate an unnormalized log-density callable on a uniform lattice."""
    lo, hi = bounds
    axis = np.linspace(lo, hi, points)
    if dim == 1:
        logp = log_density_fn(axis)
        return GridPrior(axes=(axis,), log_density=logp)
    if dim == 2:
        X, Y = np.meshgrid(axis, axis, indexing="ij")
        logp = log_density_fn(np.stack([X, Y], axis=-1))
        return GridPrior(axes=(axis, axis), log_density=logp)
    raise ValueError("dim must be 1 or 2")


def quartic_tilted_log_density(x):
    """-x^2/2 - x^4/4, a strongly log-concave non-Gaussian test density."""
    return -0.5 * x**2 - 0.25 * x**4


def make_quartic_prior(bounds=(-8.0, 8.0), points: int = 4096) -> GridPrior:
    return make_grid_prior(quartic_tilted_log_density, bounds=bounds, points=points, dim=1)


def _diffused_grid_density(prior: GridPrior, ab: float) -> np.ndarray:
    """Density of X_t tabulated on the prior's own lattice (1D and 2D).

    Direct quadrature of p0 against the VP kernel; the isotropic kernel
    factorizes, so 2D reduces to two sweeps of the 1D quadrature.
    """
    scale = np.sqrt(ab)
    var = 1.0 - ab
    p = prior.density()
    for d in range(prior.dim):
        a = prior.axes[d]
        h = prior.spacing(d)
        # trapezoid weights on the source lattice
        w = np.full(a.size, h)
        w[0] = w[-1] = 0.5 * h
        kern = np.exp(-0.5 * (a[:, None] - scale * a[None, :]) ** 2 / var)
        kern *= w[None, :] / np.sqrt(2.0 * np.pi * var)
        p = np.moveaxis(np.tensordot(kern, np.moveaxis(p, d, 0), axes=(1, 0)), 0, d)
    return p


def diffused_score_spline(prior: GridPrior, schedule: Schedule, t) -> CubicSpline:
    """Cubic spline of the diffused score over the interior lattice.

    Convolves the tabulated density with the VP kernel by quadrature over
    the lattice and differentiates the log by central differences.  At t = 0
    the tabulated log-density is differentiated directly.
    """
    ab = float(schedule.alpha_bar_at(t))
    if prior.dim != 1:
        raise NotImplementedError("diffused score queries are 1D; use the lattice tools in 2D")
    a = prior.axes[0]
    h = prior.spacing()
    if ab >= 1.0:
        logp = prior.log_density
    else:
        var = 1.0 - ab
        if np.sqrt(var) < 2.0 * h:
            raise ValueError("diffusion kernel narrower than twice the grid spacing")
        logp = np.log(np.maximum(_diffused_grid_density(prior, ab), 1e-300))
    score = (logp[2:] - logp[:-2]) / (2.0 * h)
    return CubicSpline(a[1:-1], score)


def grid_diffused_score(prior: GridPrior, schedule: Schedule, t, x) -> np.ndarray:
    """Score of the diffused grid prior at query points x (spline-interpolated)."""
    prior.check_in_support(x)
    return diffused_score_spline(prior, schedule, t)(np.asarray(x, dtype=float))


def strong_concavity_mu(prior, likelihood_curvature=None) -> float:
    """Largest mu with -(d^2/dx^2) log posterior >= mu everywhere.

    For a single Gaussian prior this is lambda_min(Sigma^-1 + H) with H the
    likelihood curvature (A^T A / sigma_y^2, or None for prior alone).  For a
    1D grid prior the curvature is the minimum second difference of the
    negative tabulated log-density over interior points, plus the scalar H.
    Raises if the resulting posterior is not log-concave.
    """
    if isinstance(prior, GaussianMixture):
        if prior.n_components != 1:
            raise ValueError("strong concavity is only defined here for K = 1")
        precision = np.linalg.inv(prior.covs[0])
        if likelihood_curvature is not None:
            precision = precision + np.asarray(likelihood_curvature, dtype=float)
        mu = float(np.linalg.eigvalsh(precision).min())
    elif isinstance(prior, GridPrior):
        if prior.dim != 1:
            raise NotImplementedError("grid curvature scan implemented in 1D")
        h = prior.spacing()
        neg_logp = -prior.log_density
        curv = (neg_logp[2:] - 2.0 * neg_logp[1:-1] + neg_logp[:-2]) / h**2
        hcurv = 0.0 if likelihood_curvature is None else float(np.asarray(likelihood_curvature).reshape(()))
        curv = curv + hcurv
        mu = float(curv.min())
    else:
        raise TypeError(f"unsupported prior type {type(prior).__name__}")
    if mu <= 0:
        raise ValueError(f"posterior is not strongly log-concave (min curvature {mu:.3e})")
    return mu
