"""Distortion and perception measurement.

Three W2 estimators with different exactness/scale tradeoffs:

  * w2_gaussian: closed form between Gaussian laws (exact);
  * w2_1d: quantile coupling between equal-size 1D sample sets (exact
    empirical OT in 1D);
  * w2_assign: optimal balanced assignment on the squared-cost matrix
    (exact empirical OT in any dimension, cubic cost, capped at 2048).

gaussian_moment_oracle propagates the exact Gaussian law of the re-noised
Euler-Maruyama chain, enabling closed-form W2 against the true posterior.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .posterior import GaussianPosterior
from .schedule import Schedule


@dataclass(frozen=True)
class DpCurvePoint:
    """One swept (re-noising time -> distortion, perception) measurement.

    Standard errors are NaN when unavailable (single-trial sweeps).
    """

    t0: int
    distortion_mean: float
    distortion_stderr: float
    w2: float
    w2_stderr: float
    n_trials: int

    def __post_init__(self):
        for v in (self.distortion_stderr, self.w2_stderr):
            if not np.isnan(v) and v < 0:
                raise ValueError("standard errors must be >= 0 (or NaN when unavailable)")


def mse(truth: np.ndarray, estimate: np.ndarray) -> tuple[float, float]:
    """Sample mean and standard error of ||x - xhat||^2 over paired rows."""
    truth = np.atleast_2d(np.asarray(truth, dtype=float))
    estimate = np.atleast_2d(np.asarray(estimate, dtype=float))
    if truth.shape != estimate.shape:
        raise ValueError("truth and estimate must have identical shapes")
    if truth.shape[0] < 2:
        raise ValueError("need at least 2 pairs")
    sq = np.sum((truth - estimate) ** 2, axis=-1)
    return float(sq.mean()), float(sq.std(ddof=1) / np.sqrt(sq.size))


def _psd_sqrt(C: np.ndarray) -> np.ndarray:
    """Symmetric square root with eigenvalues clamped at zero."""
    vals, vecs = np.linalg.eigh(0.5 * (C + C.T))
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def w2_gaussian(m1, C1, m2, C2) -> float:
    """Closed-form W2 between N(m1, C1) and N(m2, C2); C1, C2 PSD."""
    m1 = np.atleast_1d(np.asarray(m1, dtype=float))
    m2 = np.atleast_1d(np.asarray(m2, dtype=float))
    C1 = np.atleast_2d(np.asarray(C1, dtype=float))
    C2 = np.atleast_2d(np.asarray(C2, dtype=float))
    for C in (C1, C2):
        if np.linalg.eigvalsh(0.5 * (C + C.T)).min() < -1e-10:
            raise ValueError("covariances must be PSD")
    root1 = _psd_sqrt(C1)
    cross = _psd_sqrt(root1 @ C2 @ root1)
    val = np.sum((m1 - m2) ** 2) + np.trace(C1 + C2 - 2.0 * cross)
    return float(np.sqrt(max(val, 0.0)))


def w2_1d(a: np.ndarray, b: np.ndarray) -> float:
    """Quantile-coupling W2 between equal-size 1D sample sets."""
    a = np.asarray(a, dtype=float).reshape(-1)
    b = np.asarray(b, dtype=float).reshape(-1)
    if a.size != b.size:
        raise ValueError("sample sets must have equal counts")
    return float(np.sqrt(np.mean((np.sort(a) - np.sort(b)) ** 2)))


W2_ASSIGN_CAP = 2048


def w2_assign(a: np.ndarray, b: np.ndarray) -> float:
    """Exact empirical W2 via optimal balanced assignment (m <= 2048).

    Solved with a shortest-augmenting-path assignment routine on the
    squared-distance matrix.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if a.ndim == 2 and a.shape[1] != b.shape[1]:
        raise ValueError("sample sets must share the dimension")
    if a.shape[0] != b.shape[0]:
        raise ValueError("sample sets must have equal counts")
    if a.shape[0] > W2_ASSIGN_CAP:
        raise ValueError(f"assignment estimator capped at {W2_ASSIGN_CAP} samples")
    cost = (
        np.sum(a**2, axis=1)[:, None]
        + np.sum(b**2, axis=1)[None, :]
        - 2.0 * a @ b.T
    )
    rows, cols = linear_sum_assignment(np.maximum(cost, 0.0))
    # re-evaluate the matched pairs directly: the Gram expansion above loses
    # precision near zero cost
    matched = np.sum((a[rows] - b[cols]) ** 2, axis=1)
    return float(np.sqrt(np.mean(matched)))


def w2_samples(a: np.ndarray, b: np.ndarray, rng: np.random.Generator | None = None,
               pair_count: int = 1024, repetitions: int = 8) -> tuple[float, float]:
    """Dispatching empirical W2 with a standard error.

    1D inputs use the quantile estimator on the full sets (stderr from 8
    disjoint-block repetitions).  Higher dimensions subsample `pair_count`
    rows `repetitions` times and average the assignment estimator.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if a.shape[1] == 1:
        value = w2_1d(a, b)
        blocks = min(repetitions, a.shape[0])
        if blocks >= 2 and a.shape[0] >= 2 * blocks:
            pa = np.array_split(a.reshape(-1), blocks)
            pb = np.array_split(b.reshape(-1), blocks)
            reps = [w2_1d(x, y) for x, y in zip(pa, pb)]
            stderr = float(np.std(reps, ddof=1) / np.sqrt(len(reps)))
        else:
            stderr = float("nan")
        return value, stderr
    if rng is None:
        rng = np.random.default_rng(0)
    m = min(pair_count, a.shape[0], W2_ASSIGN_CAP)
    reps = []
    for _ in range(repetitions):
        ia = rng.choice(a.shape[0], size=m, replace=False)
        ib = rng.choice(b.shape[0], size=m, replace=False)
        reps.append(w2_assign(a[ia], b[ib]))
    stderr = float(np.std(reps, ddof=1) / np.sqrt(len(reps))) if len(reps) > 1 else float("nan")
    return float(np.mean(reps)), stderr


def gaussian_moment_oracle(posterior: GaussianPosterior, schedule: Schedule,
                           x_start: np.ndarray, t0: int, stride: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Exact Gaussian law of the re-noised Euler-Maruyama sampler output.

    With a Gaussian posterior the conditional score is affine, so every EM
    step maps a Gaussian to a Gaussian.  The recursion mirrors the sampler
    exactly: initialize at N(sqrt(ab_t0) x_start, (1 - ab_t0) I), then apply
    the sampler's update over the same step grid, with the score of the
    diffused posterior at each step's upper time.  Returns (mean, covariance)
    of the output; t0 = 0 returns (x_start, 0).
    """
    from .solver import Stage2Config

    x_start = np.atleast_1d(np.asarray(x_start, dtype=float))
    n = x_start.size
    t0 = int(t0)
    if t0 < 0 or t0 > schedule.num_steps:
        raise ValueError("t0 outside the schedule range")
    if t0 == 0:
        return x_start.copy(), np.zeros((n, n))
    ab0 = float(schedule.alpha_bar_at(t0))
    mean = np.sqrt(ab0) * x_start
    cov = (1.0 - ab0) * np.eye(n)
    eye = np.eye(n)
    grid = Stage2Config(t0=t0, stride=stride).step_grid()
    for step in range(len(grid) - 1):
        t_hi, t_lo = grid[step], grid[step + 1]
        k = float(schedule.log_alpha_bar(t_hi) - schedule.log_alpha_bar(t_lo))
        ab = float(schedule.alpha_bar_at(t_hi))
        sigma_t = ab * posterior.cov + (1.0 - ab) * eye
        prec_t = np.linalg.inv(sigma_t)
        # sampler update x' = (1 - k/2) x - k s(x) + sqrt(-k) eps with the
        # affine score s(x) = -prec_t (x - sqrt(ab) mean_post)
        gain = (1.0 - 0.5 * k) * eye + k * prec_t
        shift = (-k) * (prec_t @ (np.sqrt(ab) * posterior.mean))
        mean = gain @ mean + shift
        cov = gain @ cov @ gain.T + (-k) * eye
    return mean, cov
