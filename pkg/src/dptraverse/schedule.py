"""Variance-preserving diffusion schedule.

The schedule stores the discrete noise-retention sequence alpha_bar[0..T]
with alpha_bar[0] = 1 and alpha_bar[T] close to 0.  Continuous-time queries
interpolate log(alpha_bar) piecewise linearly, which keeps alpha_bar(t)
positive and makes the SDE coefficients f(t) and g^2(t) piecewise constant:

    f(t)   = d log sqrt(alpha_bar(t)) / dt = kappa / 2
    g^2(t) = d(1 - alpha_bar)/dt - 2 f(t) (1 - alpha_bar) = -kappa

where kappa is the slope of log(alpha_bar) on the grid interval containing t.
The forward noising kernel is x_t = sqrt(alpha_bar_t) x_0
+ sqrt(1 - alpha_bar_t) eps.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Floor applied before taking logs so alpha_bar_T = 0 never produces -inf.
_LOG_FLOOR = 1e-12


@dataclass(frozen=True)
class Schedule:
    """Immutable discrete VP schedule with continuous interpolation."""

    alpha_bar: np.ndarray

    _log_ab: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        ab = np.asarray(self.alpha_bar, dtype=float)
        if ab.ndim != 1 or ab.size < 2:
            raise ValueError("alpha_bar must be a 1D array of length T+1 with T >= 1")
        if ab[0] != 1.0:
            raise ValueError("alpha_bar[0] must be exactly 1")
        if np.any(np.diff(ab) >= 0):
            raise ValueError("alpha_bar must be strictly decreasing")
        if ab[-1] < 0 or np.any(ab > 1):
            raise ValueError("alpha_bar values must lie in [0, 1]")
        object.__setattr__(self, "alpha_bar", ab)
        object.__setattr__(self, "_log_ab", np.log(np.maximum(ab, _LOG_FLOOR)))

    @property
    def num_steps(self) -> int:
        return self.alpha_bar.size - 1

    def _check_time(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0) or np.any(t > self.num_steps):
            raise ValueError(f"time {t} outside [0, {self.num_steps}]")
        return t

    def log_alpha_bar(self, t) -> np.ndarray:
        """Piecewise-linear interpolation of log(alpha_bar) at continuous t."""
        t = self._check_time(t)
        return np.interp(t, np.arange(self.num_steps + 1), self._log_ab)

    def alpha_bar_at(self, t) -> np.ndarray:
        return np.exp(self.log_alpha_bar(t))

    def coeffs(self, t) -> tuple[float, float]:
        """SDE coefficients (f, g^2) at time t, per unit grid time.

        Constant on each grid interval; integer t >= 1 uses the interval
        (t-1, t], so a reverse step from t to t-1 integrates exactly the
        interval these coefficients describe.
        """
        t = float(self._check_time(t))
        k = min(max(int(np.ceil(t)), 1), self.num_steps)
        kappa = self._log_ab[k] - self._log_ab[k - 1]
        f = 0.5 * kappa
        g2 = -kappa
        return f, g2

    def forward_sample(self, x0: np.ndarray, t, rng: np.random.Generator) -> np.ndarray:
        """Draw x_t ~ N(sqrt(alpha_bar_t) x0, (1 - alpha_bar_t) I).

        At t = 0 this returns x0 unchanged.  Broadcasts over leading axes
        of x0; one noise draw per entry.
        """
        ab = float(self.alpha_bar_at(t))
        x0 = np.asarray(x0, dtype=float)
        if ab == 1.0:
            return x0.copy()
        return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * rng.standard_normal(x0.shape)


def make_linear_schedule(num_steps: int, beta_min: float, beta_max: float) -> Schedule:
    """Discrete VP schedule with per-step rates linearly spaced in [beta_min, beta_max].

    alpha_bar[t] = prod_{s<=t} (1 - beta_s), computed as a cumulative sum of
    log1p terms for accuracy near alpha_bar ~ 0.
    """
    if num_steps < 2:
        raise ValueError("num_steps must be >= 2")
    if not (0.0 < beta_min <= beta_max < 1.0):
        raise ValueError("need 0 < beta_min <= beta_max < 1")
    betas = np.linspace(beta_min, beta_max, num_steps)
    log_ab = np.concatenate([[0.0], np.cumsum(np.log1p(-betas))])
    alpha_bar = np.exp(log_ab)
    alpha_bar[0] = 1.0
    return Schedule(alpha_bar=alpha_bar)


DEFAULT_T = 1000
DEFAULT_BETA_MIN = 1e-4
DEFAULT_BETA_MAX = 0.02


def default_schedule() -> Schedule:
    """The library default: linear rates, T = 1000, beta in [1e-4, 0.02]."""
    return make_linear_schedule(DEFAULT_T, DEFAULT_BETA_MIN, DEFAULT_BETA_MAX)
