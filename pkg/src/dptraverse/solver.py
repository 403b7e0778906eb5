"""Two-stage reconstruction: stochastic-gradient MAP ascent, then re-noised
posterior sampling.

Stage 1 climbs the (unnormalized) log posterior with per-iteration gradients

    g = loglik_grad(obs, x) + w * s(sqrt(ab_t1) x + sqrt(1 - ab_t1) eps, t1)

using adaptive-moment ascent with a cosine step schedule; the single weight
w absorbs all constant factors of the prior term.

Stage 2 forward-noises the Stage-1 point to a chosen time t0 and integrates
the reverse conditional SDE back to 0 with one Euler-Maruyama step per grid
index:

    x_{t-1} = x_t - (f(t) x_t - g^2(t) s(x_t, t)) + g(t) eps_t

t0 = 0 leaves the Stage-1 point untouched; t0 = T reproduces full posterior
sampling.  Both stages are deterministic given the caller's random stream
and broadcast over a leading batch axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .observation import Observation, loglik_grad, pinv_init
from .schedule import Schedule
from .scores import prior_grad_estimate


@dataclass(frozen=True)
class Stage1Config:
    iterations: int = 500
    eta0: float = 0.1
    eta_min: float = 1e-5
    w: float = 1.0
    t1: float = 10.0
    likelihood_form: str | None = None  # None: use the observation's form
    init: object = "pseudoinverse"  # "pseudoinverse" | "zero" | vector
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    n_noise: int = 1
    optimizer: str = "adaptive"  # "adaptive" | "plain"

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not (self.eta0 >= self.eta_min > 0):
            raise ValueError("need eta0 >= eta_min > 0")
        if self.w <= 0:
            raise ValueError("w must be positive")
        if self.optimizer not in ("adaptive", "plain"):
            raise ValueError("optimizer must be 'adaptive' or 'plain'")
        if self.n_noise < 1:
            raise ValueError("n_noise must be >= 1")


@dataclass(frozen=True)
class Stage2Config:
    t0: int = 0
    xi: float = 1.0
    stride: int = 1  # reverse-step spacing; 1 = every grid index (default)

    def __post_init__(self):
        if self.t0 < 0:
            raise ValueError("t0 must be >= 0")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")

    def step_grid(self) -> tuple:
        """Descending integer times t0, t0-stride, ..., ending at 0."""
        times = list(range(self.t0, 0, -self.stride))
        return tuple(times + [0])


@dataclass(frozen=True)
class RunRecord:
    x_map: np.ndarray
    x_final: np.ndarray
    stage1_objective_trace: np.ndarray
    stream_id: str = ""
    z_map: np.ndarray | None = None
    z_final: np.ndarray | None = None


def cosine_lr(n: int, total: int, eta0: float, eta_min: float) -> float:
    """Cosine-annealed step size: eta_min + (eta0 - eta_min)(1 + cos(pi n / N))/2."""
    if not 0 <= n <= total:
        raise ValueError("iteration index outside [0, N]")
    return eta_min + 0.5 * (eta0 - eta_min) * (1.0 + np.cos(np.pi * n / total))


def _stage1_init(obs: Observation, cfg: Stage1Config):
    if isinstance(cfg.init, str):
        if cfg.init == "pseudoinverse":
            return pinv_init(obs)
        if cfg.init == "zero":
            return np.zeros(obs.y.shape[:-1] + (obs.operator.in_dim,))
        raise ValueError(f"unknown init '{cfg.init}'")
    return np.asarray(cfg.init, dtype=float).copy()


def map_stage(obs: Observation, prior_score, schedule: Schedule, cfg: Stage1Config,
              rng: np.random.Generator | None = None, noise: np.ndarray | None = None,
              objective_fn=None, raise_on_nonfinite: bool = True):
    """Stage-1 stochastic MAP ascent.  Returns (x_map, trace).

    The trace records objective_fn(x) per iteration when given, otherwise the
    data-fit surrogate -||y - A(x)||^2.  Noise may be pre-drawn with shape
    (iterations, n_noise) + x.shape; by default it is drawn once at entry
    from the caller's stream.  Batched sweeps pass raise_on_nonfinite=False
    and account for failed rows themselves; non-finite rows then propagate
    harmlessly.
    """
    if cfg.likelihood_form is not None and cfg.likelihood_form != obs.likelihood_form:
        obs = Observation(y=obs.y, operator=obs.operator, sigma_y=obs.sigma_y,
                          likelihood_form=cfg.likelihood_form)
    x = _stage1_init(obs, cfg)
    N = cfg.iterations
    if noise is None:
        if rng is None:
            raise ValueError("need a random stream or pre-drawn noise")
        noise = rng.standard_normal((N, cfg.n_noise) + x.shape)
    elif noise.shape != (N, cfg.n_noise) + x.shape:
        raise ValueError("noise must have shape (iterations, n_noise) + x.shape")

    m1 = np.zeros_like(x)
    m2 = np.zeros_like(x)
    trace = np.empty((N,) + x.shape[:-1])
    for i in range(N):
        like = loglik_grad(obs, x)
        prior = prior_grad_estimate(prior_score, schedule, x, cfg.t1, cfg.w,
                                    eps=noise[i]).mean(axis=0)
        g = like + prior
        if raise_on_nonfinite and not (np.all(np.isfinite(g)) and np.all(np.isfinite(x))):
            raise RuntimeError(
                f"non-finite iterate at iteration {i}: |like|={np.linalg.norm(like):.3e}, "
                f"|prior|={np.linalg.norm(prior):.3e}"
            )
        lr = cosine_lr(i, N, cfg.eta0, cfg.eta_min)
        if cfg.optimizer == "plain":
            x = x + lr * g
        else:
            m1 = cfg.beta1 * m1 + (1.0 - cfg.beta1) * g
            m2 = cfg.beta2 * m2 + (1.0 - cfg.beta2) * g * g
            hat1 = m1 / (1.0 - cfg.beta1 ** (i + 1))
            hat2 = m2 / (1.0 - cfg.beta2 ** (i + 1))
            x = x + lr * hat1 / (np.sqrt(hat2) + cfg.epsilon)
        if objective_fn is not None:
            trace[i] = objective_fn(x)
        else:
            resid = obs.y - obs.operator.apply(x)
            trace[i] = -np.sum(resid**2, axis=-1)
    return x, trace


def rps_stage(x_start: np.ndarray, score_fn, schedule: Schedule, cfg: Stage2Config,
              rng: np.random.Generator | None = None, noise: np.ndarray | None = None,
              raise_on_nonfinite: bool = True) -> np.ndarray:
    """Stage-2 re-noised reverse sampling from a point (or batch of points).

    Forward-noises x_start to t0, then runs one reverse Euler-Maruyama step
    per entry of the descending step grid (every integer time by default).
    Each step from t to s integrates the interval's piecewise-constant
    coefficients exactly: with k = log ab(t) - log ab(s),

        x_s = x_t - (k/2) x_t - k * score(x_t, t) + sqrt(-k) * eps.

    Noise layout: row 0 is the forward-noising draw, subsequent rows the
    step innovations.
    """
    t0 = int(cfg.t0)
    if t0 > schedule.num_steps:
        raise ValueError("t0 outside the schedule range")
    x = np.asarray(x_start, dtype=float).copy()
    if t0 == 0:
        return x
    grid = cfg.step_grid()
    n_steps = len(grid) - 1
    if noise is None:
        if rng is None:
            raise ValueError("need a random stream or pre-drawn noise")
        noise = rng.standard_normal((n_steps + 1,) + x.shape)
    elif noise.shape != (n_steps + 1,) + x.shape:
        raise ValueError("noise must have shape (n_steps + 1,) + x.shape")

    ab0 = float(schedule.alpha_bar_at(t0))
    x = np.sqrt(ab0) * x + np.sqrt(1.0 - ab0) * noise[0]
    for step in range(n_steps):
        t_hi, t_lo = grid[step], grid[step + 1]
        k = float(schedule.log_alpha_bar(t_hi) - schedule.log_alpha_bar(t_lo))
        x = x - (0.5 * k) * x - k * score_fn(x, float(t_hi)) + np.sqrt(-k) * noise[step + 1]
        if raise_on_nonfinite and not np.all(np.isfinite(x)):
            raise RuntimeError(f"non-finite state at reverse step t={t_hi}")
    return x


def map_rps(obs: Observation, prior_score, cond_score, schedule: Schedule,
            cfg1: Stage1Config, cfg2: Stage2Config, rng: np.random.Generator,
            objective_fn=None) -> RunRecord:
    """Full two-stage run; deterministic given the stream."""
    stream_id = _stream_id(rng)
    x_map, trace = map_stage(obs, prior_score, schedule, cfg1, rng=rng,
                             objective_fn=objective_fn)
    x_final = rps_stage(x_map, cond_score, schedule, cfg2, rng=rng)
    return RunRecord(x_map=x_map, x_final=x_final, stage1_objective_trace=trace,
                     stream_id=stream_id)


def _stream_id(rng: np.random.Generator) -> str:
    seq = getattr(rng.bit_generator, "seed_seq", None)
    return "" if seq is None else repr(seq)


def map_mmse_gap_bound(dim: int, mu: float) -> float:
    """Worst-case distance between the posterior mode and mean of a
    mu-strongly log-concave posterior: sqrt(dim / mu)."""
    if mu <= 0:
        raise ValueError("mu must be positive")
    return float(np.sqrt(dim / mu))


def w2_renoising_bound(alpha_bar_t0: float, lipschitz: float, dim: int,
                       mu: float, eps_score: float) -> float:
    """Upper bound on the posterior W2 of the re-noised sampler:
    ab^(1 - L) sqrt(2 dim / mu) + eps_score.

    Non-increasing in t0 whenever L < 1 and eps_score is fixed.
    """
    if mu <= 0:
        raise ValueError("mu must be positive")
    if not 0.0 <= alpha_bar_t0 <= 1.0:
        raise ValueError("alpha_bar_t0 must lie in [0, 1]")
    if alpha_bar_t0 == 0.0:
        # limit of ab^(1 - L): 0 below L = 1, 1 at L = 1, divergent above
        decay = 0.0 if lipschitz < 1.0 else (1.0 if lipschitz == 1.0 else np.inf)
    else:
        decay = alpha_bar_t0 ** (1.0 - lipschitz)
    return float(decay * np.sqrt(2.0 * dim / mu) + eps_score)
