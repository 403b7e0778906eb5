"""D-P sweep execution.

Random-stream rule (documented contract): every (t0, trial) pair owns the
generator

    default_rng(SeedSequence(entropy=seed, spawn_key=(t0, trial)))

and consumes draws in a fixed order: clean sample, observation noise,
Stage-1 noise block of shape (iterations, n_noise, n), the forward-noising
draw, then the Stage-2 step noise block with one row per reverse step.
Adding t0 values to the grid therefore never perturbs existing trials, and
results are byte-identical however trials are chunked across workers.

Trials are executed in vectorized chunks; per-trial failures (non-finite
iterates) are recorded and excluded, and the sweep fails if more than 1%
of trials abort.
"""

from __future__ import annotations

import dataclasses
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .. import __version__
from ..latent import latent_observation
from ..metrics import DpCurvePoint, mse, w2_samples
from ..observation import DenseOperator, Observation
from ..posterior import DpEndpoints, batched_gm_posterior_params, dp_endpoints, ideal_curve
from ..priors import GaussianMixture
from ..scores import BatchedPosteriorScore, ExactPriorScore, GridPriorScore, GuidedScore
from ..solver import map_stage, rps_stage
from .config import Problem, build_problem, config_hash

_REF_STREAM_TRIAL = 2**32 - 1  # reserved trial index: fresh prior reference samples
_W2_STREAM_TRIAL = 2**32 - 2  # reserved trial index: assignment-estimator subsampling
_CHUNK = 2048


@dataclass(frozen=True)
class SweepResult:
    points: tuple
    endpoints: DpEndpoints | None
    ideal_points: tuple  # (perception, distortion) samples of the ideal frontier
    provenance: dict


def trial_rng(seed: int, t0: int, trial: int) -> np.random.Generator:
    """The documented per-(t0, trial) stream."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(t0, trial)))


def _prior_score_model(problem: Problem):
    if isinstance(problem.prior, GaussianMixture):
        return ExactPriorScore(problem.prior, problem.schedule)
    return GridPriorScore(problem.prior, problem.schedule)


def _conditional_score(problem: Problem, solver_obs: Observation):
    """Conditional score model for the solver's working space (latent if any)."""
    prior_score = _prior_score_model(problem)
    if problem.score_kind == "dps":
        return GuidedScore(prior_score, problem.schedule, solver_obs,
                           xi=problem.score_xi, jacobian=problem.score_jacobian)
    if not isinstance(problem.prior, GaussianMixture):
        raise ValueError("exact conditional scores need a gm prior")
    if problem.codec is not None:
        A = problem.operator.as_matrix() @ problem.codec.decode_matrix
        y_eff = solver_obs.y - problem.operator.as_matrix() @ problem.codec.offset
        op_eff = DenseOperator(A)
    else:
        if not hasattr(problem.operator, "as_matrix"):
            raise ValueError("exact conditional scores need a linear operator")
        op_eff, y_eff = problem.operator, solver_obs.y
    log_w, means, covs = batched_gm_posterior_params(problem.prior, op_eff,
                                                     problem.sigma_y, y_eff)
    return BatchedPosteriorScore(log_w, means, covs, problem.schedule)


def _chunk_task(raw_cfg: dict, t0: int, lo: int, hi: int):
    """Run trials [lo, hi) for one t0 value; returns truths, outputs, abort mask."""
    problem = build_problem(raw_cfg)
    prior, op, codec = problem.prior, problem.operator, problem.codec
    n = prior.dim
    B = hi - lo
    it, n_noise = problem.stage1.iterations, problem.stage1.n_noise

    rngs = [trial_rng(problem.seed, t0, i) for i in range(lo, hi)]
    clean = np.empty((B, n))
    for i, rng in enumerate(rngs):
        clean[i] = prior.sample(rng)
    data = codec.decode(clean) if codec is not None else clean
    Y = np.atleast_2d(op.apply(data)).copy()
    if problem.sigma_y > 0:
        for i, rng in enumerate(rngs):
            Y[i] += problem.sigma_y * rng.standard_normal(Y.shape[-1])
    stage1_noise = np.empty((it, n_noise, B, n))
    for i, rng in enumerate(rngs):
        stage1_noise[:, :, i, :] = rng.standard_normal((it, n_noise, n))
    stage2_noise = None
    if t0 > 0:
        n_steps = len(dataclasses.replace(problem.stage2, t0=t0).step_grid()) - 1
        stage2_noise = np.empty((n_steps + 1, B, n))
        for i, rng in enumerate(rngs):
            stage2_noise[0, i] = rng.standard_normal(n)
            stage2_noise[1:, i, :] = rng.standard_normal((n_steps, n))

    obs = Observation(y=Y, operator=op, sigma_y=problem.sigma_y,
                      likelihood_form=problem.likelihood_form)
    solver_obs = latent_observation(obs, codec) if codec is not None else obs
    prior_score = _prior_score_model(problem)
    cond_score = _conditional_score(problem, solver_obs)
    cfg1 = problem.stage1
    if codec is not None and isinstance(cfg1.init, str) and cfg1.init == "pseudoinverse":
        from ..observation import pinv_init

        cfg1 = dataclasses.replace(cfg1, init=codec.encode(pinv_init(obs)))
    cfg2 = dataclasses.replace(problem.stage2, t0=t0)

    with np.errstate(over="ignore", invalid="ignore"):
        x_map, _ = map_stage(solver_obs, prior_score, problem.schedule, cfg1,
                             noise=stage1_noise, raise_on_nonfinite=False)
        x_out = rps_stage(x_map, cond_score, problem.schedule, cfg2,
                          noise=stage2_noise, raise_on_nonfinite=False)
    aborted = ~np.all(np.isfinite(x_out), axis=-1)
    outputs = codec.decode(x_out) if codec is not None else x_out
    return data, outputs, aborted


def _sweep_point(raw_cfg: dict, problem: Problem, t0: int, jobs: int) -> tuple[DpCurvePoint, int]:
    n_trials = problem.n_trials
    chunks = [(lo, min(lo + _CHUNK, n_trials)) for lo in range(0, n_trials, _CHUNK)]
    if jobs > 1 and len(chunks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_chunk_task, raw_cfg, t0, lo, hi) for lo, hi in chunks]
            results = [f.result() for f in futures]
    else:
        results = [_chunk_task(raw_cfg, t0, lo, hi) for lo, hi in chunks]

    truths = np.concatenate([r[0] for r in results])
    outputs = np.concatenate([r[1] for r in results])
    aborted = np.concatenate([r[2] for r in results])
    n_failed = int(aborted.sum())
    keep = ~aborted
    truths, outputs = truths[keep], outputs[keep]
    n_kept = truths.shape[0]

    if n_kept >= 2:
        dist_mean, dist_se = mse(truths, outputs)
    elif n_kept == 1:
        dist_mean, dist_se = float(np.sum((truths[0] - outputs[0]) ** 2)), float("nan")
    else:
        dist_mean, dist_se = float("nan"), float("nan")

    if n_kept >= 1:
        ref_rng = trial_rng(problem.seed, t0, _REF_STREAM_TRIAL)
        ref = problem.prior.sample(ref_rng, size=n_kept)
        if problem.codec is not None:
            ref = problem.codec.decode(ref)
        w2_rng = trial_rng(problem.seed, t0, _W2_STREAM_TRIAL)
        w2, w2_se = w2_samples(ref, outputs, rng=w2_rng)
        if n_kept < 16:
            w2_se = float("nan")
    else:
        w2, w2_se = float("nan"), float("nan")

    point = DpCurvePoint(t0=t0, distortion_mean=dist_mean, distortion_stderr=dist_se,
                         w2=w2, w2_stderr=w2_se, n_trials=n_kept)
    return point, n_failed


def run_sweep(raw_cfg: dict, jobs: int = 1) -> SweepResult:
    """Execute the configured sweep: one curve point per t0 grid entry."""
    problem = build_problem(raw_cfg)
    points = []
    total_failed = 0
    for t0 in problem.t0_grid:
        point, failed = _sweep_point(raw_cfg, problem, int(t0), jobs)
        points.append(point)
        total_failed += failed
    total = problem.n_trials * len(problem.t0_grid)
    if total_failed > 0.01 * total:
        raise RuntimeError(f"sweep failed: {total_failed}/{total} trials aborted")

    endpoints = _endpoints(problem)
    ideal_pts = ()
    if endpoints is not None:
        finite_w2 = [p.w2 for p in points if np.isfinite(p.w2)]
        top = max([endpoints.p_star * 1.25] + finite_w2)
        grid = np.linspace(0.0, top, 64)
        ideal_pts = tuple((float(p), ideal_curve(endpoints, float(p))) for p in grid)

    provenance = {
        "config_hash": config_hash(raw_cfg),
        "seed": problem.seed,
        "version": __version__,
        "aborted_trials": total_failed,
    }
    return SweepResult(points=tuple(points), endpoints=endpoints,
                       ideal_points=ideal_pts, provenance=provenance)


def _endpoints(problem: Problem) -> DpEndpoints | None:
    """Tradeoff endpoints for the configured generative model, when the
    closed-form or Monte-Carlo machinery applies."""
    from ..metrics import w2_gaussian

    if not isinstance(problem.prior, GaussianMixture):
        return None
    if problem.sigma_y <= 0 or not hasattr(problem.operator, "as_matrix"):
        return None
    if problem.codec is None:
        rng = np.random.default_rng(np.random.SeedSequence(entropy=problem.seed,
                                                           spawn_key=(0xD5, 0)))
        return dp_endpoints(problem.prior, problem.operator, problem.sigma_y,
                            n_mc=10_000, rng=rng)
    if problem.prior.n_components != 1:
        return None
    # latent Gaussian: posterior over z is conjugate; push moments through the codec
    codec = problem.codec
    A = problem.operator.as_matrix() @ codec.decode_matrix
    sig2 = problem.sigma_y**2
    prior_prec = np.linalg.inv(problem.prior.covs[0])
    cov_z = np.linalg.inv(prior_prec + A.T @ A / sig2)
    W = codec.decode_matrix
    d_star = float(np.trace(W @ cov_z @ W.T))
    B = cov_z @ A.T / sig2
    y_cov = A @ problem.prior.covs[0] @ A.T + sig2 * np.eye(A.shape[0])
    mmse_cov_z = B @ y_cov @ B.T
    mx = codec.decode(problem.prior.means[0])
    p_star = w2_gaussian(mx, W @ problem.prior.covs[0] @ W.T, mx, W @ mmse_cov_z @ W.T)
    return DpEndpoints(d_star=d_star, p_star=p_star)
