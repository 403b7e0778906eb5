"""Experiment configuration: a strict JSON document.

Unknown keys are rejected at every level (fail closed).  The full grammar is
documented in the repository README; the short form:

{
  "schedule":    {"type": "linear", "T": 1000, "beta_min": 1e-4, "beta_max": 0.02},
  "prior":       {"type": "gm", "weights": [...], "means": [[...]], "covs": [[[...]]]}
               | {"type": "grid", "formula": "quartic", "bounds": [-8, 8], "points": 4096},
  "observation": {"task": "denoise|mask|downsample|randproj|clip", "sigma_y": 1.0,
                  "likelihood": "squared|l2norm", ...task params},
  "score":       {"score": "exact|dps", "xi": 1.0, "jacobian": "full|stopgrad"},
  "stage1":      {"iterations": 500, "eta0": 0.05, "eta_min": 1e-4, "w": 1.0, "t1": 5,
                  "init": "pseudoinverse|zero", ...optimizer moments},
  "stage2":      {"t0": 0, "xi": 1.0},
  "t0_grid":     [0, 100, ...],
  "n_trials":    10000,
  "seed":        1234,
  "latent":      {"d": 2, "scale": 1.0, "offset_seed": 0},       # optional
  "output":      {"dir": "out"},                                 # optional
  "verify":      {"checks": [...], "prior_grad_scale": 1.0, ...} # optional
}
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from ..latent import LinearCodec, make_codec
from ..observation import (
    ClipOperator,
    DownsampleOperator,
    MaskOperator,
    identity_operator,
    random_projection,
)
from ..priors import GaussianMixture, make_quartic_prior
from ..schedule import Schedule, make_linear_schedule
from ..solver import Stage1Config, Stage2Config


class ConfigError(ValueError):
    """Invalid experiment configuration (CLI exit code 2)."""


def _require_keys(section: dict, path: str, required: set, optional: set = frozenset()):
    if not isinstance(section, dict):
        raise ConfigError(f"{path} must be an object")
    unknown = set(section) - required - set(optional)
    if unknown:
        raise ConfigError(f"unknown keys in {path}: {sorted(unknown)}")
    missing = required - set(section)
    if missing:
        raise ConfigError(f"missing keys in {path}: {sorted(missing)}")


def load_config(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    validate_config(raw)
    return raw


def validate_config(raw: dict) -> None:
    _require_keys(
        raw, "config",
        required={"schedule", "prior", "observation", "seed"},
        optional={"score", "stage1", "stage2", "t0_grid", "n_trials", "latent",
                  "output", "verify"},
    )
    _require_keys(raw["schedule"], "schedule", {"type", "T", "beta_min", "beta_max"})
    if raw["schedule"]["type"] != "linear":
        raise ConfigError("schedule.type must be 'linear'")

    prior = raw["prior"]
    if not isinstance(prior, dict) or "type" not in prior:
        raise ConfigError("prior must be an object with a 'type'")
    if prior["type"] == "gm":
        _require_keys(prior, "prior", {"type", "weights", "means", "covs"})
    elif prior["type"] == "grid":
        _require_keys(prior, "prior", {"type", "formula"}, {"bounds", "points"})
        if prior["formula"] != "quartic":
            raise ConfigError("prior.formula must be 'quartic'")
    else:
        raise ConfigError("prior.type must be 'gm' or 'grid'")

    obs = raw["observation"]
    if not isinstance(obs, dict) or "task" not in obs:
        raise ConfigError("observation must be an object with a 'task'")
    task = obs["task"]
    base = {"task", "sigma_y"}
    opt = {"likelihood"}
    if task == "denoise":
        _require_keys(obs, "observation", base, opt)
    elif task == "mask":
        _require_keys(obs, "observation", base | {"keep"}, opt)
    elif task == "downsample":
        _require_keys(obs, "observation", base | {"factor"}, opt)
    elif task == "randproj":
        _require_keys(obs, "observation", base | {"m", "proj_seed"}, opt)
    elif task == "clip":
        _require_keys(obs, "observation", base, opt | {"threshold"})
    else:
        raise ConfigError(f"unknown observation.task '{task}'")
    if obs.get("likelihood", "squared") not in ("squared", "l2norm"):
        raise ConfigError("observation.likelihood must be 'squared' or 'l2norm'")
    if obs["sigma_y"] < 0:
        raise ConfigError("observation.sigma_y must be >= 0")

    if "score" in raw:
        _require_keys(raw["score"], "score", {"score"}, {"xi", "jacobian"})
        if raw["score"]["score"] not in ("exact", "dps"):
            raise ConfigError("score.score must be 'exact' or 'dps'")
        if raw["score"].get("jacobian", "full") not in ("full", "stopgrad"):
            raise ConfigError("score.jacobian must be 'full' or 'stopgrad'")
    if "stage1" in raw:
        _require_keys(raw["stage1"], "stage1", set(), {
            "iterations", "eta0", "eta_min", "w", "t1", "likelihood", "init",
            "beta1", "beta2", "epsilon", "n_noise", "optimizer"})
        if raw["stage1"].get("init", "pseudoinverse") not in ("pseudoinverse", "zero"):
            raise ConfigError("stage1.init must be 'pseudoinverse' or 'zero'")
    if "stage2" in raw:
        _require_keys(raw["stage2"], "stage2", set(), {"t0", "xi", "stride"})
    if "latent" in raw:
        _require_keys(raw["latent"], "latent", {"d", "scale", "n_x"}, {"offset_seed"})
        if raw["latent"]["d"] > raw["latent"]["n_x"]:
            raise ConfigError("latent.d cannot exceed latent.n_x")
    if "output" in raw:
        _require_keys(raw["output"], "output", set(), {"dir"})
    if "verify" in raw:
        _require_keys(raw["verify"], "verify", set(), {
            "checks", "prior_grad_scale", "n_trials", "t0_grid"})

    if "t0_grid" in raw:
        T = raw["schedule"]["T"]
        grid = raw["t0_grid"]
        if not isinstance(grid, list) or not grid:
            raise ConfigError("t0_grid must be a nonempty list")
        for t0 in grid:
            if not isinstance(t0, int) or not 0 <= t0 <= T:
                raise ConfigError(f"t0_grid entry {t0} outside [0, {T}]")
    if raw.get("n_trials", 1) < 1:
        raise ConfigError("n_trials must be >= 1")
    if not isinstance(raw["seed"], int) or raw["seed"] < 0:
        raise ConfigError("seed must be a nonnegative integer")


def config_hash(raw: dict) -> str:
    return hashlib.sha256(json.dumps(raw, sort_keys=True).encode()).hexdigest()[:16]


@dataclass(frozen=True)
class Problem:
    """Validated config materialized into library objects."""

    schedule: Schedule
    prior: object
    operator: object
    sigma_y: float
    likelihood_form: str
    score_kind: str
    score_xi: float
    score_jacobian: str
    stage1: Stage1Config
    stage2: Stage2Config
    t0_grid: tuple
    n_trials: int
    seed: int
    codec: LinearCodec | None
    raw: dict

    @property
    def data_dim(self) -> int:
        return self.codec.data_dim if self.codec is not None else self.prior.dim

    @property
    def sample_dim(self) -> int:
        """Dimension the solver works in (latent when a codec is present)."""
        return self.prior.dim


def build_problem(raw: dict) -> Problem:
    validate_config(raw)
    sched_spec = raw["schedule"]
    schedule = make_linear_schedule(sched_spec["T"], sched_spec["beta_min"], sched_spec["beta_max"])

    prior_spec = raw["prior"]
    if prior_spec["type"] == "gm":
        prior = GaussianMixture(
            weights=np.asarray(prior_spec["weights"], dtype=float),
            means=np.asarray(prior_spec["means"], dtype=float),
            covs=np.asarray(prior_spec["covs"], dtype=float),
        )
    else:
        bounds = tuple(prior_spec.get("bounds", (-8.0, 8.0)))
        prior = make_quartic_prior(bounds=bounds, points=prior_spec.get("points", 4096))

    codec = None
    if "latent" in raw:
        lat = raw["latent"]
        if not isinstance(prior, GaussianMixture):
            raise ConfigError("latent pipelines need a gm prior over the latent variable")
        if prior.dim != lat["d"]:
            raise ConfigError("prior dimension must equal latent.d")
        codec = make_codec(int(lat["n_x"]), int(lat["d"]), float(lat["scale"]),
                           np.random.default_rng(lat.get("offset_seed", 0)))

    n = codec.data_dim if codec is not None else prior.dim
    operator = _build_operator(raw["observation"], n)

    score_spec = raw.get("score", {"score": "exact"})
    stage1_spec = dict(raw.get("stage1", {}))
    likelihood = raw["observation"].get("likelihood", "squared")
    if "likelihood" in stage1_spec:
        stage1_spec["likelihood_form"] = stage1_spec.pop("likelihood")
    stage1 = Stage1Config(**stage1_spec)
    stage2 = Stage2Config(**raw.get("stage2", {}))

    return Problem(
        schedule=schedule,
        prior=prior,
        operator=operator,
        sigma_y=float(raw["observation"]["sigma_y"]),
        likelihood_form=likelihood,
        score_kind=score_spec["score"],
        score_xi=float(score_spec.get("xi", 1.0)),
        score_jacobian=score_spec.get("jacobian", "full"),
        stage1=stage1,
        stage2=stage2,
        t0_grid=tuple(raw.get("t0_grid", [raw.get("stage2", {}).get("t0", 0)])),
        n_trials=int(raw.get("n_trials", 1)),
        seed=int(raw["seed"]),
        codec=codec,
        raw=raw,
    )


def _build_operator(obs_spec: dict, n: int):
    task = obs_spec["task"]
    if task == "denoise":
        return identity_operator(n)
    if task == "mask":
        return MaskOperator(keep=np.asarray(obs_spec["keep"], dtype=int), n=n)
    if task == "downsample":
        return DownsampleOperator(factor=int(obs_spec["factor"]), n=n)
    if task == "randproj":
        return random_projection(int(obs_spec["m"]), n, int(obs_spec["proj_seed"]))
    if task == "clip":
        return ClipOperator(threshold=float(obs_spec.get("threshold", 1.0)), n=n)
    raise ConfigError(f"unknown task '{task}'")
