"""Degradation operators, observations, and likelihood gradients.

Operators expose apply / vjp (vector-Jacobian product at a point); linear
operators additionally expose adjoint and pseudoinverse application.  All
apply/vjp paths broadcast over leading batch axes.

Likelihood gradients are used unnormalized with an external step weight, so
sigma_y = 0 (noiseless tasks) never divides by zero:

    squared:  grad log p(y|x) ~ 2 A^T (y - A(x))
    l2norm:   A^T (y - A(x)) / ||y - A(x)||   (zero when the residual is ~0)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class LinearOperator:
    """Base for linear degradations; subclasses set in_dim/out_dim."""

    in_dim: int
    out_dim: int

    def apply(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def adjoint(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def pinv_apply(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def vjp(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        # linear map: Jacobian is constant
        return self.adjoint(u)

    def as_matrix(self) -> np.ndarray:
        return self.apply(np.eye(self.in_dim)).T


@dataclass(frozen=True)
class DenseOperator(LinearOperator):
    matrix: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        object.__setattr__(self, "matrix", A)

    @property
    def in_dim(self) -> int:
        return self.matrix.shape[1]

    @property
    def out_dim(self) -> int:
        return self.matrix.shape[0]

    def apply(self, x):
        return np.asarray(x, dtype=float) @ self.matrix.T

    def adjoint(self, u):
        return np.asarray(u, dtype=float) @ self.matrix

    def pinv_apply(self, y):
        return np.asarray(y, dtype=float) @ np.linalg.pinv(self.matrix).T


def identity_operator(n: int) -> DenseOperator:
    return DenseOperator(np.eye(n))


@dataclass(frozen=True)
class MaskOperator(LinearOperator):
    """Keeps the listed coordinates."""

    keep: np.ndarray
    n: int

    def __post_init__(self):
        keep = np.asarray(self.keep, dtype=int)
        if keep.size == 0 or np.any(keep < 0) or np.any(keep >= self.n) or np.unique(keep).size != keep.size:
            raise ValueError("keep must list distinct coordinates inside [0, n)")
        object.__setattr__(self, "keep", keep)

    @property
    def in_dim(self) -> int:
        return self.n

    @property
    def out_dim(self) -> int:
        return self.keep.size

    def apply(self, x):
        return np.asarray(x, dtype=float)[..., self.keep]

    def adjoint(self, u):
        u = np.asarray(u, dtype=float)
        out = np.zeros(u.shape[:-1] + (self.n,))
        out[..., self.keep] = u
        return out

    def pinv_apply(self, y):
        # minimum-norm completion: zeros off the kept set
        return self.adjoint(y)


@dataclass(frozen=True)
class DownsampleOperator(LinearOperator):
    """Block average with the given factor; n must be a multiple of factor."""

    factor: int
    n: int

    def __post_init__(self):
        if self.factor < 1 or self.n % self.factor != 0:
            raise ValueError("n must be a positive multiple of factor")

    @property
    def in_dim(self) -> int:
        return self.n

    @property
    def out_dim(self) -> int:
        return self.n // self.factor

    def apply(self, x):
        x = np.asarray(x, dtype=float)
        return x.reshape(x.shape[:-1] + (self.out_dim, self.factor)).mean(axis=-1)

    def adjoint(self, u):
        u = np.asarray(u, dtype=float)
        rep = np.repeat(u, self.factor, axis=-1)
        return rep / self.factor

    def pinv_apply(self, y):
        # least-norm preimage of the averaging rows: replicate the block value
        return np.repeat(np.asarray(y, dtype=float), self.factor, axis=-1)


def random_projection(m: int, n: int, seed: int) -> DenseOperator:
    """Rows i.i.d. N(0, 1/m); a seeded stand-in for structured compressed sensing."""
    rng = np.random.default_rng(seed)
    return DenseOperator(rng.standard_normal((m, n)) / np.sqrt(m))


@dataclass(frozen=True)
class ClipOperator:
    """Elementwise clamp of 2x to [-threshold, threshold] (saturating sensor).

    The vjp uses the a.e. derivative: 2 inside the linear range, 0 where
    saturated (no smoothing).
    """

    threshold: float = 1.0
    n: int = 1

    def __post_init__(self):
        if self.threshold <= 0:
            raise ValueError("threshold must be positive")

    @property
    def in_dim(self) -> int:
        return self.n

    @property
    def out_dim(self) -> int:
        return self.n

    def apply(self, x):
        return np.clip(2.0 * np.asarray(x, dtype=float), -self.threshold, self.threshold)

    def vjp(self, x, u):
        active = np.abs(2.0 * np.asarray(x, dtype=float)) < self.threshold
        return 2.0 * active * np.asarray(u, dtype=float)


@dataclass(frozen=True)
class Observation:
    """A degraded, noisy measurement y = A(x) + sigma_y * noise."""

    y: np.ndarray
    operator: object
    sigma_y: float
    likelihood_form: str = "squared"

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        if self.sigma_y < 0:
            raise ValueError("sigma_y must be >= 0")
        if self.likelihood_form not in ("squared", "l2norm"):
            raise ValueError("likelihood_form must be 'squared' or 'l2norm'")
        if y.shape[-1] != self.operator.out_dim:
            raise ValueError("y length must match the operator output dimension")
        object.__setattr__(self, "y", y)


def observe(operator, sigma_y: float, x: np.ndarray, rng: np.random.Generator,
            likelihood_form: str = "squared") -> Observation:
    """Generate y = A(x) + sigma_y * n with n ~ N(0, I)."""
    if sigma_y < 0:
        raise ValueError("sigma_y must be >= 0")
    clean = operator.apply(x)
    y = clean + sigma_y * rng.standard_normal(clean.shape) if sigma_y > 0 else clean
    return Observation(y=y, operator=operator, sigma_y=float(sigma_y), likelihood_form=likelihood_form)


def loglik_grad(obs: Observation, x: np.ndarray) -> np.ndarray:
    """Unnormalized likelihood ascent direction at x (broadcasts over batches).

    squared: 2 A^T(y - A(x)); l2norm: A^T(y - A(x)) / ||y - A(x)||, returning
    zero when the residual norm falls below 1e-12.
    """
    x = np.asarray(x, dtype=float)
    residual = obs.y - obs.operator.apply(x)
    if obs.likelihood_form == "squared":
        return obs.operator.vjp(x, 2.0 * residual)
    norm = np.linalg.norm(residual, axis=-1, keepdims=True)
    direction = np.where(norm < 1e-12, 0.0, residual / np.maximum(norm, 1e-300))
    return obs.operator.vjp(x, direction)


def pinv_init(obs: Observation) -> np.ndarray:
    """Pseudoinverse initialization: A^+ y for linear operators, y/2 for clip."""
    if isinstance(obs.operator, ClipOperator):
        return np.asarray(obs.y, dtype=float) / 2.0
    if isinstance(obs.operator, LinearOperator):
        return obs.operator.pinv_apply(obs.y)
    raise TypeError(f"unsupported operator type {type(obs.operator).__name__}")
