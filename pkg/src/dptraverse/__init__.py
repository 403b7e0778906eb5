"""dptraverse: two-stage distortion-perception traversal for Bayesian
inverse problems, instantiated on analytically tractable synthetic priors.

The library pairs a stochastic-gradient MAP stage with a re-noised reverse
SDE sampling stage, and ships the exact oracles (conjugate posteriors,
closed-form W2, moment recursions, quadrature grids) needed to verify every
bound and identity the design rests on.
"""

__version__ = "0.1.0"

from .schedule import Schedule, default_schedule, make_linear_schedule
from .priors import GaussianMixture, GridPrior, gaussian, make_quartic_prior
from .observation import Observation, observe, loglik_grad, pinv_init
from .posterior import (
    DpEndpoints,
    GaussianPosterior,
    dp_endpoints,
    gaussian_posterior,
    gm_posterior,
    ideal_curve,
    interpolated_estimator,
    map_point,
    mmse,
)
from .scores import (
    ExactPosteriorScore,
    ExactPriorScore,
    GridPriorScore,
    GuidedScore,
    prior_grad_estimate,
    tweedie_denoise,
)
from .solver import (
    RunRecord,
    Stage1Config,
    Stage2Config,
    cosine_lr,
    map_mmse_gap_bound,
    map_rps,
    map_stage,
    rps_stage,
    w2_renoising_bound,
)
from .latent import (
    LinearCodec,
    latent_map_gap_bound,
    latent_w2_renoising_bound,
    lmap_rps,
    make_codec,
)
from .metrics import DpCurvePoint, gaussian_moment_oracle, mse, w2_1d, w2_assign, w2_gaussian
