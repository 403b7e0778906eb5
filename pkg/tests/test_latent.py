import numpy as np
import pytest

from dptraverse.latent import (
    LinearCodec,
    latent_loglik_grad,
    latent_map_gap_bound,
    latent_w2_renoising_bound,
    lmap_rps,
    make_codec,
)
from dptraverse.metrics import w2_assign
from dptraverse.observation import DenseOperator, Observation, identity_operator, observe
from dptraverse.priors import gaussian
from dptraverse.scores import ExactPosteriorScore, ExactPriorScore
from dptraverse.solver import Stage1Config, Stage2Config, map_rps
from dptraverse.harness.verify import stage1_battery_weight


def test_make_codec_lipschitz_exact():
    rng = np.random.default_rng(0)
    for scale in (1.0, 3.0):
        codec = make_codec(6, 3, scale, rng)
        svals = np.linalg.svd(codec.decode_matrix, compute_uv=False)
        assert codec.lipschitz == pytest.approx(scale, abs=1e-10)
        np.testing.assert_allclose(svals, scale, atol=1e-10)


def test_codec_encode_decode_roundtrip():
    rng = np.random.default_rng(1)
    codec = make_codec(8, 4, 2.5, rng, offset=rng.standard_normal(8))
    z = rng.standard_normal((100, 4))
    np.testing.assert_allclose(codec.encode(codec.decode(z)), z, atol=1e-10)


def test_codec_validation():
    with pytest.raises(ValueError):
        make_codec(3, 4, 1.0, np.random.default_rng(0))
    with pytest.raises(ValueError):
        make_codec(4, 2, 0.0, np.random.default_rng(0))
    with pytest.raises(ValueError):
        LinearCodec(decode_matrix=np.zeros((3, 2)), offset=np.zeros(3))


def test_latent_loglik_grad_zero_residual():
    rng = np.random.default_rng(2)
    codec = make_codec(4, 2, 1.5, rng)
    z = rng.standard_normal(2)
    obs = Observation(y=identity_operator(4).apply(codec.decode(z)),
                      operator=identity_operator(4), sigma_y=0.5)
    np.testing.assert_allclose(latent_loglik_grad(codec, obs, z), 0.0, atol=1e-12)


def test_latent_loglik_grad_identity_codec():
    from dptraverse.observation import loglik_grad

    codec = LinearCodec(decode_matrix=np.eye(3), offset=np.zeros(3))
    rng = np.random.default_rng(3)
    obs = observe(identity_operator(3), 0.5, rng.standard_normal(3), rng)
    x = rng.standard_normal(3)
    np.testing.assert_allclose(latent_loglik_grad(codec, obs, x), loglik_grad(obs, x))


def test_latent_loglik_grad_hand_chain_rule():
    # W = (2), identity op, y = 1, z = 0, squared form: 2 * 2 * (1 - 0) = 4
    codec = LinearCodec(decode_matrix=np.array([[2.0]]), offset=np.zeros(1))
    obs = Observation(y=np.array([1.0]), operator=identity_operator(1), sigma_y=1.0)
    assert latent_loglik_grad(codec, obs, np.zeros(1))[0] == pytest.approx(4.0)


def test_lmap_identity_codec_reduces_to_data_space(schedule, unit_prior, running_obs,
                                                   running_posterior):
    codec = LinearCodec(decode_matrix=np.eye(1), offset=np.zeros(1))
    cfg1 = Stage1Config(iterations=60, w=stage1_battery_weight(schedule, 1.0, 10.0), t1=10.0)
    cfg2 = Stage2Config(t0=50)
    prior_sc = ExactPriorScore(unit_prior, schedule)
    cond = ExactPosteriorScore(running_posterior, schedule)

    def stream():
        return np.random.default_rng(np.random.SeedSequence(entropy=5, spawn_key=(0, 0)))

    rec_lat = lmap_rps(running_obs, prior_sc, cond, codec, schedule, cfg1, cfg2, stream())
    rec_dat = map_rps(running_obs, prior_sc, cond, schedule, cfg1, cfg2, stream())
    np.testing.assert_array_equal(rec_lat.x_map, rec_dat.x_map)
    np.testing.assert_array_equal(rec_lat.x_final, rec_dat.x_final)


def test_lmap_stage1_matches_conjugate_mmse(schedule):
    # latent N(0, I_2) through a rank-2 codec into R^4, identity observation
    rng = np.random.default_rng(6)
    codec = make_codec(4, 2, 1.0, rng)
    lat_prior = gaussian(np.zeros(2), np.eye(2))
    z_true = lat_prior.sample(rng)
    obs = observe(identity_operator(4), 1.0, codec.decode(z_true), rng)
    A = codec.decode_matrix
    cov_z = np.linalg.inv(np.eye(2) + A.T @ A)
    z_mmse = cov_z @ (A.T @ obs.y)
    cfg1 = Stage1Config(iterations=500, eta0=0.05, eta_min=1e-4, t1=5.0, n_noise=4,
                        w=stage1_battery_weight(schedule, 1.0, 5.0))
    rec = lmap_rps(obs, ExactPriorScore(lat_prior, schedule), None, codec, schedule,
                   cfg1, Stage2Config(t0=0), np.random.default_rng(7))
    np.testing.assert_allclose(rec.x_map, codec.decode(z_mmse), atol=1e-2)
    np.testing.assert_allclose(rec.z_map, z_mmse, atol=1e-2)


def test_lmap_least_squares_limit(schedule):
    # vanishing prior weight with an invertible composite: decoded output
    # approaches the least-squares fit through the codec
    rng = np.random.default_rng(8)
    codec = make_codec(3, 3, 1.0, rng)
    op = DenseOperator(rng.standard_normal((3, 3)) + 2 * np.eye(3))
    z_true = rng.standard_normal(3)
    obs = observe(op, 0.2, codec.decode(z_true), rng)
    M = op.as_matrix() @ codec.decode_matrix
    z_ls = np.linalg.solve(M.T @ M, M.T @ obs.y)
    cfg1 = Stage1Config(iterations=3000, eta0=0.03, eta_min=1e-6, w=1e-12, t1=10.0)
    lat_prior = gaussian(np.zeros(3), 100.0 * np.eye(3))
    rec = lmap_rps(obs, ExactPriorScore(lat_prior, schedule), None, codec, schedule,
                   cfg1, Stage2Config(t0=0), np.random.default_rng(9))
    np.testing.assert_allclose(rec.z_map, z_ls, atol=5e-3)


def test_latent_bound_formulas():
    assert latent_map_gap_bound(1, 4.0, 1.0) == pytest.approx(1.0)
    assert latent_w2_renoising_bound(0.0, 0.5, 2, 1.0, 2.0, 0.1) == pytest.approx(0.2)
    assert latent_w2_renoising_bound(1.0, 0.0, 2, 1.0, 2.0, 0.0) == pytest.approx(4.0)


def test_pushforward_w2_lipschitz_contraction():
    # assignment W2 of decoded clouds is bounded by L_D times the latent W2
    rng = np.random.default_rng(10)
    codec = make_codec(5, 2, 3.0, rng)
    P = rng.standard_normal((512, 2))
    Q = rng.standard_normal((512, 2)) + np.array([1.0, -0.5])
    lhs = w2_assign(codec.decode(P), codec.decode(Q))
    rhs = codec.lipschitz * w2_assign(P, Q)
    assert lhs <= rhs * 1.05
