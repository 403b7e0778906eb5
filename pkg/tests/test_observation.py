import numpy as np
import pytest

from dptraverse.observation import (
    ClipOperator,
    DenseOperator,
    DownsampleOperator,
    MaskOperator,
    Observation,
    identity_operator,
    loglik_grad,
    observe,
    pinv_init,
    random_projection,
)

LINEAR_OPS = [
    identity_operator(4),
    DenseOperator(np.random.default_rng(0).standard_normal((3, 5))),
    MaskOperator(keep=np.array([0, 2]), n=4),
    DownsampleOperator(factor=2, n=6),
    random_projection(3, 6, seed=7),
]


@pytest.mark.parametrize("op", LINEAR_OPS, ids=lambda o: type(o).__name__)
def test_adjoint_consistency(op):
    rng = np.random.default_rng(1)
    for _ in range(5):
        x = rng.standard_normal(op.in_dim)
        u = rng.standard_normal(op.out_dim)
        lhs = np.dot(op.apply(x), u)
        rhs = np.dot(x, op.adjoint(u))
        assert lhs == pytest.approx(rhs, rel=1e-10)


@pytest.mark.parametrize("op", LINEAR_OPS, ids=lambda o: type(o).__name__)
def test_pseudoinverse_identity(op):
    rng = np.random.default_rng(2)
    X = rng.standard_normal((8, op.in_dim))
    lhs = op.apply(op.pinv_apply(op.apply(X)))
    np.testing.assert_allclose(lhs, op.apply(X), rtol=1e-8, atol=1e-10)


def test_observe_noiseless_identity():
    x = np.array([0.3, -1.2])
    obs = observe(identity_operator(2), 0.0, x, np.random.default_rng(0))
    np.testing.assert_array_equal(obs.y, x)


def test_observe_mask_projection():
    obs = observe(MaskOperator(keep=np.array([1]), n=2), 0.0, np.array([3.0, 5.0]),
                  np.random.default_rng(0))
    np.testing.assert_array_equal(obs.y, [5.0])


def test_observe_noise_variance():
    rng = np.random.default_rng(3)
    ys = np.array([observe(identity_operator(1), 1.0, np.zeros(1), rng).y[0]
                   for _ in range(10_000)])
    assert ys.var() == pytest.approx(1.0, rel=0.05)


def test_observation_validation():
    with pytest.raises(ValueError):
        Observation(y=np.zeros(3), operator=identity_operator(2), sigma_y=1.0)
    with pytest.raises(ValueError):
        Observation(y=np.zeros(2), operator=identity_operator(2), sigma_y=-1.0)
    with pytest.raises(ValueError):
        Observation(y=np.zeros(2), operator=identity_operator(2), sigma_y=1.0,
                    likelihood_form="huber")


def test_loglik_grad_examples():
    op = identity_operator(1)
    obs = Observation(y=np.array([1.0]), operator=op, sigma_y=1.0)
    # zero residual
    assert loglik_grad(obs, np.array([1.0]))[0] == 0.0
    # squared form: d/dx -(1 - x)^2 at x = 0 is +2
    assert loglik_grad(obs, np.array([0.0]))[0] == pytest.approx(2.0)
    # norm form: unit residual direction
    obs_norm = Observation(y=np.array([1.0]), operator=op, sigma_y=1.0,
                           likelihood_form="l2norm")
    assert loglik_grad(obs_norm, np.array([0.0]))[0] == pytest.approx(1.0)
    # norm form guards the zero-residual singularity
    assert loglik_grad(obs_norm, np.array([1.0]))[0] == 0.0


def test_loglik_grad_matches_finite_differences():
    rng = np.random.default_rng(4)
    op = DenseOperator(rng.standard_normal((3, 5)))
    x0 = rng.standard_normal(5)
    obs = observe(op, 0.5, x0, rng)

    def objective(x):
        r = obs.y - op.apply(x)
        return -np.sum(r**2)

    for x in rng.standard_normal((5, 5)):
        g = loglik_grad(obs, x)
        for j in range(5):
            e = np.zeros(5)
            e[j] = 1e-6
            fd = (objective(x + e) - objective(x - e)) / 2e-6
            assert g[j] == pytest.approx(fd, rel=1e-6, abs=1e-8)


def test_negative_loglik_hessian_psd():
    rng = np.random.default_rng(5)
    op = DenseOperator(rng.standard_normal((3, 4)))
    A = op.as_matrix()
    hess = A.T @ A / 0.5**2
    assert np.linalg.eigvalsh(hess).min() >= -1e-12


def test_batched_gradients_broadcast():
    op = DenseOperator(np.array([[1.0, 0.5], [0.0, 2.0]]))
    obs = Observation(y=np.zeros((7, 2)), operator=op, sigma_y=1.0)
    g = loglik_grad(obs, np.zeros((7, 2)))
    assert g.shape == (7, 2)


def test_pinv_init_examples():
    obs = Observation(y=np.array([2.0, -1.0]), operator=identity_operator(2), sigma_y=0.0)
    np.testing.assert_array_equal(pinv_init(obs), obs.y)
    obs = Observation(y=np.array([3.0]), operator=MaskOperator(keep=np.array([0]), n=2),
                      sigma_y=0.0)
    np.testing.assert_array_equal(pinv_init(obs), [3.0, 0.0])
    obs = Observation(y=np.array([4.0]), operator=DownsampleOperator(factor=2, n=2),
                      sigma_y=0.0)
    np.testing.assert_array_equal(pinv_init(obs), [4.0, 4.0])


def test_clip_operator_behavior():
    op = ClipOperator(threshold=1.0, n=3)
    x = np.array([0.2, 0.8, -0.9])
    np.testing.assert_allclose(op.apply(x), [0.4, 1.0, -1.0])
    obs = Observation(y=np.array([0.5, 0.5, 0.5]), operator=op, sigma_y=0.1)
    g = loglik_grad(obs, x)
    # saturated coordinates carry zero subgradient
    assert g[1] == 0.0 and g[2] == 0.0
    assert g[0] == pytest.approx(2.0 * 2.0 * (0.5 - 0.4))
    np.testing.assert_allclose(pinv_init(obs), obs.y / 2.0)


def test_clip_rejects_bad_threshold():
    with pytest.raises(ValueError):
        ClipOperator(threshold=0.0, n=1)


def test_random_projection_row_scale():
    op = random_projection(64, 128, seed=11)
    # rows i.i.d. N(0, 1/m): squared row norms concentrate near n/m
    row_sq = np.sum(op.matrix**2, axis=1)
    assert row_sq.mean() == pytest.approx(128 / 64, rel=0.1)
