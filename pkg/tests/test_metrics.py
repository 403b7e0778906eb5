import numpy as np
import pytest

from dptraverse.metrics import (
    DpCurvePoint,
    gaussian_moment_oracle,
    mse,
    w2_1d,
    w2_assign,
    w2_gaussian,
    w2_samples,
)
from dptraverse.posterior import GaussianPosterior
from dptraverse.schedule import default_schedule


def test_mse_examples():
    a = np.array([[1.0], [2.0]])
    assert mse(a, a) == (0.0, 0.0)
    mean, se = mse(np.zeros((2, 1)), np.array([[1.0], [-1.0]]))
    assert mean == 1.0 and se == 0.0
    with pytest.raises(ValueError):
        mse(np.zeros((2, 1)), np.zeros((2, 2)))
    with pytest.raises(ValueError):
        mse(np.zeros((1, 1)), np.zeros((1, 1)))


def test_mse_posterior_sampling_is_twice_dstar(running_posterior):
    # E||X - X_PS||^2 = 2 D* when X_PS is an independent posterior draw
    rng = np.random.default_rng(0)
    y = rng.standard_normal(10_000) + rng.standard_normal(10_000)
    # conditional draws around the common posterior mean 0.5 y
    x = 0.5 * y + np.sqrt(0.5) * rng.standard_normal(10_000)
    xs = 0.5 * y + np.sqrt(0.5) * rng.standard_normal(10_000)
    mean, _ = mse(x[:, None], xs[:, None])
    assert mean == pytest.approx(1.0, rel=0.05)


def test_w2_gaussian_examples():
    assert w2_gaussian([0.0], [[1.0]], [1.0], [[1.0]]) == pytest.approx(1.0)
    assert w2_gaussian([0.0], [[1.0]], [0.0], [[0.5]]) == pytest.approx(1 - np.sqrt(0.5))
    assert w2_gaussian([0.3], [[0.7]], [0.3], [[0.7]]) == 0.0
    with pytest.raises(ValueError):
        w2_gaussian([0.0, 0.0], np.diag([1.0, -0.5]), [0.0, 0.0], np.eye(2))


def test_w2_gaussian_degenerate_covariances():
    # point mass vs unit Gaussian: sqrt(mean gap^2 + trace)
    assert w2_gaussian([0.0], [[0.0]], [1.0], [[1.0]]) == pytest.approx(np.sqrt(2.0))


def test_w2_1d_examples():
    assert w2_1d([0.0, 1.0], [1.0, 0.0]) == 0.0
    assert w2_1d([0.0, 0.0], [1.0, 1.0]) == 1.0
    rng = np.random.default_rng(1)
    a = rng.standard_normal(4096)
    b = np.sqrt(0.5) * rng.standard_normal(4096)
    target = 1 - np.sqrt(0.5)
    assert w2_1d(a, b) == pytest.approx(target, rel=0.10)
    with pytest.raises(ValueError):
        w2_1d([0.0], [1.0, 2.0])


def test_w2_assign_examples():
    rng = np.random.default_rng(2)
    a = rng.standard_normal((256, 2))
    assert w2_assign(a, a.copy()) == 0.0
    # 1D assignment equals the quantile coupling exactly
    a1 = rng.standard_normal((256, 1))
    b1 = rng.standard_normal((256, 1)) + 0.7
    assert w2_assign(a1, b1) == pytest.approx(w2_1d(a1, b1), rel=1e-12)
    # 2D mean shift of 1 at m = 512 within 10% (averaged over repetitions to
    # damp the single-draw noise of the empirical estimator)
    reps = []
    for _ in range(4):
        a2 = rng.standard_normal((512, 2))
        b2 = rng.standard_normal((512, 2)) + np.array([1.0, 0.0])
        reps.append(w2_assign(a2, b2))
    assert np.mean(reps) == pytest.approx(1.0, rel=0.10)


def test_w2_assign_cap_and_shapes():
    with pytest.raises(ValueError):
        w2_assign(np.zeros((2049, 1)), np.zeros((2049, 1)))
    with pytest.raises(ValueError):
        w2_assign(np.zeros((4, 1)), np.zeros((5, 1)))
    with pytest.raises(ValueError):
        w2_assign(np.zeros((4, 1)), np.zeros((4, 2)))


def test_w2_assign_metric_properties():
    rng = np.random.default_rng(3)
    a = rng.standard_normal((64, 2))
    b = rng.standard_normal((64, 2)) + 0.5
    c = rng.standard_normal((64, 2)) - 0.25
    dab, dba = w2_assign(a, b), w2_assign(b, a)
    assert dab == pytest.approx(dba, abs=1e-12)
    assert w2_assign(a, c) <= dab + w2_assign(b, c) + 1e-9
    # invariant to a common permutation of both sets
    perm = rng.permutation(64)
    assert w2_assign(a[perm], b[perm]) == pytest.approx(dab, abs=1e-12)


def test_w2_assign_convolution_contraction():
    rng = np.random.default_rng(4)
    a = rng.standard_normal((512, 2))
    b = rng.standard_normal((512, 2)) + np.array([1.5, 0.0])
    z = np.sqrt(0.5) * rng.standard_normal((512, 2))
    assert w2_assign(a + z, b + z) <= w2_assign(a, b) * 1.05


def test_w2_samples_dispatch():
    rng = np.random.default_rng(5)
    a = rng.standard_normal((4096, 1))
    b = rng.standard_normal((4096, 1)) + 1.0
    val, se = w2_samples(a, b)
    assert val == pytest.approx(1.0, rel=0.1)
    assert se >= 0
    a2 = rng.standard_normal((3000, 2))
    b2 = rng.standard_normal((3000, 2)) + np.array([1.0, 0.0])
    val2, se2 = w2_samples(a2, b2, rng=rng)
    assert val2 == pytest.approx(1.0, rel=0.1)


def test_dp_curve_point_validation():
    with pytest.raises(ValueError):
        DpCurvePoint(t0=0, distortion_mean=1.0, distortion_stderr=-0.1, w2=0.0,
                     w2_stderr=0.0, n_trials=2)
    p = DpCurvePoint(t0=0, distortion_mean=1.0, distortion_stderr=float("nan"),
                     w2=0.5, w2_stderr=float("nan"), n_trials=1)
    assert np.isnan(p.w2_stderr)


def test_moment_oracle_noop():
    s = default_schedule()
    post = GaussianPosterior(mean=[0.5], cov=[[0.5]])
    mean, cov = gaussian_moment_oracle(post, s, np.array([0.4]), 0)
    assert mean[0] == 0.4 and cov[0, 0] == 0.0


def test_moment_oracle_full_chain_reaches_posterior():
    s = default_schedule()
    post = GaussianPosterior(mean=[0.5], cov=[[0.5]])
    mean, cov = gaussian_moment_oracle(post, s, post.mean, 1000)
    assert mean[0] == pytest.approx(0.5, rel=0.01)
    assert cov[0, 0] == pytest.approx(0.5, rel=0.01)


def test_moment_oracle_range_check():
    s = default_schedule()
    post = GaussianPosterior(mean=[0.0], cov=[[1.0]])
    with pytest.raises(ValueError):
        gaussian_moment_oracle(post, s, np.zeros(1), 1001)
