import numpy as np
import pytest

from dptraverse.schedule import Schedule, make_linear_schedule


def test_linear_schedule_endpoints():
    s = make_linear_schedule(1000, 1e-4, 0.02)
    assert s.alpha_bar[0] == 1.0
    # log-sum oracle for the terminal value: sum of log(1 - beta_t)
    betas = np.linspace(1e-4, 0.02, 1000)
    expected = np.exp(np.sum(np.log1p(-betas)))
    assert s.alpha_bar[-1] == pytest.approx(expected, rel=1e-12)
    assert s.alpha_bar[-1] == pytest.approx(4.04e-5, rel=5e-3)
    assert s.alpha_bar[-1] <= 1e-4


def test_two_step_schedule_by_hand():
    s = make_linear_schedule(2, 0.5, 0.5)
    np.testing.assert_allclose(s.alpha_bar, [1.0, 0.5, 0.25])


def test_schedule_validation():
    with pytest.raises(ValueError):
        make_linear_schedule(1, 1e-4, 0.02)
    with pytest.raises(ValueError):
        make_linear_schedule(10, 0.0, 0.02)
    with pytest.raises(ValueError):
        make_linear_schedule(10, 0.5, 0.2)
    with pytest.raises(ValueError):
        Schedule(alpha_bar=np.array([1.0, 0.5, 0.6]))
    with pytest.raises(ValueError):
        Schedule(alpha_bar=np.array([0.9, 0.5, 0.2]))


def test_monotone_and_coefficient_signs(schedule):
    assert np.all(np.diff(schedule.alpha_bar) < 0)
    for t in (0.0, 0.5, 1.0, 137.0, 999.3, 1000.0):
        f, g2 = schedule.coeffs(t)
        assert f <= 0
        assert g2 >= 0


def test_coeffs_at_zero_matches_first_rate(schedule):
    # alpha_bar'(0) = -beta_1 gives f(0) = -beta_1 / 2
    f0, _ = schedule.coeffs(0.0)
    assert f0 == pytest.approx(-1e-4 / 2, rel=1e-3)


def test_coeffs_against_finite_differences(schedule):
    # g^2(t) = d(1 - ab)/dt - 2 f(t) (1 - ab) evaluated by central
    # differences of the interpolated alpha_bar, off the grid knots
    for t in (10.4, 250.5, 777.25):
        f, g2 = schedule.coeffs(t)
        h = 1e-5
        ab = schedule.alpha_bar_at(t)
        dab = (schedule.alpha_bar_at(t + h) - schedule.alpha_bar_at(t - h)) / (2 * h)
        dlog_sqrt = (schedule.log_alpha_bar(t + h) - schedule.log_alpha_bar(t - h)) / (4 * h)
        assert f == pytest.approx(dlog_sqrt, rel=1e-6)
        assert g2 == pytest.approx(-dab - 2 * dlog_sqrt * (1 - ab), rel=1e-6)


def test_coeffs_constant_segment():
    # a flat log alpha_bar segment has zero drift and diffusion; emulate via
    # an almost-flat schedule and check both vanish proportionally
    s = Schedule(alpha_bar=np.array([1.0, 1.0 - 1e-13, 1.0 - 2e-13]))
    f, g2 = s.coeffs(1)
    assert abs(f) < 1e-12
    assert abs(g2) < 1e-12


def test_out_of_range_times(schedule):
    with pytest.raises(ValueError):
        schedule.coeffs(-0.1)
    with pytest.raises(ValueError):
        schedule.coeffs(1000.5)
    with pytest.raises(ValueError):
        schedule.forward_sample(np.zeros(2), 1001, np.random.default_rng(0))


def test_forward_sample_identity_at_zero(schedule):
    x0 = np.array([1.7, -2.2])
    out = schedule.forward_sample(x0, 0, np.random.default_rng(0))
    np.testing.assert_array_equal(out, x0)


def test_forward_sample_terminal_moments(schedule):
    rng = np.random.default_rng(1)
    draws = schedule.forward_sample(np.zeros((100_000, 1)), 1000, rng)
    assert abs(draws.mean()) < 3 * draws.std() / np.sqrt(draws.size)
    assert draws.var() == pytest.approx(1.0, rel=0.02)


def test_forward_sample_kernel_moments(schedule):
    # x0 = 2, alpha_bar = 0.25 -> mean 1.0, variance 0.75
    t = float(np.interp(np.log(0.25), schedule._log_ab[::-1],
                        np.arange(schedule.num_steps + 1)[::-1]))
    ab = schedule.alpha_bar_at(t)
    assert ab == pytest.approx(0.25, rel=1e-10)
    rng = np.random.default_rng(2)
    draws = schedule.forward_sample(np.full((100_000, 1), 2.0), t, rng)
    se_mean = np.sqrt(0.75 / draws.size)
    assert draws.mean() == pytest.approx(1.0, abs=3 * se_mean)
    assert draws.var() == pytest.approx(0.75, rel=0.02)


def test_forward_semigroup(schedule):
    # composing the kernel 0 -> t1 -> t2 matches the one-shot kernel to t2
    rng = np.random.default_rng(3)
    t1, t2 = 300, 700
    x0 = np.full((100_000, 1), 1.5)
    xt1 = schedule.forward_sample(x0, t1, rng)
    ratio = schedule.alpha_bar_at(t2) / schedule.alpha_bar_at(t1)
    xt2 = np.sqrt(ratio) * xt1 + np.sqrt(1 - ratio) * rng.standard_normal(xt1.shape)
    direct_mean = np.sqrt(schedule.alpha_bar_at(t2)) * 1.5
    direct_var = 1 - schedule.alpha_bar_at(t2)
    assert xt2.mean() == pytest.approx(direct_mean, abs=3 * np.sqrt(direct_var / xt2.size))
    assert xt2.var() == pytest.approx(direct_var, rel=0.02)


def test_point_mass_w2_contraction(schedule):
    # noising two point masses a, b scales their W2 by sqrt(alpha_bar_t)
    from dptraverse.metrics import w2_gaussian

    a, b = -1.0, 2.0
    for t in (100, 500, 900):
        ab = float(schedule.alpha_bar_at(t))
        w2 = w2_gaussian([np.sqrt(ab) * a], [[1 - ab]], [np.sqrt(ab) * b], [[1 - ab]])
        assert w2 == pytest.approx(np.sqrt(ab) * abs(a - b), rel=1e-12)
