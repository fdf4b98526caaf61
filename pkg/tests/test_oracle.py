import numpy as np
import pytest

from ddimedit.errors import InvalidConditionError, InvalidParameterError, InvalidTimestepError
from ddimedit.oracle import (
    GaussianWorld,
    GmmWorld,
    gaussian_predict_eps,
    gmm_predict_eps,
    gmm_responsibilities,
    make_oracle,
    mc_reference_eps,
)
from ddimedit.schedule import NoiseSchedule, forward_diffuse

HALF = NoiseSchedule([1.0, 0.5])


def test_gaussian_zero_noise_at_pushed_forward_mean(schedule):
    world = GaussianWorld([1.0, -2.0, 0.5], 0.8)
    for t in (1, 100, 1000):
        x = np.sqrt(schedule.alpha_bar[t]) * world.mu
        np.testing.assert_allclose(gaussian_predict_eps(world, x, t, schedule), 0.0, atol=1e-12)


def test_gaussian_point_mass_limit(schedule, rng):
    world = GaussianWorld([0.3, 0.4], 1e-12)
    t = 500
    a = schedule.alpha_bar[t]
    x = rng.standard_normal(2)
    expected = (x - np.sqrt(a) * world.mu) / np.sqrt(1 - a)
    np.testing.assert_allclose(gaussian_predict_eps(world, x, t, schedule), expected, rtol=1e-4)


def test_gaussian_regression_constant_against_monte_carlo():
    world = GaussianWorld([0.0], 1.0)
    closed = gaussian_predict_eps(world, [1.0], 1, HALF)
    mc = mc_reference_eps(world, np.array([1.0]), 1, None, HALF, n_samples=10**6, seed=0)
    assert mc[0] == pytest.approx(closed[0], rel=0.01)
    # E[x0 | x=1] = 1/sqrt(2), so eps = (1 - 0.5) / sqrt(0.5)
    assert closed[0] == pytest.approx(1 / np.sqrt(2), rel=1e-12)


def test_gaussian_rejects_t0(schedule):
    with pytest.raises(InvalidTimestepError):
        gaussian_predict_eps(GaussianWorld([0.0], 1.0), [1.0], 0, schedule)


def test_gaussian_translation_equivariance(schedule, rng):
    world = GaussianWorld([0.2, -0.1], 1.3)
    for _ in range(20):
        t = int(rng.integers(1, 1001))
        c, x = rng.standard_normal(2) * 3, rng.standard_normal(2)
        shifted = GaussianWorld(world.mu + c, world.var0)
        np.testing.assert_allclose(
            gaussian_predict_eps(shifted, x + np.sqrt(schedule.alpha_bar[t]) * c, t, schedule),
            gaussian_predict_eps(world, x, t, schedule),
            atol=1e-9,
        )


def test_single_component_gmm_reduces_to_gaussian(schedule, rng):
    gmm = GmmWorld([1.0], [[0.5, 1.5]], 0.6)
    gauss = GaussianWorld([0.5, 1.5], 0.6)
    x = rng.standard_normal((7, 2))
    for t in (3, 300, 1000):
        np.testing.assert_allclose(
            gmm_predict_eps(gmm, x, t, None, schedule), gaussian_predict_eps(gauss, x, t, schedule), atol=1e-13
        )


def test_symmetric_mixture_at_origin(gmm_world, schedule):
    for t in (1, 50, 500, 1000):
        np.testing.assert_allclose(gmm_predict_eps(gmm_world, np.zeros(2), t, None, schedule), 0.0, atol=1e-12)


def test_conditional_matches_component(gmm_world, schedule, rng):
    x = rng.standard_normal((4, 2))
    np.testing.assert_array_equal(
        gmm_predict_eps(gmm_world, x, 200, 1, schedule),
        gaussian_predict_eps(gmm_world.component(1), x, 200, schedule),
    )


def test_responsibility_saturation(gmm_world, schedule):
    # 8 units beyond the pushed-forward mode 1 the mode-0 responsibility is ~ e^-40
    t = 300
    x = np.sqrt(schedule.alpha_bar[t]) * gmm_world.means[1] + np.array([8.0, 0.0])
    uncond = gmm_predict_eps(gmm_world, x, t, None, schedule)
    cond = gmm_predict_eps(gmm_world, x, t, 1, schedule)
    np.testing.assert_allclose(uncond, cond, atol=1e-6)


def test_responsibilities_do_not_underflow(gmm_world, schedule):
    r = gmm_responsibilities(gmm_world, np.array([1e4, 0.0]), 5, schedule)
    assert np.all(np.isfinite(r)) and r.sum() == pytest.approx(1.0)


def test_unconditional_is_convex_combination(gmm_world, schedule, rng):
    world = GmmWorld([0.2, 0.5, 0.3], [[-3.0, 0.0], [3.0, 1.0], [0.0, -4.0]], 0.7)
    for _ in range(50):
        t = int(rng.integers(1, 1001))
        x = rng.standard_normal(2) * 4
        r = gmm_responsibilities(world, x, t, schedule)
        assert np.all((r >= 0) & (r <= 1)) and abs(r.sum() - 1) < 1e-10
        parts = np.stack([gmm_predict_eps(world, x, t, k, schedule) for k in range(3)])
        np.testing.assert_allclose(gmm_predict_eps(world, x, t, None, schedule), r @ parts, atol=1e-12)


def test_invalid_condition(gmm_world, schedule):
    with pytest.raises(InvalidConditionError):
        gmm_predict_eps(gmm_world, np.zeros(2), 10, 2, schedule)
    with pytest.raises(InvalidConditionError):
        make_oracle(GaussianWorld([0.0], 1.0), schedule).predict_eps(np.zeros(1), 10, 1)


@pytest.mark.parametrize(
    "weights, means", [([0.5, 0.6], [[0.0], [1.0]]), ([1.0], [[0.0], [1.0]]), ([0.5, 0.5], [[0.0], [1.0, 2.0]])]
)
def test_invalid_gmm_world(weights, means):
    with pytest.raises((InvalidParameterError, ValueError)):
        GmmWorld(weights, means, 1.0)


def test_oracle_is_bitwise_deterministic(gmm_oracle, rng):
    x = rng.standard_normal((3, 2))
    assert np.array_equal(gmm_oracle.predict_eps(x, 321, None), gmm_oracle.predict_eps(x.copy(), 321, None))


def test_batched_matches_single(gmm_oracle, rng):
    x = rng.standard_normal((5, 2))
    batched = gmm_oracle.predict_eps(x, 321, None)
    for i in range(5):
        np.testing.assert_allclose(gmm_oracle.predict_eps(x[i], 321, None), batched[i], rtol=1e-14, atol=1e-15)


def test_mc_reference_seeded_determinism(gmm_world, schedule):
    x = np.array([0.4, -0.3])
    a = mc_reference_eps(gmm_world, x, 400, None, schedule, 10**4, seed=5)
    b = mc_reference_eps(gmm_world, x, 400, None, schedule, 10**4, seed=5)
    assert np.array_equal(a, b)


def test_mc_reference_point_mass(schedule):
    world = GaussianWorld([0.5, -0.5], 1e-12)
    x = np.array([0.1, 0.2])
    np.testing.assert_allclose(
        mc_reference_eps(world, x, 600, None, schedule, 10**5, 1), gaussian_predict_eps(world, x, 600, schedule), atol=1e-3
    )


def test_mc_reference_conditional(gmm_world, schedule):
    x = np.array([1.0, 0.5])
    mc = mc_reference_eps(gmm_world, x, 500, 0, schedule, 10**5, 2)
    np.testing.assert_allclose(mc, gmm_predict_eps(gmm_world, x, 500, 0, schedule), rtol=1e-3)


def test_mc_reference_rejects_small_budget(gmm_world, schedule):
    with pytest.raises(InvalidParameterError):
        mc_reference_eps(gmm_world, np.zeros(2), 10, None, schedule, 100)


def test_closed_forms_agree_with_mc_on_typical_states(gmm_world, gaussian_world, schedule):
    r = np.random.default_rng(77)
    for world in (gaussian_world, gmm_world):
        oracle = make_oracle(world, schedule)
        for _ in range(5):
            t = int(r.integers(50, 1001))
            x = forward_diffuse(world.sample(1, r)[0], t, r.standard_normal(2), schedule)
            mc = mc_reference_eps(world, x, t, None, schedule, 10**6, seed=0)
            np.testing.assert_allclose(oracle.predict_eps(x, t), mc, rtol=0.01)
