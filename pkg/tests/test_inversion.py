import numpy as np
import pytest

from ddimedit.errors import DimensionMismatchError, MissingOracleError, PlanMismatchError, StochasticScheduleError
from ddimedit.inversion import (
    InversionRecord,
    invert,
    load_record,
    reconstruct,
    reconstruction_mse,
    record_from_bytes,
    record_to_bytes,
    save_record,
)
from ddimedit.oracle import GaussianWorld, make_oracle
from ddimedit.schedule import TimestepPlan, build_linear_schedule, plan_timesteps

# repredict-mode mean MSE, 50 mixture samples drawn with default_rng(0), standard world
PINNED_RECON_MSE = {
    5: 0.31717577121464435,
    10: 0.14975264118622367,
    25: 0.0319842874731328,
    50: 0.008613497921987732,
    100: 0.0022237412510539433,
}


def test_empty_inversion(gmm_oracle, schedule):
    x0 = np.array([1.0, 2.0])
    record = invert(x0, TimestepPlan((0,)), gmm_oracle, schedule)
    assert record.latents.shape == (1, 2) and record.recorded_eps.shape == (0, 2)
    assert np.array_equal(reconstruct(record, schedule), x0)


def test_record_layout(gmm_oracle, schedule, rng):
    plan = plan_timesteps(1000, 10)
    x0 = rng.standard_normal((3, 2))
    record = invert(x0, plan, gmm_oracle, schedule)
    assert record.latents.shape == (11, 3, 2)
    assert record.recorded_eps.shape == (10, 3, 2)
    assert np.array_equal(record.x0, x0)
    # first inversion transition 0 -> 100 used the prediction at (x0, 100)
    np.testing.assert_array_equal(record.recorded_eps[-1], gmm_oracle.predict_eps(x0, 100))


def test_replay_identity(gmm_oracle, gaussian_oracle, schedule, rng):
    for oracle in (gmm_oracle, gaussian_oracle):
        for n in (1, 7, 100, 1000):
            x0 = rng.standard_normal((20, 2)) * 3
            record = invert(x0, plan_timesteps(1000, n), oracle, schedule)
            assert np.abs(reconstruct(record, schedule, "replay") - x0).max() < 1e-5


def test_inversion_bitwise_deterministic(gmm_oracle, schedule, rng):
    x0 = rng.standard_normal((5, 2))
    plan = plan_timesteps(1000, 50)
    a, b = invert(x0, plan, gmm_oracle, schedule), invert(x0.copy(), plan, gmm_oracle, schedule)
    assert np.array_equal(a.latents, b.latents) and np.array_equal(a.recorded_eps, b.recorded_eps)


def test_inversion_requires_deterministic_schedule(gmm_world):
    sched = build_linear_schedule(100, 1e-3, 0.05, eta=0.3)
    with pytest.raises(StochasticScheduleError):
        invert(np.zeros(2), plan_timesteps(100, 10), make_oracle(gmm_world, sched), sched)


def test_point_mass_round_trip(schedule):
    world = GaussianWorld([1.0, -0.5], 1e-12)
    oracle = make_oracle(world, schedule)
    x0 = world.sample(20, np.random.default_rng(3))
    record = invert(x0, plan_timesteps(1000, 100), oracle, schedule)
    assert np.abs(reconstruct(record, schedule, "repredict", oracle) - x0).max() < 1e-3


def test_repredict_full_steps_gaussian(gaussian_world, gaussian_oracle, schedule):
    x0 = gaussian_world.sample(20, np.random.default_rng(3))
    record = invert(x0, plan_timesteps(1000, 1000), gaussian_oracle, schedule)
    assert reconstruction_mse(x0, reconstruct(record, schedule, "repredict", gaussian_oracle)).max() < 1e-3


def test_repredict_not_better_than_replay(gmm_world, gmm_oracle, schedule):
    x0 = gmm_world.sample(30, np.random.default_rng(4))
    record = invert(x0, plan_timesteps(1000, 25), gmm_oracle, schedule)
    replay = reconstruction_mse(x0, reconstruct(record, schedule, "replay"))
    repredict = reconstruction_mse(x0, reconstruct(record, schedule, "repredict", gmm_oracle))
    assert np.all(repredict >= replay)


def test_repredict_needs_oracle(gmm_oracle, schedule):
    record = invert(np.zeros(2), plan_timesteps(1000, 5), gmm_oracle, schedule)
    with pytest.raises(MissingOracleError):
        reconstruct(record, schedule, "repredict")


def test_repredict_with_mismatched_start_rejected(gmm_oracle, schedule):
    record = invert(np.zeros(2), plan_timesteps(1000, 3), gmm_oracle, schedule)
    with pytest.raises(PlanMismatchError):
        reconstruct(record, schedule, "repredict", gmm_oracle, plan_timesteps(1000, 4))


def test_reconstruction_trend_pinned(gmm_world, gmm_oracle, schedule):
    x0 = gmm_world.sample(50, np.random.default_rng(0))
    got = {}
    for n in PINNED_RECON_MSE:
        record = invert(x0, plan_timesteps(1000, n), gmm_oracle, schedule)
        got[n] = float(np.mean(reconstruction_mse(x0, reconstruct(record, schedule, "repredict", gmm_oracle))))
    values = [got[n] for n in sorted(got)]
    assert all(a > b for a, b in zip(values, values[1:]))
    for n, expected in PINNED_RECON_MSE.items():
        assert got[n] == pytest.approx(expected, rel=1e-9)


def test_mse_examples():
    assert reconstruction_mse([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert reconstruction_mse([0.0, 0.0], [1.0, 1.0]) == 1.0
    assert reconstruction_mse([0.0, 0.0], [3.0, 4.0]) == 12.5
    with pytest.raises(DimensionMismatchError):
        reconstruction_mse([0.0], [0.0, 1.0])


def test_eps_alignment_prefers_nearest_then_larger(gmm_oracle, schedule):
    record = invert(np.array([0.5, 0.5]), TimestepPlan((100, 60, 20, 0)), gmm_oracle, schedule)
    assert np.array_equal(record.eps_near(58), record.recorded_eps[1])
    assert np.array_equal(record.eps_near(80), record.recorded_eps[0])  # tie between 100 and 60
    assert np.array_equal(record.eps_near(5), record.recorded_eps[2])


@pytest.mark.parametrize("suffix", [".bin", ".txt"])
def test_serialization_round_trip(tmp_path, gmm_oracle, schedule, suffix):
    record = invert(np.array([-2.5, 0.25]), plan_timesteps(1000, 20), gmm_oracle, schedule, cond=1, s=2.0)
    path = tmp_path / f"rec{suffix}"
    save_record(record, path)
    loaded = load_record(path)
    assert loaded.plan == record.plan and loaded.cond_used == 1 and loaded.guidance_used == 2.0
    assert np.array_equal(loaded.latents, record.latents)
    assert np.array_equal(loaded.recorded_eps, record.recorded_eps)


def test_binary_layout_is_little_endian_float64(gmm_oracle, schedule):
    record = invert(np.array([1.0, 2.0]), TimestepPlan((10, 0)), gmm_oracle, schedule)
    data = record_to_bytes(record)
    header = 8 + 4 + 4 + 8 + 8
    assert data[:8] == b"DDIMREC1"
    assert int.from_bytes(data[8:12], "little") == 2 and int.from_bytes(data[12:16], "little") == 2
    assert np.frombuffer(data, "<i8", 2, header).tolist() == [10, 0]
    assert np.frombuffer(data, "<f8", 2, header + 16 + 16).tolist() == [1.0, 2.0]
    assert len(data) == header + 16 + 8 * (4 + 2)
    with pytest.raises(ValueError):
        record_from_bytes(data[:-8])


def test_batched_record_not_serializable(gmm_oracle, schedule):
    record = invert(np.zeros((2, 2)), TimestepPlan((10, 0)), gmm_oracle, schedule)
    with pytest.raises(DimensionMismatchError):
        record_to_bytes(record)


def test_record_shape_validation():
    with pytest.raises(ValueError):
        InversionRecord(TimestepPlan((5, 0)), np.zeros((3, 2)), np.zeros((2, 2)))
