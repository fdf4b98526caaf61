"""Quick closed-form checks runnable from the CLI (``ddimedit selftest``)."""

from __future__ import annotations

import math
import sys

import numpy as np

from ddimedit.editor import EditConfig, edit, merge_noise
from ddimedit.inversion import invert, reconstruct, reconstruction_mse
from ddimedit.metrics import alignment, fidelity
from ddimedit.oracle import GaussianWorld, gaussian_predict_eps, gmm_predict_eps, make_oracle, standard_world
from ddimedit.sampler import cfg_combine, ddim_inverse_step, ddim_step, predict_x0, sample
from ddimedit.schedule import NoiseSchedule, build_linear_schedule, forward_diffuse, plan_timesteps


def _checks():
    sched = build_linear_schedule(1000, 1e-4, 0.02)
    quarter = NoiseSchedule([1.0, 0.25])
    world = standard_world()
    oracle = make_oracle(world, sched)
    rng = np.random.default_rng(0)
    x0 = world.sample(8, rng, label=0)
    plan = plan_timesteps(1000, 100)
    record = invert(x0, plan, oracle, sched)

    yield "linear schedule T=2 beta=0.5", np.allclose(
        build_linear_schedule(2, 0.5, 0.5).alpha_bar, [1.0, 0.5, 0.25], rtol=0, atol=1e-15
    )
    yield "plan T=1000 n=4", plan_timesteps(1000, 4).steps == (1000, 750, 500, 250, 0)
    yield "plan T=10 n=3", plan_timesteps(10, 3).steps == (9, 6, 3, 0)
    yield "forward_diffuse t=0 is identity", np.array_equal(forward_diffuse(x0, 0, rng.standard_normal(x0.shape), sched), x0)
    yield "forward_diffuse direct value", math.isclose(forward_diffuse([1.0], 1, [2.0], quarter)[0], 2.2320508075688772, rel_tol=1e-12)
    yield "predict_x0 direct value", math.isclose(predict_x0([1.0], [1.0], 1, quarter)[0], 0.2679491924311227, rel_tol=1e-12)
    yield "inverse step direct value", math.isclose(ddim_inverse_step([1.0], [1.0], 0, 1, quarter)[0], 1.3660254037844386, rel_tol=1e-12)
    e_u, e_c = rng.standard_normal(2), rng.standard_normal(2)
    yield "cfg s=0 and s=1 reductions", np.array_equal(cfg_combine(e_u, e_c, 0.0), e_u) and np.allclose(
        cfg_combine(e_u, e_c, 1.0), e_c, rtol=0, atol=1e-15
    )
    yield "cfg s=7.5 direct value", cfg_combine([0.0], [1.0], 7.5)[0] == 7.5
    yield "ddim_step t_prev=t is identity", np.array_equal(ddim_step(x0, x0, 500, 500, sched), x0)
    xt = rng.standard_normal(2)
    yield "ddim_step to t=0 equals predict_x0", np.allclose(ddim_step(xt, e_u, 300, 0, sched), predict_x0(xt, e_u, 300, sched))
    yield "gaussian oracle zero at pushed-forward mean", np.allclose(
        gaussian_predict_eps(GaussianWorld([1.0, -2.0], 0.7), np.sqrt(sched.alpha_bar[400]) * np.array([1.0, -2.0]), 400, sched), 0.0
    )
    yield "gmm symmetric mixture zero at origin", np.allclose(gmm_predict_eps(world, np.zeros(2), 400, None, sched), 0.0)
    yield "replay reconstruction identity", float(np.max(np.abs(reconstruct(record, sched) - x0))) < 1e-5
    yield "merge lambda endpoints and midpoint", (
        np.array_equal(merge_noise(e_u, e_c, 0.0), e_u)
        and np.array_equal(merge_noise(e_u, e_c, 1.0), e_c)
        and merge_noise([0.0], [2.0], 0.5)[0] == 1.0
    )
    identity = EditConfig(lam=1.0, inject_every_k=1, stop_fraction=0.0, guidance_scale=3.0, target=1)
    yield "edit lambda=1 reproduces input", float(np.max(np.abs(edit(record, identity, oracle, sched) - x0))) < 1e-5
    pure = EditConfig(lam=0.0, guidance_scale=3.0, target=1)
    yield "edit lambda=0 equals guided sampling", np.array_equal(
        edit(record, pure, oracle, sched), sample(record.terminal, plan, oracle, 1, 3.0, sched)
    )
    disabled = EditConfig(lam=0.7, stop_fraction=1.0, guidance_scale=3.0, target=1)
    yield "stop_fraction=1 disables injection", np.array_equal(edit(record, disabled, oracle, sched), edit(record, pure, oracle, sched))
    yield "mse direct value", reconstruction_mse([0.0, 0.0], [3.0, 4.0]) == 12.5
    yield "fidelity at mse=1", math.isclose(float(fidelity([0.0], [1.0])), math.exp(-1.0))
    yield "alignment anchors", float(alignment(world.means[1], 1, world)) == 1.0 and float(alignment(world.means[0], 1, world)) < 0


def run_selftest(stream=None) -> bool:
    stream = stream or sys.stdout
    ok = True
    for name, passed in _checks():
        passed = bool(passed)
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'}  {name}", file=stream)
    return ok
