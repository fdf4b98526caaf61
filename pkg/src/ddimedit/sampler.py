"""Deterministic DDIM update, its exact inverse, guidance and the reverse loop."""

from __future__ import annotations

import numpy as np

from ddimedit.errors import (
    DimensionMismatchError,
    InvalidTimestepError,
    MissingNoiseError,
    NumericDegeneracyError,
    StochasticScheduleError,
)
from ddimedit.oracle import Condition, DenoiserOracle
from ddimedit.schedule import NoiseSchedule, TimestepPlan


def _pair(a, b, what: str = "states") -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"{what} have shapes {a.shape} and {b.shape}")
    return a, b


def predict_x0(x_t, eps, t: int, schedule: NoiseSchedule) -> np.ndarray:
    """Clean-sample estimate ``(x_t - sqrt(1 - a_t) eps) / sqrt(a_t)``."""
    x_t, eps = _pair(x_t, eps)
    t = schedule.check_timestep(t)
    if t == 0:
        raise InvalidTimestepError("predict_x0 needs t >= 1")
    a = schedule.alpha_bar[t]
    if a <= 0.0:
        raise NumericDegeneracyError(f"alpha_bar[{t}] is zero")
    return (x_t - np.sqrt(1.0 - a) * eps) / np.sqrt(a)


def cfg_combine(eps_uncond, eps_cond, s: float) -> np.ndarray:
    """Classifier-free guidance: ``eps_uncond + s * (eps_cond - eps_uncond)``.

    ``s == 0`` and ``s == 1`` return exact copies of the respective input.
    """
    eps_uncond, eps_cond = _pair(eps_uncond, eps_cond, "noise predictions")
    if s == 0:
        return eps_uncond.copy()
    if s == 1:
        return eps_cond.copy()
    return eps_uncond + s * (eps_cond - eps_uncond)


def guided_eps(oracle: DenoiserOracle, x, t: int, cond: Condition, s: float) -> np.ndarray:
    """Noise prediction under guidance scale ``s``.

    A single oracle query suffices when there is no condition or ``s == 1``.
    """
    if cond is None or s == 1:
        return oracle.predict_eps(x, t, cond)
    return cfg_combine(oracle.predict_eps(x, t, None), oracle.predict_eps(x, t, cond), s)


def ddim_step(x_t, eps, t: int, t_prev: int, schedule: NoiseSchedule, noise=None) -> np.ndarray:
    """One reverse step from ``t`` to ``t_prev`` at fixed noise prediction ``eps``."""
    x_t, eps = _pair(x_t, eps)
    t = schedule.check_timestep(t)
    t_prev = schedule.check_timestep(t_prev)
    if t_prev > t:
        raise InvalidTimestepError(f"reverse step needs t_prev <= t, got {t_prev} > {t}")
    if t_prev == t:
        return x_t.copy()
    sigma = schedule.sigma(t, t_prev)
    a_prev = schedule.alpha_bar[t_prev]
    out = np.sqrt(a_prev) * predict_x0(x_t, eps, t, schedule) + np.sqrt(
        max(1.0 - a_prev - sigma**2, 0.0)
    ) * eps
    if sigma > 0.0:
        if noise is None:
            raise MissingNoiseError(f"sigma={sigma:g} > 0 at t={t} but no noise was supplied")
        _, noise = _pair(x_t, noise)
        out = out + sigma * noise
    return out


def ddim_inverse_step(x_prev, eps, t_prev: int, t: int, schedule: NoiseSchedule) -> np.ndarray:
    """The unique ``x_t`` with ``ddim_step(x_t, eps, t, t_prev) == x_prev`` (deterministic schedules)."""
    if not schedule.deterministic:
        raise StochasticScheduleError("inversion is only defined for eta == 0")
    x_prev, eps = _pair(x_prev, eps)
    t = schedule.check_timestep(t)
    t_prev = schedule.check_timestep(t_prev)
    if t_prev > t:
        raise InvalidTimestepError(f"inverse step needs t_prev <= t, got {t_prev} > {t}")
    if t_prev == t:
        return x_prev.copy()
    a_prev, a_t = schedule.alpha_bar[t_prev], schedule.alpha_bar[t]
    x0_hat = (x_prev - np.sqrt(1.0 - a_prev) * eps) / np.sqrt(a_prev)
    return np.sqrt(a_t) * x0_hat + np.sqrt(1.0 - a_t) * eps


def sample(
    x_T,
    plan: TimestepPlan,
    oracle: DenoiserOracle,
    cond: Condition,
    s: float,
    schedule: NoiseSchedule,
    seed: int = 0,
) -> np.ndarray:
    """Run the reverse process from ``x_T`` at ``plan.start`` down to timestep 0.

    The seed only feeds the per-step noise of stochastic schedules; with
    ``eta == 0`` no generator is ever created.
    """
    plan.validate(schedule)
    x = np.asarray(x_T, dtype=np.float64)
    rng = None
    for t, t_prev in plan.transitions():
        eps = guided_eps(oracle, x, t, cond, s)
        noise = None
        if schedule.sigma(t, t_prev) > 0.0:
            if rng is None:
                rng = np.random.default_rng(seed)
            noise = rng.standard_normal(x.shape)
        x = ddim_step(x, eps, t, t_prev, schedule, noise)
    if not np.all(np.isfinite(x)):
        raise NumericDegeneracyError("sampling produced non-finite values")
    return x
