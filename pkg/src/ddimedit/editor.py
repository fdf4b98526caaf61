"""Inversion-guided editing: decode an inverted latent toward a target
condition while merging the guided noise with the recorded inverted noise."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ddimedit.errors import (
    DimensionMismatchError,
    InvalidParameterError,
    NumericDegeneracyError,
    StochasticScheduleError,
)
from ddimedit.inversion import InversionRecord, check_plan_alignment
from ddimedit.oracle import Condition, DenoiserOracle
from ddimedit.sampler import ddim_step, guided_eps
from ddimedit.schedule import NoiseSchedule, TimestepPlan

INJECTION_SOURCES = ("per_step_eps", "terminal_latent")
INJECTION_MODES = ("continual", "initial_only")


@dataclass(frozen=True)
class EditConfig:
    """Knobs of the edit loop.

    ``lam`` is the noise-merge weight (1 keeps the original, 0 is a pure
    guided decode). Injection happens on every ``inject_every_k``-th step while
    the current timestep exceeds ``t_stop = ceil(stop_fraction * plan.start)``.
    """

    lam: float = 0.5
    inject_every_k: int = 1
    stop_fraction: float = 0.0
    injection_source: str = "per_step_eps"
    injection_mode: str = "continual"
    guidance_scale: float = 3.0
    target: Condition = None

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise InvalidParameterError(f"lambda must lie in [0, 1], got {self.lam!r}")
        if isinstance(self.inject_every_k, bool) or int(self.inject_every_k) != self.inject_every_k or self.inject_every_k < 1:
            raise InvalidParameterError(f"inject_every_k must be an integer >= 1, got {self.inject_every_k!r}")
        if not 0.0 <= self.stop_fraction <= 1.0:
            raise InvalidParameterError(f"stop_fraction must lie in [0, 1], got {self.stop_fraction!r}")
        if self.injection_source not in INJECTION_SOURCES:
            raise InvalidParameterError(f"injection_source must be one of {INJECTION_SOURCES}")
        if self.injection_mode not in INJECTION_MODES:
            raise InvalidParameterError(f"injection_mode must be one of {INJECTION_MODES}")
        if not self.guidance_scale >= 0:
            raise InvalidParameterError("guidance_scale must be >= 0")

    def t_stop(self, plan: TimestepPlan) -> int:
        return math.ceil(self.stop_fraction * plan.start)


def merge_noise(eps_guided, eps_injected, lam: float) -> np.ndarray:
    """Convex blend ``(1 - lam) * eps_guided + lam * eps_injected``; endpoints are exact."""
    if not 0.0 <= lam <= 1.0:
        raise InvalidParameterError(f"lambda must lie in [0, 1], got {lam!r}")
    eps_guided = np.asarray(eps_guided, dtype=np.float64)
    eps_injected = np.asarray(eps_injected, dtype=np.float64)
    if eps_guided.shape != eps_injected.shape:
        raise DimensionMismatchError(f"shapes {eps_guided.shape} and {eps_injected.shape} differ")
    if lam == 0.0:
        return eps_guided.copy()
    if lam == 1.0:
        return eps_injected.copy()
    return (1.0 - lam) * eps_guided + lam * eps_injected


def edit(
    record: InversionRecord,
    config: EditConfig,
    oracle: DenoiserOracle,
    schedule: NoiseSchedule,
    plan: TimestepPlan | None = None,
) -> np.ndarray:
    """Decode from ``record.terminal`` under guidance toward ``config.target``."""
    if not schedule.deterministic:
        raise StochasticScheduleError("editing requires eta == 0")
    plan = record.plan if plan is None else plan
    plan.validate(schedule)
    check_plan_alignment(record, plan)
    t_stop = config.t_stop(plan)
    x = record.terminal
    for i, (t, t_prev) in enumerate(plan.transitions()):
        eps = guided_eps(oracle, x, t, config.target, config.guidance_scale)
        inject = (
            config.lam > 0.0
            and i % config.inject_every_k == 0
            and t > t_stop
            and (config.injection_mode == "continual" or i == 0)
        )
        if inject:
            if config.injection_source == "per_step_eps":
                injected = record.eps_near(t)
            else:
                injected = record.terminal
            eps = merge_noise(eps, injected, config.lam)
        x = ddim_step(x, eps, t, t_prev, schedule)
    if not np.all(np.isfinite(x)):
        raise NumericDegeneracyError("edit produced non-finite values")
    return np.array(x)
