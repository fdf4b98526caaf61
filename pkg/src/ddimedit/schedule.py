"""Noise schedule, timestep respacing and the closed-form forward process."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ddimedit.errors import DimensionMismatchError, InvalidParameterError, InvalidTimestepError


@dataclass(frozen=True)
class NoiseSchedule:
    """Cumulative signal coefficients ``alpha_bar[0..T]`` plus the stochasticity knob ``eta``.

    ``alpha_bar[0]`` is the clean-sample sentinel and must equal 1. The array is
    stored read-only so a schedule can be shared between threads.
    """

    alpha_bar: np.ndarray
    eta: float = 0.0
    T: int = field(init=False)

    def __post_init__(self):
        ab = np.array(self.alpha_bar, dtype=np.float64)
        if ab.ndim != 1 or ab.size < 2:
            raise InvalidParameterError("alpha_bar must be a 1-D sequence of length T+1 >= 2")
        if ab[0] != 1.0:
            raise InvalidParameterError("alpha_bar[0] must equal 1")
        if not np.all(np.isfinite(ab)) or np.any(ab <= 0.0) or np.any(ab > 1.0):
            raise InvalidParameterError("alpha_bar values must lie in (0, 1]")
        if np.any(np.diff(ab) >= 0.0):
            raise InvalidParameterError("alpha_bar must be strictly decreasing")
        if not np.isfinite(self.eta) or self.eta < 0:
            raise InvalidParameterError("eta must be >= 0")
        ab.setflags(write=False)
        object.__setattr__(self, "alpha_bar", ab)
        object.__setattr__(self, "eta", float(self.eta))
        object.__setattr__(self, "T", ab.size - 1)

    @property
    def deterministic(self) -> bool:
        return self.eta == 0.0

    def check_timestep(self, t: int) -> int:
        if isinstance(t, (bool, np.bool_)) or int(t) != t or not 0 <= t <= self.T:
            raise InvalidTimestepError(f"timestep {t!r} outside [0, {self.T}]")
        return int(t)

    def sigma(self, t: int, t_prev: int | None = None) -> float:
        """Noise scale injected by a reverse step from ``t`` to ``t_prev`` (default ``t - 1``)."""
        t = self.check_timestep(t)
        t_prev = t - 1 if t_prev is None else self.check_timestep(t_prev)
        if self.eta == 0.0 or t_prev >= t:
            return 0.0
        a_t, a_prev = self.alpha_bar[t], self.alpha_bar[t_prev]
        return float(self.eta * np.sqrt((1 - a_prev) / (1 - a_t)) * np.sqrt(1 - a_t / a_prev))


def build_linear_schedule(
    T: int = 1000, beta_start: float = 1e-4, beta_end: float = 0.02, eta: float = 0.0
) -> NoiseSchedule:
    """Linear-beta schedule: ``alpha_bar[t] = prod_{s<=t} (1 - beta_s)``."""
    if isinstance(T, bool) or int(T) != T or T < 1:
        raise InvalidParameterError(f"T must be a positive integer, got {T!r}")
    if not 0 < beta_start <= beta_end < 1:
        raise InvalidParameterError("require 0 < beta_start <= beta_end < 1")
    if not eta >= 0:
        raise InvalidParameterError("eta must be >= 0")
    betas = np.linspace(beta_start, beta_end, int(T), dtype=np.float64)
    alpha_bar = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
    return NoiseSchedule(alpha_bar, eta=eta)


@dataclass(frozen=True)
class TimestepPlan:
    """Strictly decreasing timesteps visited by an inversion or decode, ending at 0."""

    steps: tuple[int, ...]

    def __post_init__(self):
        steps = tuple(int(s) for s in self.steps)
        if not steps or steps[-1] != 0:
            raise InvalidParameterError("plan must end at timestep 0")
        if any(a <= b for a, b in zip(steps, steps[1:])):
            raise InvalidParameterError("plan must be strictly decreasing")
        object.__setattr__(self, "steps", steps)

    @property
    def n_steps(self) -> int:
        return len(self.steps) - 1

    @property
    def start(self) -> int:
        return self.steps[0]

    def transitions(self):
        """Yield ``(t, t_prev)`` pairs in decode order."""
        return zip(self.steps[:-1], self.steps[1:])

    def validate(self, schedule: NoiseSchedule) -> None:
        if self.start > schedule.T:
            raise InvalidParameterError(f"plan starts at {self.start} > T={schedule.T}")


def plan_timesteps(T: int, n_steps: int) -> TimestepPlan:
    """Evenly strided plan ``[n*k, (n-1)*k, ..., 0]`` with ``k = T // n_steps``."""
    if int(n_steps) != n_steps or not 1 <= n_steps <= T:
        raise InvalidParameterError(f"n_steps must satisfy 1 <= n_steps <= T ({T}), got {n_steps!r}")
    stride = T // n_steps
    return TimestepPlan(tuple(range(n_steps * stride, -1, -stride)))


def forward_diffuse(x0, t: int, eps, schedule: NoiseSchedule) -> np.ndarray:
    """``sqrt(alpha_bar[t]) * x0 + sqrt(1 - alpha_bar[t]) * eps``."""
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if x0.shape != eps.shape:
        raise DimensionMismatchError(f"x0 shape {x0.shape} != eps shape {eps.shape}")
    a = schedule.alpha_bar[schedule.check_timestep(t)]
    return np.sqrt(a) * x0 + np.sqrt(1.0 - a) * eps
