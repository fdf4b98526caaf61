"""Noise-prediction oracles.

A denoiser is anything with ``predict_eps(x, t, cond)``. The closed-form
oracles here are the optimal (posterior-mean) predictors for isotropic
Gaussian and Gaussian-mixture data, so the rest of the engine can be tested
without trained weights. ``x`` may carry leading batch axes; the last axis is
the sample dimension.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Protocol

import numpy as np
from scipy.special import ndtri, softmax
from scipy.stats import qmc

from ddimedit.errors import (
    DimensionMismatchError,
    InvalidConditionError,
    InvalidParameterError,
    InvalidTimestepError,
)
from ddimedit.schedule import NoiseSchedule

Condition = int | None


class DenoiserOracle(Protocol):
    def predict_eps(self, x: np.ndarray, t: int, cond: Condition = None) -> np.ndarray: ...


@dataclass(frozen=True)
class GaussianWorld:
    mu: np.ndarray
    var0: float

    def __post_init__(self):
        mu = np.array(self.mu, dtype=np.float64)
        if mu.ndim != 1 or mu.size == 0:
            raise InvalidParameterError("mu must be a non-empty vector")
        if not self.var0 > 0:
            raise InvalidParameterError("var0 must be > 0")
        mu.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "var0", float(self.var0))

    @property
    def d(self) -> int:
        return self.mu.size

    @property
    def n_components(self) -> int:
        return 1

    def component(self, label: Condition) -> GaussianWorld:
        _check_label(label, 1)
        return self

    def sample(self, n: int, rng: np.random.Generator, label: Condition = None) -> np.ndarray:
        _check_label(label, 1)
        return self.mu + np.sqrt(self.var0) * rng.standard_normal((n, self.d))


@dataclass(frozen=True)
class GmmWorld:
    weights: np.ndarray
    means: np.ndarray
    var0: float

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64)
        m = np.array(self.means, dtype=np.float64)
        if w.ndim != 1 or w.size == 0 or np.any(w <= 0):
            raise InvalidParameterError("weights must be a non-empty vector of positive values")
        if abs(w.sum() - 1.0) > 1e-12:
            raise InvalidParameterError(f"weights must sum to 1 (got {w.sum()!r})")
        if m.ndim != 2 or m.shape[0] != w.size or m.shape[1] == 0:
            raise InvalidParameterError("means must be a (n_components, d) array matching weights")
        if not self.var0 > 0:
            raise InvalidParameterError("var0 must be > 0")
        for arr in (w, m):
            arr.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "var0", float(self.var0))

    @property
    def d(self) -> int:
        return self.means.shape[1]

    @property
    def n_components(self) -> int:
        return self.weights.size

    def component(self, label: int) -> GaussianWorld:
        _check_label(label, self.n_components, allow_none=False)
        return GaussianWorld(self.means[label], self.var0)

    def sample(self, n: int, rng: np.random.Generator, label: Condition = None) -> np.ndarray:
        _check_label(label, self.n_components)
        if label is None:
            labels = rng.choice(self.n_components, size=n, p=self.weights)
        else:
            labels = np.full(n, label)
        return self.means[labels] + np.sqrt(self.var0) * rng.standard_normal((n, self.d))


def standard_world() -> GmmWorld:
    """Two equal-weight unit-variance modes at [-3, 0] (label 0) and [3, 0] (label 1)."""
    return GmmWorld([0.5, 0.5], [[-3.0, 0.0], [3.0, 0.0]], 1.0)


def _check_label(label: Condition, n_components: int, allow_none: bool = True) -> None:
    if label is None:
        if not allow_none:
            raise InvalidConditionError("a component label is required")
        return
    if isinstance(label, (bool, np.bool_)) or int(label) != label or not 0 <= label < n_components:
        raise InvalidConditionError(f"label {label!r} outside [0, {n_components})")


def _alpha(schedule: NoiseSchedule, t: int) -> float:
    t = schedule.check_timestep(t)
    if t == 0:
        raise InvalidTimestepError("noise prediction is undefined at t=0")
    return float(schedule.alpha_bar[t])


def _as_state(x, d: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 0 or x.shape[-1] != d:
        raise DimensionMismatchError(f"state has shape {x.shape}, expected trailing dimension {d}")
    return x


def gaussian_predict_eps(world: GaussianWorld, x, t: int, schedule: NoiseSchedule) -> np.ndarray:
    """Optimal noise prediction when ``x0 ~ N(mu, var0 I)``."""
    a = _alpha(schedule, t)
    x = _as_state(x, world.d)
    sa = np.sqrt(a)
    gain = sa * world.var0 / (a * world.var0 + 1.0 - a)
    x0_mean = world.mu + gain * (x - sa * world.mu)
    return (x - sa * x0_mean) / np.sqrt(1.0 - a)


def gmm_responsibilities(world: GmmWorld, x, t: int, schedule: NoiseSchedule) -> np.ndarray:
    """Posterior component probabilities given ``x`` at timestep ``t``, shape ``(..., K)``."""
    a = _alpha(schedule, t)
    x = _as_state(x, world.d)
    var_t = a * world.var0 + 1.0 - a
    diff = x[..., None, :] - np.sqrt(a) * world.means
    logits = np.log(world.weights) - 0.5 * np.sum(diff * diff, axis=-1) / var_t
    # softmax subtracts the row max, so tiny alpha_bar cannot underflow everything
    return softmax(logits, axis=-1)


def gmm_predict_eps(world: GmmWorld, x, t: int, cond: Condition, schedule: NoiseSchedule) -> np.ndarray:
    _check_label(cond, world.n_components)
    if cond is not None:
        return gaussian_predict_eps(world.component(cond), x, t, schedule)
    resp = gmm_responsibilities(world, x, t, schedule)
    x = np.asarray(x, dtype=np.float64)
    per_component = np.stack(
        [gaussian_predict_eps(world.component(k), x, t, schedule) for k in range(world.n_components)],
        axis=-2,
    )
    return np.sum(resp[..., :, None] * per_component, axis=-2)


class GaussianOracle:
    """Closed-form denoiser for a :class:`GaussianWorld` under a fixed schedule."""

    def __init__(self, world: GaussianWorld, schedule: NoiseSchedule):
        self.world = world
        self.schedule = schedule

    def predict_eps(self, x, t: int, cond: Condition = None) -> np.ndarray:
        _check_label(cond, 1)
        return gaussian_predict_eps(self.world, x, t, self.schedule)


class GmmOracle:
    """Closed-form denoiser for a :class:`GmmWorld`; ``cond`` selects a component."""

    def __init__(self, world: GmmWorld, schedule: NoiseSchedule):
        self.world = world
        self.schedule = schedule

    def predict_eps(self, x, t: int, cond: Condition = None) -> np.ndarray:
        return gmm_predict_eps(self.world, x, t, cond, self.schedule)


def make_oracle(world: GaussianWorld | GmmWorld, schedule: NoiseSchedule) -> DenoiserOracle:
    if isinstance(world, GmmWorld):
        return GmmOracle(world, schedule)
    return GaussianOracle(world, schedule)


@functools.lru_cache(maxsize=8)
def _normal_draws(n: int, d: int, seed: int) -> np.ndarray:
    # Full scrambled Sobol set of 2**m >= n points through the normal quantile;
    # truncating a Sobol set destroys its balance, so n is rounded up instead.
    m = max(int(np.ceil(np.log2(n))), 1)
    u = qmc.Sobol(d, scramble=True, seed=seed).random_base2(m)
    z = ndtri(u)
    z.setflags(write=False)
    return z


def mc_reference_eps(
    world: GaussianWorld | GmmWorld,
    x,
    t: int,
    cond: Condition,
    schedule: NoiseSchedule,
    n_samples: int = 10**6,
    seed: int = 0,
) -> np.ndarray:
    """Brute-force optimal noise prediction for a single state ``x`` (shape ``(d,)``).

    Draws clean samples from the (conditional) data distribution, weights each
    by the forward-process likelihood of ``x`` and averages the implied noise
    ``(x - sqrt(a) x0) / sqrt(1 - a)``. The mixture is sampled stratified: every
    component gets at least ``n_samples`` draws and its prior weight. No posterior
    formula is used, so this stays an independent check of the closed forms.
    """
    if n_samples < 10**4:
        raise InvalidParameterError("n_samples must be >= 1e4")
    a = _alpha(schedule, t)
    x = _as_state(x, world.d)
    if x.ndim != 1:
        raise DimensionMismatchError("mc_reference_eps takes a single state")
    if isinstance(world, GmmWorld):
        _check_label(cond, world.n_components)
        labels = range(world.n_components) if cond is None else [cond]
        parts = [(world.means[k], world.weights[k] if cond is None else 1.0) for k in labels]
    else:
        _check_label(cond, 1)
        parts = [(world.mu, 1.0)]

    log_w, resid = [], []
    for k, (mean, weight) in enumerate(parts):
        x0 = mean + np.sqrt(world.var0) * _normal_draws(int(n_samples), world.d, int(seed) + 7919 * k)
        r = x - np.sqrt(a) * x0
        log_w.append(np.log(weight) - np.log(len(x0)) - 0.5 * np.sum(r * r, axis=1) / (1.0 - a))
        resid.append(r)
    log_w = np.concatenate(log_w)
    w = np.exp(log_w - log_w.max())
    return (w @ np.concatenate(resid)) / (w.sum() * np.sqrt(1.0 - a))
