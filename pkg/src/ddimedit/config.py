"""Flat ``key = value`` run configuration.

One entry per line, ``#`` starts a comment line, keys carry dotted section
prefixes (``schedule.T``, ``edit.lambda``). Values are numbers, bare words,
or bracketed lists such as ``[3, 0]`` and ``[[-3, 0], [3, 0]]``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from ddimedit.editor import EditConfig
from ddimedit.errors import ConfigError, DdimEditError
from ddimedit.experiments import (
    DEFAULT_GUIDANCES,
    DEFAULT_INVERSION_STEPS,
    DEFAULT_LAMBDAS,
    DEFAULT_N_INPUTS,
    DEFAULT_STEPS,
)
from ddimedit.oracle import GaussianWorld, GmmWorld, standard_world
from ddimedit.schedule import NoiseSchedule, build_linear_schedule, plan_timesteps

KNOWN_KEYS = {
    "seed",
    "jobs",
    "schedule.T",
    "schedule.beta_start",
    "schedule.beta_end",
    "schedule.eta",
    "world.kind",
    "world.mu",
    "world.weights",
    "world.means",
    "world.var0",
    "plan.n_steps",
    "plan.inference_steps",
    "inversion.guidance",
    "inversion.cond",
    "input.vector",
    "input.label",
    "reconstruct.mode",
    "edit.lambda",
    "edit.inject_every_k",
    "edit.stop_fraction",
    "edit.injection_source",
    "edit.injection_mode",
    "edit.guidance_scale",
    "edit.target",
    "sweep.steps",
    "sweep.inversion_steps",
    "sweep.inference_steps",
    "sweep.inference_steps_fixed",
    "sweep.lambdas",
    "sweep.guidances",
    "sweep.guidance",
    "sweep.n_inputs",
    "sweep.n_steps",
    "sweep.input_label",
    "sweep.edit_input_label",
}


def parse_value(text: str) -> Any:
    text = text.strip()
    if text == "" or text.lower() in ("none", "null"):
        return None
    if text.startswith("["):
        return json.loads(text)
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def parse_config_text(text: str) -> dict[str, Any]:
    values: dict[str, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        if key not in KNOWN_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}", key=key)
        try:
            values[key] = parse_value(value)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{key}: cannot parse {value.strip()!r} ({exc.msg})", key=key) from None
    return values


@dataclass
class RunConfig:
    """Validated configuration with every object the commands need built up front."""

    raw: dict[str, Any] = field(default_factory=dict)
    seed: int = 0
    jobs: int = 1
    schedule: NoiseSchedule | None = None
    world: GaussianWorld | GmmWorld | None = None

    def get(self, key: str, default=None):
        return self.raw.get(key, default)

    def _typed(self, key, default, kind):
        value = self.raw.get(key, default)
        if value is None:
            return None
        try:
            if kind is int:
                if isinstance(value, bool) or int(value) != value:
                    raise ValueError
                return int(value)
            if kind is float:
                if isinstance(value, bool):
                    raise ValueError
                return float(value)
            if kind is list:
                if not isinstance(value, list):
                    value = [value]
                return value
            return kind(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{key}: expected {kind.__name__}, got {value!r}", key=key) from None

    def get_int(self, key, default=None):
        return self._typed(key, default, int)

    def get_float(self, key, default=None):
        return self._typed(key, default, float)

    def get_list(self, key, default=None):
        return self._typed(key, list(default) if default is not None else None, list)

    # -- derived parameters ------------------------------------------------

    @property
    def n_steps(self) -> int:
        return self.get_int("plan.n_steps", 100)

    @property
    def inference_steps(self) -> int:
        return self.get_int("plan.inference_steps", self.n_steps)

    def plan(self, which: str = "plan.n_steps"):
        n = self.get_int(which, self.n_steps)
        return _checked(lambda: plan_timesteps(self.schedule.T, n), which)

    def edit_config(self) -> EditConfig:
        return _checked(
            lambda: EditConfig(
                lam=self.get_float("edit.lambda", 0.5),
                inject_every_k=self.get_int("edit.inject_every_k", 1),
                stop_fraction=self.get_float("edit.stop_fraction", 0.0),
                injection_source=str(self.get("edit.injection_source", "per_step_eps")),
                injection_mode=str(self.get("edit.injection_mode", "continual")),
                guidance_scale=self.get_float("edit.guidance_scale", 3.0),
                target=self.get_int("edit.target", None),
            ),
            "edit",
        )


def _checked(build, key):
    try:
        return build()
    except ConfigError:
        raise
    except (DdimEditError, ValueError, TypeError) as exc:
        raise ConfigError(f"{key}: {exc}", key=key) from None


def build_config(values: dict[str, Any], seed: int | None = None, jobs: int | None = None) -> RunConfig:
    cfg = RunConfig(raw=dict(values))
    cfg.seed = seed if seed is not None else cfg.get_int("seed", 0)
    cfg.jobs = jobs if jobs is not None else cfg.get_int("jobs", 1)
    if cfg.seed < 0:
        raise ConfigError("seed must be non-negative", key="seed")
    if cfg.jobs < 1:
        raise ConfigError("jobs must be >= 1", key="jobs")

    T = cfg.get_int("schedule.T", 1000)
    cfg.schedule = _checked(
        lambda: build_linear_schedule(
            T, cfg.get_float("schedule.beta_start", 1e-4), cfg.get_float("schedule.beta_end", 0.02), cfg.get_float("schedule.eta", 0.0)
        ),
        "schedule",
    )
    cfg.world = _build_world(cfg)

    for key in ("plan.n_steps", "plan.inference_steps", "sweep.n_steps", "sweep.inference_steps_fixed"):
        n = cfg.get_int(key, None)
        if n is not None and not 1 <= n <= T:
            raise ConfigError(f"{key} = {n} must lie in [1, schedule.T = {T}]", key=key)
    for key in ("sweep.steps", "sweep.inversion_steps", "sweep.inference_steps"):
        for n in cfg.get_list(key, []) or []:
            if isinstance(n, bool) or not isinstance(n, int) or not 1 <= n <= T:
                raise ConfigError(f"{key} entry {n!r} must be an integer in [1, schedule.T = {T}]", key=key)
    return cfg


def _build_world(cfg: RunConfig):
    kind = str(cfg.get("world.kind", "gmm"))
    if kind == "gaussian":
        mu = cfg.get("world.mu")
        if mu is None:
            raise ConfigError("world.mu is required for a gaussian world", key="world.mu")
        return _checked(lambda: GaussianWorld(np.asarray(mu, dtype=float), cfg.get_float("world.var0", 1.0)), "world")
    if kind != "gmm":
        raise ConfigError(f"world.kind must be 'gmm' or 'gaussian', got {kind!r}", key="world.kind")
    if cfg.get("world.means") is None and cfg.get("world.weights") is None:
        std = standard_world()
        return _checked(lambda: GmmWorld(std.weights, std.means, cfg.get_float("world.var0", 1.0)), "world")
    means = cfg.get("world.means")
    if means is None:
        raise ConfigError("world.means is required when world.weights is set", key="world.means")
    weights = cfg.get("world.weights")
    if weights is None:
        weights = [1.0 / len(means)] * len(means)
    return _checked(
        lambda: GmmWorld(np.asarray(weights, dtype=float), np.asarray(means, dtype=float), cfg.get_float("world.var0", 1.0)),
        "world",
    )


def load_config(path: str | Path | None, seed: int | None = None, jobs: int | None = None) -> RunConfig:
    if path is None:
        return build_config({}, seed, jobs)
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from None
    return build_config(parse_config_text(text), seed, jobs)


SWEEP_DEFAULTS = {
    "sweep.steps": DEFAULT_STEPS,
    "sweep.inversion_steps": DEFAULT_INVERSION_STEPS,
    "sweep.inference_steps": DEFAULT_STEPS,
    "sweep.lambdas": DEFAULT_LAMBDAS,
    "sweep.guidances": DEFAULT_GUIDANCES,
    "sweep.n_inputs": DEFAULT_N_INPUTS,
}
