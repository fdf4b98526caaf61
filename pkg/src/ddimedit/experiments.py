"""Deterministic ablation sweeps emitting CSV tables.

Each sweep draws its inputs once from ``np.random.default_rng(seed)``, so a
table is a pure function of its arguments. Cells may run on a thread pool;
rows are always emitted in sweep-index order. A cell that raises an engine
error becomes a row with NaN metrics and the reason in the ``error`` column.
"""

from __future__ import annotations

import dataclasses
import io
import math
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ddimedit import __version__
from ddimedit.editor import EditConfig, edit
from ddimedit.errors import DdimEditError
from ddimedit.inversion import invert, reconstruct, reconstruction_mse
from ddimedit.metrics import ALIGNMENT_DEFINITION, FIDELITY_DEFINITION, alignment, fidelity
from ddimedit.oracle import GaussianWorld, GmmWorld, make_oracle
from ddimedit.schedule import NoiseSchedule, plan_timesteps

DEFAULT_STEPS = (5, 10, 25, 50, 100)
DEFAULT_INVERSION_STEPS = (5, 10, 25, 50, 100, 250)
DEFAULT_LAMBDAS = tuple(round(0.1 * i, 10) for i in range(11))
DEFAULT_GUIDANCES = (0.0, 1.0, 2.0, 3.0, 5.0, 7.5)
DEFAULT_N_INPUTS = 30


@dataclass
class SweepTable:
    name: str
    columns: list[str]
    rows: list[list] = field(default_factory=list)
    metadata: dict[str, str] = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        i = self.columns.index(name)
        return np.array([row[i] for row in self.rows], dtype=np.float64)

    def to_csv(self) -> str:
        buf = io.StringIO()
        for key, value in self.metadata.items():
            buf.write(f"# {key}: {value}\n")
        buf.write(",".join(self.columns + ["error"]) + "\n")
        for row in self.rows:
            *values, err = row
            buf.write(",".join([_fmt(v) for v in values] + [_quote(err)]) + "\n")
        return buf.getvalue()


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    v = float(v)
    return "nan" if math.isnan(v) else repr(v)


def _quote(text: str) -> str:
    if not text:
        return ""
    return '"' + text.replace('"', '""').replace("\n", " ") + '"'


def describe_world(world: GaussianWorld | GmmWorld) -> str:
    if isinstance(world, GmmWorld):
        means = "; ".join("[" + ", ".join(repr(float(c)) for c in m) + "]" for m in world.means)
        weights = ", ".join(repr(float(w)) for w in world.weights)
        return f"gmm weights=[{weights}] means=[{means}] var0={world.var0!r}"
    mu = ", ".join(repr(float(c)) for c in world.mu)
    return f"gaussian mu=[{mu}] var0={world.var0!r}"


def _metadata(name, world, schedule, seed, n_inputs, input_label, **extra) -> dict[str, str]:
    meta = {
        "sweep": name,
        "engine": f"ddimedit {__version__}",
        "world": describe_world(world),
        "schedule": f"T={schedule.T} eta={schedule.eta!r} alpha_bar[T]={float(schedule.alpha_bar[-1])!r}",
        "seed": str(seed),
        "n_inputs": str(n_inputs),
        "input_label": "mixture" if input_label is None else str(input_label),
        "fidelity": FIDELITY_DEFINITION,
        "alignment": ALIGNMENT_DEFINITION,
    }
    meta.update({k: str(v) for k, v in extra.items()})
    return meta


def draw_inputs(world, n_inputs: int, seed: int, label=None) -> np.ndarray:
    return world.sample(n_inputs, np.random.default_rng(seed), label=label)


def _run_cells(cells: Sequence, fn: Callable, n_values: int, jobs: int) -> list[list]:
    def safe(cell):
        try:
            return list(fn(cell)) + [""]
        except (DdimEditError, ArithmeticError) as exc:
            return [math.nan] * n_values + [f"{type(exc).__name__}: {exc}"]

    if jobs <= 1:
        results = [safe(c) for c in cells]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(safe, cells))
    return [list(cell) + res for cell, res in zip(cells, results)]


def sweep_reconstruction(
    steps_list: Sequence[int],
    world,
    n_inputs: int,
    seed: int,
    schedule: NoiseSchedule,
    input_label=None,
    jobs: int = 1,
) -> SweepTable:
    """Repredict-mode reconstruction MSE for matched inversion/decode step counts."""
    if not steps_list:
        raise ValueError("steps_list must be non-empty")
    oracle = make_oracle(world, schedule)
    x0 = draw_inputs(world, n_inputs, seed, input_label)

    def cell(c):
        (n,) = c
        plan = plan_timesteps(schedule.T, n)
        rec = reconstruct(invert(x0, plan, oracle, schedule), schedule, "repredict", oracle)
        mse = reconstruction_mse(x0, rec)
        return float(np.mean(mse)), float(np.std(mse))

    rows = _run_cells([(int(n),) for n in sorted(steps_list)], cell, 2, jobs)
    meta = _metadata("reconstruction", world, schedule, seed, n_inputs, input_label, mode="repredict")
    return SweepTable("reconstruction", ["n_steps", "mean_mse", "std_mse"], rows, meta)


def sweep_steps_grid(
    inversion_steps_list: Sequence[int],
    inference_steps_list: Sequence[int],
    world,
    n_inputs: int,
    seed: int,
    schedule: NoiseSchedule,
    input_label=None,
    jobs: int = 1,
    name: str = "grid",
) -> SweepTable:
    """Reconstruction error over every (inversion steps, inference steps) pair."""
    oracle = make_oracle(world, schedule)
    x0 = draw_inputs(world, n_inputs, seed, input_label)
    records = {}

    for n_inv in dict.fromkeys(int(n) for n in inversion_steps_list):
        try:
            records[n_inv] = invert(x0, plan_timesteps(schedule.T, n_inv), oracle, schedule)
        except DdimEditError as exc:
            records[n_inv] = exc

    def cell(c):
        n_inv, n_inf = c
        record = records[n_inv]
        if isinstance(record, Exception):
            raise record
        rec = reconstruct(record, schedule, "repredict", oracle, plan_timesteps(schedule.T, n_inf))
        return float(np.mean(reconstruction_mse(x0, rec))), float(np.mean(fidelity(rec, x0)))

    cells = [(int(a), int(b)) for a in inversion_steps_list for b in inference_steps_list]
    rows = _run_cells(cells, cell, 2, jobs)
    meta = _metadata(name, world, schedule, seed, n_inputs, input_label, mode="repredict")
    return SweepTable(name, ["inversion_steps", "inference_steps", "mean_mse", "mean_fidelity"], rows, meta)


def sweep_inversion_steps(
    inference_steps_fixed: int,
    inversion_steps_list: Sequence[int],
    world,
    n_inputs: int,
    seed: int,
    schedule: NoiseSchedule,
    input_label=None,
    jobs: int = 1,
) -> SweepTable:
    return sweep_steps_grid(
        inversion_steps_list,
        [inference_steps_fixed],
        world,
        n_inputs,
        seed,
        schedule,
        input_label,
        jobs,
        name="inversion_steps",
    )


def sweep_lambda_guidance(
    lambda_list: Sequence[float],
    guidance_list: Sequence[float],
    edit_base_config: EditConfig,
    world,
    n_inputs: int,
    seed: int,
    schedule: NoiseSchedule,
    n_steps: int = 100,
    input_label=0,
    jobs: int = 1,
    name: str = "heatmap",
) -> SweepTable:
    """Edit metrics over the lambda x guidance grid from one shared inversion record.

    Rows run lambda-major: all guidance values for the first lambda, then the next.
    """
    oracle = make_oracle(world, schedule)
    x0 = draw_inputs(world, n_inputs, seed, input_label)
    plan = plan_timesteps(schedule.T, n_steps)
    record = invert(x0, plan, oracle, schedule)

    def cell(c):
        lam, s = c
        config = dataclasses.replace(edit_base_config, lam=lam, guidance_scale=s)
        out = edit(record, config, oracle, schedule, plan)
        return (
            float(np.mean(alignment(out, config.target, world))),
            float(np.mean(fidelity(out, x0))),
            float(np.mean(reconstruction_mse(out, x0))),
        )

    cells = [(float(lam), float(s)) for lam in lambda_list for s in guidance_list]
    rows = _run_cells(cells, cell, 3, jobs)
    base = dataclasses.asdict(edit_base_config)
    base.pop("lam")
    base.pop("guidance_scale")
    meta = _metadata(
        name,
        world,
        schedule,
        seed,
        n_inputs,
        input_label,
        n_steps=n_steps,
        edit=" ".join(f"{k}={v}" for k, v in base.items()),
    )
    return SweepTable(name, ["lambda", "guidance", "mean_alignment", "mean_fidelity", "mean_mse"], rows, meta)


def sweep_tradeoff(
    lambda_list: Sequence[float],
    guidance: float,
    edit_base_config: EditConfig,
    world,
    n_inputs: int,
    seed: int,
    schedule: NoiseSchedule,
    n_steps: int = 100,
    input_label=0,
    jobs: int = 1,
) -> SweepTable:
    """The lambda-only slice of :func:`sweep_lambda_guidance` at fixed guidance."""
    return sweep_lambda_guidance(
        lambda_list,
        [guidance],
        edit_base_config,
        world,
        n_inputs,
        seed,
        schedule,
        n_steps,
        input_label,
        jobs,
        name="tradeoff",
    )


def argmax_cells(table: SweepTable, value: str, keys: Sequence[str]) -> list[tuple]:
    """All key tuples attaining the column maximum (ties kept)."""
    v = table.column(value)
    best = np.nanmax(v)
    cols = [table.column(k) for k in keys]
    return [tuple(float(c[i]) for c in cols) for i in np.flatnonzero(v == best)]
