"""Command-line entry point.

Exit codes: 0 success, 2 usage or configuration error, 3 numeric failure.
Outputs are staged in memory and only written once a command has succeeded.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from ddimedit.config import SWEEP_DEFAULTS, RunConfig, load_config
from ddimedit.editor import edit
from ddimedit.errors import ConfigError, DdimEditError, NumericDegeneracyError
from ddimedit.experiments import (
    sweep_inversion_steps,
    sweep_lambda_guidance,
    sweep_reconstruction,
    sweep_steps_grid,
    sweep_tradeoff,
)
from ddimedit.inversion import (
    format_vector,
    invert,
    load_record,
    parse_vector,
    reconstruct,
    reconstruction_mse,
    record_to_bytes,
    record_to_text,
)
from ddimedit.metrics import ALIGNMENT_DEFINITION, FIDELITY_DEFINITION, alignment, fidelity
from ddimedit.oracle import make_oracle

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3
SWEEPS = ("reconstruction", "inversion_steps", "grid", "heatmap", "tradeoff")


class UsageError(Exception):
    pass


def _write_atomic(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _require_out(args) -> Path:
    if not args.out:
        raise UsageError("--out is required")
    return Path(args.out)


def _finite(x: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise NumericDegeneracyError(f"{what} is not finite")
    return x


def _load_record(path):
    if not path:
        raise UsageError("--record is required")
    try:
        return load_record(path)
    except OSError as exc:
        raise ConfigError(f"cannot read record {path}: {exc.strerror or exc}") from None
    except (ValueError, DdimEditError) as exc:
        raise ConfigError(f"invalid record {path}: {exc}") from None


def _input_vector(cfg: RunConfig, source: str | None) -> np.ndarray:
    world = cfg.world
    if source is None and cfg.get("input.vector") is not None:
        x = np.asarray(cfg.get("input.vector"), dtype=np.float64)
    elif source is None or source == "sample":
        label = cfg.get_int("input.label", None)
        try:
            x = world.sample(1, np.random.default_rng(cfg.seed), label=label)[0]
        except DdimEditError as exc:
            raise ConfigError(f"input.label: {exc}", key="input.label") from None
    elif source.lstrip().startswith("["):
        try:
            x = parse_vector(source)
        except ValueError as exc:
            raise UsageError(f"--input: {exc}") from None
    else:
        x = np.asarray(_load_record(source).x0, dtype=np.float64)
    if x.shape != (world.d,):
        raise ConfigError(f"input has dimension {x.size}, world dimension is {world.d}", key="input.vector")
    return x


def cmd_invert(args, cfg: RunConfig) -> dict[Path, bytes]:
    out = _require_out(args)
    x0 = _input_vector(cfg, args.input)
    oracle = make_oracle(cfg.world, cfg.schedule)
    s = cfg.get_float("inversion.guidance", 1.0)
    record = invert(x0, cfg.plan(), oracle, cfg.schedule, cfg.get_int("inversion.cond", None), s)
    _finite(record.latents, "inverted latents")
    data = record_to_text(record).encode() if out.suffix == ".txt" else record_to_bytes(record)
    return {out: data}


def cmd_reconstruct(args, cfg: RunConfig) -> dict[Path, bytes]:
    out = _require_out(args)
    record = _load_record(args.record)
    mode = args.mode or cfg.get("reconstruct.mode", "replay")
    if mode not in ("replay", "repredict"):
        raise ConfigError(f"reconstruct.mode must be replay or repredict, got {mode!r}", key="reconstruct.mode")
    oracle = make_oracle(cfg.world, cfg.schedule) if mode == "repredict" else None
    plan = cfg.plan("plan.inference_steps") if mode == "repredict" and "plan.inference_steps" in cfg.raw else None
    x = _finite(reconstruct(record, cfg.schedule, mode, oracle, plan), "reconstruction")
    mse = reconstruction_mse(record.x0, x)
    return {
        out: (format_vector(x) + "\n").encode(),
        out.with_name(out.name + ".metrics"): f"mode = {mode}\nmse = {mse!r}\nseed = {cfg.seed}\n".encode(),
    }


def cmd_edit(args, cfg: RunConfig) -> dict[Path, bytes]:
    out = _require_out(args)
    record = _load_record(args.record)
    config = cfg.edit_config()
    if config.target is not None and not 0 <= config.target < cfg.world.n_components:
        raise ConfigError(f"edit.target {config.target} is not a component of the world", key="edit.target")
    if record.d != cfg.world.d:
        raise ConfigError(f"record dimension {record.d} does not match world dimension {cfg.world.d}")
    plan = cfg.plan("plan.inference_steps") if "plan.inference_steps" in cfg.raw else None
    oracle = make_oracle(cfg.world, cfg.schedule)
    x = _finite(edit(record, config, oracle, cfg.schedule, plan), "edit output")
    lines = [
        f"# {FIDELITY_DEFINITION}",
        f"# {ALIGNMENT_DEFINITION}",
        f"seed = {cfg.seed}",
        f"mse = {reconstruction_mse(x, record.x0)!r}",
        f"fidelity = {float(fidelity(x, record.x0))!r}",
    ]
    if config.target is not None:
        lines.append(f"alignment = {float(alignment(x, config.target, cfg.world))!r}")
    return {
        out: (format_vector(x) + "\n").encode(),
        out.with_name(out.name + ".metrics"): ("\n".join(lines) + "\n").encode(),
    }


def cmd_sweep(args, cfg: RunConfig) -> dict[Path, bytes]:
    name = args.sweep_name
    if name not in SWEEPS:
        raise UsageError(f"unknown sweep {name!r}; choose from {', '.join(SWEEPS)}")
    out_dir = _require_out(args)

    def lst(key):
        return cfg.get_list(key, SWEEP_DEFAULTS[key])

    n_inputs = cfg.get_int("sweep.n_inputs", SWEEP_DEFAULTS["sweep.n_inputs"])
    if n_inputs < 1:
        raise ConfigError("sweep.n_inputs must be >= 1", key="sweep.n_inputs")
    common = dict(world=cfg.world, n_inputs=n_inputs, seed=cfg.seed, schedule=cfg.schedule, jobs=cfg.jobs)
    input_label = cfg.get_int("sweep.input_label", None)
    if name == "reconstruction":
        table = sweep_reconstruction(lst("sweep.steps"), input_label=input_label, **common)
    elif name == "inversion_steps":
        fixed = cfg.get_int("sweep.inference_steps_fixed", 100)
        table = sweep_inversion_steps(fixed, lst("sweep.inversion_steps"), input_label=input_label, **common)
    elif name == "grid":
        table = sweep_steps_grid(
            lst("sweep.inversion_steps"), lst("sweep.inference_steps"), input_label=input_label, **common
        )
    else:
        base = cfg.edit_config()
        if base.target is None:
            base = dataclasses.replace(base, target=1)
        edit_label = cfg.get_int("sweep.edit_input_label", 0)
        n_steps = cfg.get_int("sweep.n_steps", cfg.n_steps)
        if name == "heatmap":
            table = sweep_lambda_guidance(
                lst("sweep.lambdas"), lst("sweep.guidances"), base, n_steps=n_steps, input_label=edit_label, **common
            )
        else:
            table = sweep_tradeoff(
                lst("sweep.lambdas"),
                cfg.get_float("sweep.guidance", 3.0),
                base,
                n_steps=n_steps,
                input_label=edit_label,
                **common,
            )
    return {out_dir / f"{name}.csv": table.to_csv().encode("utf-8")}


def cmd_selftest(args, cfg: RunConfig) -> int:
    from ddimedit.selftest import run_selftest

    return 0 if run_selftest() else 1


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="path to a key = value config file")
    common.add_argument("--out", help="output file (or directory for sweep)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--jobs", type=int, help="parallel sweep workers (default 1)")

    parser = argparse.ArgumentParser(prog="ddimedit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("invert", parents=[common], help="encode an input into an inversion record")
    p.add_argument("--input", help="'[v1, v2, ...]', 'sample', or a record path whose x0 is reused")
    p.set_defaults(func=cmd_invert)

    p = sub.add_parser("reconstruct", parents=[common], help="decode a record back to a clean sample")
    p.add_argument("--record", help="inversion record path")
    p.add_argument("--mode", choices=("replay", "repredict"))
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("edit", parents=[common], help="run the inversion-guided edit on a record")
    p.add_argument("--record", help="inversion record path")
    p.set_defaults(func=cmd_edit)

    p = sub.add_parser("sweep", parents=[common], help="run an ablation sweep and write CSV")
    p.add_argument("sweep_name", help=", ".join(SWEEPS))
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("selftest", parents=[common], help="run the built-in invariant checks")
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        cfg = load_config(args.config, args.seed, args.jobs)
        result = args.func(args, cfg)
        if isinstance(result, int):
            return result
        for path, data in result.items():
            _write_atomic(path, data)
    except (ArithmeticError, FloatingPointError) as exc:
        print(f"ddimedit: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ConfigError as exc:
        print(f"ddimedit: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (UsageError, DdimEditError, ValueError) as exc:
        print(f"ddimedit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"ddimedit: I/O error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
