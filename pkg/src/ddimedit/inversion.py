"""Encoding clean samples into per-timestep latents, and decoding them back."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ddimedit.errors import (
    DimensionMismatchError,
    InvalidParameterError,
    MissingOracleError,
    PlanMismatchError,
    StochasticScheduleError,
)
from ddimedit.oracle import Condition, DenoiserOracle
from ddimedit.sampler import ddim_inverse_step, ddim_step, guided_eps
from ddimedit.schedule import NoiseSchedule, TimestepPlan


@dataclass(frozen=True)
class InversionRecord:
    """Everything produced by :func:`invert`.

    ``latents[i]`` is the state at ``plan.steps[i]``, so ``latents[0]`` is the
    terminal (noisiest) latent and ``latents[-1]`` the input. ``recorded_eps[i]``
    is the noise prediction used for the transition between ``plan.steps[i+1]``
    and ``plan.steps[i]``. States may carry leading batch axes.
    """

    plan: TimestepPlan
    latents: np.ndarray
    recorded_eps: np.ndarray
    cond_used: Condition = None
    guidance_used: float = 1.0

    def __post_init__(self):
        latents = np.array(self.latents, dtype=np.float64)
        eps = np.array(self.recorded_eps, dtype=np.float64)
        n = len(self.plan.steps)
        if latents.shape[0] != n:
            raise InvalidParameterError(f"expected {n} latents, got {latents.shape[0]}")
        if eps.shape != (n - 1,) + latents.shape[1:]:
            raise InvalidParameterError(f"recorded_eps shape {eps.shape} inconsistent with latents {latents.shape}")
        for arr in (latents, eps):
            arr.setflags(write=False)
        object.__setattr__(self, "latents", latents)
        object.__setattr__(self, "recorded_eps", eps)

    @property
    def x0(self) -> np.ndarray:
        return self.latents[-1]

    @property
    def terminal(self) -> np.ndarray:
        return self.latents[0]

    @property
    def d(self) -> int:
        return self.latents.shape[-1]

    def eps_near(self, t: int) -> np.ndarray:
        """Recorded noise for the transition whose upper timestep is nearest ``t``.

        Ties resolve toward the larger timestep.
        """
        uppers = np.array(self.plan.steps[:-1])
        if uppers.size == 0:
            raise PlanMismatchError("record holds no noise predictions")
        # uppers is decreasing, so argmin's first hit on a tie is the larger timestep
        return self.recorded_eps[int(np.argmin(np.abs(uppers - t)))]


def invert(
    x0,
    plan: TimestepPlan,
    oracle: DenoiserOracle,
    schedule: NoiseSchedule,
    cond: Condition = None,
    s: float = 1.0,
) -> InversionRecord:
    """Walk ``plan`` upward from timestep 0, recording every latent and noise prediction.

    The noise for the step ``t_prev -> t`` is predicted at ``(x_{t_prev}, t)``.
    Inversion defaults to the unconditional prediction.
    """
    if not schedule.deterministic:
        raise StochasticScheduleError("inversion requires eta == 0")
    plan.validate(schedule)
    x = np.asarray(x0, dtype=np.float64)
    ascending = plan.steps[::-1]
    latents = [x]
    eps_list = []
    for t_prev, t in zip(ascending[:-1], ascending[1:]):
        eps = guided_eps(oracle, x, t, cond, s)
        x = ddim_inverse_step(x, eps, t_prev, t, schedule)
        latents.append(x)
        eps_list.append(eps)
    eps_arr = np.array(eps_list[::-1]) if eps_list else np.empty((0,) + x.shape)
    return InversionRecord(plan, np.array(latents[::-1]), eps_arr, cond, float(s))


def reconstruct(
    record: InversionRecord,
    schedule: NoiseSchedule,
    mode: str = "replay",
    oracle: DenoiserOracle | None = None,
    plan: TimestepPlan | None = None,
) -> np.ndarray:
    """Decode the record's terminal latent back to timestep 0.

    ``replay`` feeds the recorded noise back through each step (exact up to
    rounding). ``repredict`` queries ``oracle`` afresh at every step, using the
    record's condition and guidance; ``plan`` lets the decode use a different
    step count than the inversion, provided both start at the same timestep.
    """
    if mode == "replay":
        x = record.terminal
        for i, (t, t_prev) in enumerate(record.plan.transitions()):
            x = ddim_step(x, record.recorded_eps[i], t, t_prev, schedule)
        return np.array(x)
    if mode != "repredict":
        raise InvalidParameterError(f"unknown reconstruction mode {mode!r}")
    if oracle is None:
        raise MissingOracleError("repredict mode needs an oracle")
    plan = record.plan if plan is None else plan
    check_plan_alignment(record, plan)
    x = record.terminal
    for t, t_prev in plan.transitions():
        x = ddim_step(x, guided_eps(oracle, x, t, record.cond_used, record.guidance_used), t, t_prev, schedule)
    return np.array(x)


def check_plan_alignment(record: InversionRecord, plan: TimestepPlan) -> None:
    if plan.start != record.plan.start:
        raise PlanMismatchError(
            f"decode plan starts at {plan.start} but the record's terminal latent is at {record.plan.start}"
        )


def reconstruction_mse(x0, x0_hat) -> np.ndarray | float:
    """Mean squared coordinate error; reduces over the last axis only."""
    x0 = np.asarray(x0, dtype=np.float64)
    x0_hat = np.asarray(x0_hat, dtype=np.float64)
    if x0.shape != x0_hat.shape:
        raise DimensionMismatchError(f"shapes {x0.shape} and {x0_hat.shape} differ")
    mse = np.mean((x0 - x0_hat) ** 2, axis=-1)
    return float(mse) if mse.ndim == 0 else mse


# -- serialization -----------------------------------------------------------
#
# Binary layout (all little-endian):
#   8s   magic b"DDIMREC1"
#   u32  d            u32  n_plan (number of planned timesteps, >= 1)
#   i64  cond label (-1 when unconditional)
#   f64  guidance scale
#   i64  x n_plan     plan timesteps, decreasing
#   f64  x n_plan*d   latents, row-major, row i at plan[i]
#   f64  x (n_plan-1)*d  recorded noise, row-major
#
# Text layout: one ``key = value`` per line with keys d, plan, cond, guidance,
# then one ``latent = [...]`` line per latent followed by ``eps = [...]`` lines.

MAGIC = b"DDIMREC1"
_HEADER = struct.Struct("<8sIIqd")


def format_vector(v) -> str:
    return "[" + ", ".join(repr(float(x)) for x in np.asarray(v, dtype=np.float64).ravel()) + "]"


def parse_vector(text: str) -> np.ndarray:
    text = text.strip()
    if not (text.startswith("[") and text.endswith("]")):
        raise ValueError(f"vector must be bracketed: {text!r}")
    body = text[1:-1].strip()
    if not body:
        return np.empty(0)
    return np.array([float(tok) for tok in body.split(",")], dtype=np.float64)


def _require_single(record: InversionRecord) -> None:
    if record.latents.ndim != 2:
        raise DimensionMismatchError("only unbatched records can be serialized")


def record_to_bytes(record: InversionRecord) -> bytes:
    _require_single(record)
    n = len(record.plan.steps)
    cond = -1 if record.cond_used is None else int(record.cond_used)
    return b"".join(
        [
            _HEADER.pack(MAGIC, record.d, n, cond, float(record.guidance_used)),
            np.asarray(record.plan.steps, dtype="<i8").tobytes(),
            record.latents.astype("<f8").tobytes(),
            record.recorded_eps.astype("<f8").tobytes(),
        ]
    )


def record_from_bytes(data: bytes) -> InversionRecord:
    if len(data) < _HEADER.size:
        raise ValueError("truncated record header")
    magic, d, n, cond, s = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ValueError("not a binary inversion record")
    expected = _HEADER.size + 8 * (n + n * d + (n - 1) * d)
    if n < 1 or len(data) != expected:
        raise ValueError(f"record size {len(data)} does not match header (expected {expected})")
    off = _HEADER.size
    steps = np.frombuffer(data, "<i8", n, off)
    off += 8 * n
    latents = np.frombuffer(data, "<f8", n * d, off).reshape(n, d)
    off += 8 * n * d
    eps = np.frombuffer(data, "<f8", (n - 1) * d, off).reshape(n - 1, d)
    return InversionRecord(
        TimestepPlan(tuple(int(x) for x in steps)), latents, eps, None if cond < 0 else int(cond), s
    )


def record_to_text(record: InversionRecord) -> str:
    _require_single(record)
    lines = [
        f"d = {record.d}",
        "plan = [" + ", ".join(str(t) for t in record.plan.steps) + "]",
        f"cond = {'' if record.cond_used is None else record.cond_used}",
        f"guidance = {float(record.guidance_used)!r}",
    ]
    lines += [f"latent = {format_vector(v)}" for v in record.latents]
    lines += [f"eps = {format_vector(v)}" for v in record.recorded_eps]
    return "\n".join(lines) + "\n"


def record_from_text(text: str) -> InversionRecord:
    header: dict[str, str] = {}
    latents, eps = [], []
    for raw in text.splitlines():
        if not raw.strip() or raw.lstrip().startswith("#"):
            continue
        key, sep, value = raw.partition("=")
        if not sep:
            raise ValueError(f"malformed record line: {raw!r}")
        key = key.strip()
        if key == "latent":
            latents.append(parse_vector(value))
        elif key == "eps":
            eps.append(parse_vector(value))
        else:
            header[key] = value.strip()
    try:
        d = int(header["d"])
        steps = tuple(int(round(v)) for v in parse_vector(header["plan"]))
        cond = int(header["cond"]) if header.get("cond", "") != "" else None
        s = float(header.get("guidance", "1.0"))
    except KeyError as exc:
        raise ValueError(f"record missing header key {exc}") from None
    if any(v.size != d for v in latents + eps):
        raise ValueError("record row length does not match d")
    return InversionRecord(
        TimestepPlan(steps),
        np.array(latents, dtype=np.float64).reshape(-1, d),
        np.array(eps, dtype=np.float64).reshape(-1, d),
        cond,
        s,
    )


def save_record(record: InversionRecord, path: str | Path) -> None:
    """Write ``record``; a ``.txt`` suffix selects the text layout, anything else binary."""
    path = Path(path)
    if path.suffix == ".txt":
        path.write_text(record_to_text(record), encoding="utf-8")
    else:
        path.write_bytes(record_to_bytes(record))


def load_record(path: str | Path) -> InversionRecord:
    data = Path(path).read_bytes()
    if data.startswith(MAGIC):
        return record_from_bytes(data)
    return record_from_text(data.decode("utf-8"))
