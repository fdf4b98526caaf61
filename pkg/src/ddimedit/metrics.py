"""Desk-scale evaluation proxies.

``fidelity`` stands in for perceptual similarity to the original sample and
``alignment`` for text/prompt similarity of the edited sample. Both reduce
over the last axis, so batched inputs give one value per sample.
"""

from __future__ import annotations

import numpy as np

from ddimedit.editor import EditConfig, edit
from ddimedit.errors import InvalidConditionError
from ddimedit.inversion import InversionRecord, reconstruction_mse
from ddimedit.oracle import Condition, DenoiserOracle, GaussianWorld, GmmWorld
from ddimedit.schedule import NoiseSchedule, TimestepPlan

FIDELITY_DEFINITION = "fidelity = exp(-mean((x_edit - x0)^2)); proxy for perceptual similarity"
ALIGNMENT_DEFINITION = (
    "alignment = 1 + (log p_target(x) - log p_target(m_target)) / c with "
    "c = (log p_target(m_target) - log p_target(m_nearest_other)) / 2, i.e. "
    "1 - 2*|x - m_target|^2 / |m_nearest_other - m_target|^2 "
    "(single component: 1 - |x - m|^2 / var0); proxy for prompt similarity"
)


def fidelity(x_edit, x0):
    return np.exp(-np.asarray(reconstruction_mse(x_edit, x0)))


def alignment_scale(world: GaussianWorld | GmmWorld, target: int) -> float:
    """Squared distance that maps to one unit of alignment below the anchor."""
    if world.n_components == 1:
        return float(world.var0)
    means = world.means
    others = np.delete(means, target, axis=0)
    d2 = np.min(np.sum((others - means[target]) ** 2, axis=1))
    if d2 == 0.0:
        raise InvalidConditionError("target mean coincides with another component mean")
    return float(d2 / 2.0)


def alignment(x_edit, target: Condition, world: GaussianWorld | GmmWorld):
    """Normalized target-component log-density: 1 at the target mean, -1 at the nearest other mean."""
    if target is None:
        raise InvalidConditionError("alignment needs a target label")
    component = world.component(target)
    x = np.asarray(x_edit, dtype=np.float64)
    sq = np.sum((x - component.mu) ** 2, axis=-1)
    return 1.0 - sq / alignment_scale(world, target)


def tradeoff_point(
    record: InversionRecord,
    config: EditConfig,
    oracle: DenoiserOracle,
    schedule: NoiseSchedule,
    plan: TimestepPlan | None,
    world: GaussianWorld | GmmWorld,
):
    """Edit once and return ``(alignment, fidelity)`` of the result."""
    out = edit(record, config, oracle, schedule, plan)
    return alignment(out, config.target, world), fidelity(out, record.x0)
