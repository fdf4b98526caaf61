"""Deterministic DDIM sampling, exact inversion and inversion-guided editing
on analytic Gaussian / Gaussian-mixture worlds."""

__version__ = "0.1.0"

from ddimedit.editor import EditConfig, edit, merge_noise
from ddimedit.inversion import InversionRecord, invert, load_record, reconstruct, reconstruction_mse, save_record
from ddimedit.oracle import GaussianWorld, GmmWorld, make_oracle, standard_world
from ddimedit.sampler import cfg_combine, ddim_inverse_step, ddim_step, predict_x0, sample
from ddimedit.schedule import NoiseSchedule, TimestepPlan, build_linear_schedule, forward_diffuse, plan_timesteps

__all__ = [
    "EditConfig",
    "GaussianWorld",
    "GmmWorld",
    "InversionRecord",
    "NoiseSchedule",
    "TimestepPlan",
    "build_linear_schedule",
    "cfg_combine",
    "ddim_inverse_step",
    "ddim_step",
    "edit",
    "forward_diffuse",
    "invert",
    "load_record",
    "make_oracle",
    "merge_noise",
    "plan_timesteps",
    "predict_x0",
    "reconstruct",
    "reconstruction_mse",
    "sample",
    "save_record",
    "standard_world",
]
