"""Toy motion-residual denoiser: model, tape autodiff, training and sampling."""

from ..synth import synth_dataset
from .autodiff import Tape, Var
from .checkpoint import load_checkpoint, save_checkpoint
from .model import (
    DenoiserConfig,
    embed_condition,
    forward,
    init_params,
    loss_and_grads,
    param_count,
    predict,
)
from .sampling import TRANSFER_REFINE, animate, frame_deviation, invert_clip, motion_transfer, relative_error
from .train import Adam, TrainResult, TrainSettings, loss_ratio, train

__all__ = [
    "TRANSFER_REFINE",
    "Adam",
    "DenoiserConfig",
    "Tape",
    "TrainResult",
    "TrainSettings",
    "Var",
    "animate",
    "embed_condition",
    "forward",
    "frame_deviation",
    "init_params",
    "invert_clip",
    "load_checkpoint",
    "loss_and_grads",
    "loss_ratio",
    "motion_transfer",
    "param_count",
    "predict",
    "relative_error",
    "save_checkpoint",
    "synth_dataset",
    "train",
]
