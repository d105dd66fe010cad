"""Motion-residual data path for first-frame-conditioned video training.

Frames are 0-indexed here: frame 0 is the conditioning image, and residual
i (0-based) belongs to frame i + 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dynamics, flowmatch
from .errors import ParameterError, ShapeError
from .tensor import Rng, randn


@dataclass(frozen=True)
class MotionResidual:
    residuals: np.ndarray  # (N-1, c, h, w)
    anchor: np.ndarray  # (c, h, w)
    mode: str = "anchored"


@dataclass(frozen=True)
class TrainingBatchItem:
    x_t: np.ndarray  # (N, c, h, w); frame 0 is the clean anchor
    target_v: np.ndarray  # (N-1, c, h, w)
    t: float
    b: int
    eps: np.ndarray
    residuals: np.ndarray


def encode_latent(video, pool: int = 2) -> np.ndarray:
    """Deterministic latent stand-in: per-frame average pooling by ``pool`` on H and W."""
    video = np.asarray(video, dtype=np.float64)
    if video.ndim != 4:
        raise ShapeError(f"expected (N, C, H, W), got {video.shape}")
    n, c, h, w = video.shape
    if pool < 1 or h % pool or w % pool:
        raise ShapeError(f"spatial extents {(h, w)} not divisible by pool {pool}")
    if pool == 1:
        return video.copy()
    # Fixed accumulation order (row-major over the pool offsets) so results are reproducible bitwise.
    acc = np.zeros((n, c, h // pool, w // pool))
    for di in range(pool):
        for dj in range(pool):
            acc += video[:, :, di::pool, dj::pool]
    return acc / (pool * pool)


def _check_clip(z):
    z = np.asarray(z)
    if z.ndim != 4:
        raise ShapeError(f"expected (N, c, h, w), got {z.shape}")
    if z.shape[0] < 2:
        raise ParameterError(f"need at least 2 frames, got {z.shape[0]}")
    return z


def encode_residuals(z) -> MotionResidual:
    """M = {z_i - z_0 : i >= 1} with anchor z_0."""
    z = _check_clip(z)
    return MotionResidual(z[1:] - z[0], z[0].copy(), "anchored")


def encode_residuals_consecutive(z) -> MotionResidual:
    """Ablation variant: M = {z_i - z_(i-1) : i >= 1}."""
    z = _check_clip(z)
    return MotionResidual(np.diff(z, axis=0), z[0].copy(), "consecutive")


def decode_residuals(m: MotionResidual) -> np.ndarray:
    if m.mode == "anchored":
        frames = m.anchor[None] + m.residuals
    elif m.mode == "consecutive":
        frames = m.anchor[None] + np.cumsum(m.residuals, axis=0)
    else:
        raise ParameterError(f"unknown residual mode {m.mode!r}")
    return np.concatenate([m.anchor[None], frames], axis=0)


def assemble_input(anchor, m_t) -> np.ndarray:
    """X_t = [z_0, M_t + z_0] along the frame axis."""
    return np.concatenate([anchor[None], m_t + anchor[None]], axis=0)


def extract_predicted_residuals(model_out) -> np.ndarray:
    model_out = np.asarray(model_out)
    if model_out.ndim < 1 or model_out.shape[0] < 2:
        raise ShapeError(f"need at least 2 output frames, got shape {model_out.shape}")
    return model_out[1:]


def assemble_training_item(z, rng: Rng, sched: flowmatch.TimestepSchedule = flowmatch.TimestepSchedule(),
                           p: dynamics.SsimParams = dynamics.SsimParams(), pixel_clip=None,
                           bucket: int | None = None) -> TrainingBatchItem:
    """One training example: bucket from pixels, residuals, t, noise, noised input and target.

    The bucket comes from ``pixel_clip`` (before encoding) unless ``bucket`` is
    given. The rng is consumed as: timestep, then noise.
    """
    z = _check_clip(z)
    if bucket is None:
        if pixel_clip is None:
            raise ParameterError("need pixel_clip or an explicit bucket")
        bucket = dynamics.score_to_bucket(dynamics.dynamics_score(pixel_clip, p))
    m = encode_residuals(z)
    t = flowmatch.sample_timestep(rng, sched)
    eps = randn(rng, m.residuals.shape)
    m_t = flowmatch.interpolate(m.residuals, eps, t).z_t
    return TrainingBatchItem(
        x_t=assemble_input(m.anchor, m_t),
        target_v=flowmatch.velocity_target(m.residuals, eps),
        t=t,
        b=int(bucket),
        eps=eps,
        residuals=m.residuals,
    )
