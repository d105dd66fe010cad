"""Image animation and motion transfer with a trained denoiser."""

from __future__ import annotations

import numpy as np

from .. import motion
from ..errors import ShapeError
from ..flowmatch import DEFAULT_GUIDANCE, DEFAULT_STEPS, GuidanceConfig, default_t_init, euler_invert, euler_sample
from ..spectral import LowPassFilter, dct_init, make_lowpass
from ..tensor import Rng, randn
from .model import DenoiserConfig, predict


def residual_velocity(params, cfg: DenoiserConfig, anchor: np.ndarray):
    """Velocity field over residuals: X_t is rebuilt around the fixed anchor at every call."""

    def fn(m_t, cond, t):
        return predict(params, cfg, motion.assemble_input(anchor, m_t), t, cond)[1:]

    return fn


def _residual_shape(cfg):
    n, c, h, w = cfg.latent_shape
    return (n - 1, c, h, w)


def animate(params, cfg: DenoiserConfig, z1, b: int | None, rng: Rng, steps: int = DEFAULT_STEPS,
            guidance: float = DEFAULT_GUIDANCE, use_dct_init: bool = False, filt: LowPassFilter | None = None,
            t_init: float | None = None, eps=None) -> np.ndarray:
    """Generate an (N, c, h, w) latent clip whose frame 0 is ``z1`` itself."""
    z1 = np.asarray(z1, dtype=np.float64)
    if z1.shape != cfg.latent_shape[1:]:
        raise ShapeError(f"anchor {z1.shape} does not match config {cfg.latent_shape[1:]}")
    t_init = default_t_init(steps) if t_init is None else t_init
    eps = randn(rng, _residual_shape(cfg)) if eps is None else np.asarray(eps, dtype=np.float64)
    z_init = eps
    if use_dct_init:
        filt = filt or make_lowpass(eps.shape[:1] + eps.shape[2:])
        z_init = dct_init(z1, eps, t_init, filt)
    g = GuidanceConfig(guidance, cond=b)
    residuals = euler_sample(residual_velocity(params, cfg, z1), z_init, steps, g, t_init)
    return motion.decode_residuals(motion.MotionResidual(residuals, z1))


TRANSFER_REFINE = 3


def invert_clip(params, cfg: DenoiserConfig, clip, b: int | None, steps: int = 100, guidance: float = 1.0,
                t_init: float | None = None, refine: int = TRANSFER_REFINE) -> np.ndarray:
    """Noise that regenerates the clip's motion residuals under its own anchor."""
    m = motion.encode_residuals(clip)
    g = GuidanceConfig(guidance, cond=b)
    return euler_invert(residual_velocity(params, cfg, m.anchor), m.residuals, steps, g, t_init, refine)


def motion_transfer(params, cfg: DenoiserConfig, source_clip, edited_first_frame, b: int | None = None,
                    steps: int = 100, guidance: float = 1.0, t_init: float | None = None,
                    refine: int = TRANSFER_REFINE) -> np.ndarray:
    """Invert the source residuals to noise, then resample them around the edited anchor."""
    source_clip = np.asarray(source_clip, dtype=np.float64)
    edited = np.asarray(edited_first_frame, dtype=np.float64)
    if edited.shape != source_clip.shape[1:]:
        raise ShapeError(f"edited frame {edited.shape} does not match source frames {source_clip.shape[1:]}")
    noise = invert_clip(params, cfg, source_clip, b, steps, guidance, t_init, refine)
    g = GuidanceConfig(guidance, cond=b)
    residuals = euler_sample(residual_velocity(params, cfg, edited), noise, steps, g, t_init)
    return motion.decode_residuals(motion.MotionResidual(residuals, edited))


def frame_deviation(clip) -> float:
    """Mean absolute deviation of frames 1.. from frame 0."""
    clip = np.asarray(clip)
    return float(np.mean(np.abs(clip[1:] - clip[:1])))


def relative_error(a, b) -> float:
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b)) / np.linalg.norm(np.asarray(b)))
