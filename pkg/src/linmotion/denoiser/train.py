"""Adam training of the toy denoiser on motion-residual flow matching."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np

from .. import dynamics, motion
from ..errors import NumericalFailureError, ParameterError
from ..flowmatch import TimestepSchedule
from ..synth import synth_dataset
from ..tensor import Rng
from .model import DenoiserConfig, init_params, loss_and_grads

log = logging.getLogger(__name__)


@dataclass
class Adam:
    lr: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def update(self, params: dict, grads: dict) -> dict:
        self.step_count += 1
        if self.lr == 0.0:
            return params
        c1 = 1.0 - self.beta1**self.step_count
        c2 = 1.0 - self.beta2**self.step_count
        new = {}
        for name, p in params.items():
            g = grads[name]
            m = self.m[name] = self.beta1 * self.m.get(name, 0.0) + (1 - self.beta1) * g
            v = self.v[name] = self.beta2 * self.v.get(name, 0.0) + (1 - self.beta2) * g * g
            new[name] = p - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return new


@dataclass
class TrainResult:
    params: dict
    losses: list
    buckets: list
    opt: Adam | None = None


@dataclass(frozen=True)
class TrainSettings:
    steps: int = 500
    lr: float = 1e-2
    batch_size: int = 4
    cond_drop: float = 0.1
    pool: int = 2
    kind: str = "moving_square"
    velocities: tuple = (0.0, 1.0, 2.0, 3.0, 4.0)
    schedule: TimestepSchedule = TimestepSchedule()


def clip_stream(cfg: DenoiserConfig, settings: TrainSettings, rng: Rng, start: int = 0) -> Iterator[np.ndarray]:
    """Pixel clips whose pooled latents match ``cfg``."""
    size = cfg.height * settings.pool
    if cfg.height != cfg.width:
        raise ParameterError("synthetic clips are square")
    return synth_dataset(settings.kind, settings.velocities, rng, None, cfg.frames, size, cfg.channels, start)


def _prepare(clip, settings, rng_item, bucket_cache):
    key = clip.tobytes()
    if key not in bucket_cache:
        bucket_cache[key] = dynamics.score_to_bucket(dynamics.dynamics_score(clip))
    bucket = bucket_cache[key]
    z = motion.encode_latent(clip, settings.pool)
    drop = float(rng_item.split(0).uniform()) < settings.cond_drop
    item = motion.assemble_training_item(z, rng_item.split(1), settings.schedule, bucket=bucket)
    return item, (None if drop else item.b)


def train(cfg: DenoiserConfig, rng: Rng, settings: TrainSettings = TrainSettings(),
          dataset: Iterable[np.ndarray] | None = None, params: dict | None = None,
          opt: Adam | None = None) -> TrainResult:
    """Run Adam steps until ``settings.steps`` have been taken; each averages ``batch_size`` items.

    Randomness: params from rng.split(0), clips from rng.split(1), per-item
    noise from rng.split(2).split(step * batch_size + j). Passing the params
    and optimizer of an earlier run resumes it at ``opt.step_count`` with the
    same trajectory as an uninterrupted run.
    """
    if settings.steps < 1:
        raise ParameterError(f"steps must be >= 1, got {settings.steps}")
    params = init_params(cfg, rng.split(0)) if params is None else dict(params)
    opt = Adam(lr=settings.lr) if opt is None else opt
    first = opt.step_count
    start_clip = first * settings.batch_size
    clips = iter(dataset) if dataset is not None else clip_stream(cfg, settings, rng.split(1), start_clip)
    noise_rng = rng.split(2)
    losses, buckets, cache = [], [], {}
    for step in range(first, settings.steps):
        total = None
        step_loss = 0.0
        for j in range(settings.batch_size):
            item, cond = _prepare(next(clips), settings, noise_rng.split(step * settings.batch_size + j), cache)
            buckets.append(item.b)
            try:
                loss, grads = loss_and_grads(params, cfg, item.x_t, item.target_v, item.t, cond)
            except NumericalFailureError as e:
                raise NumericalFailureError(f"step {step}: {e}", index=step) from e
            step_loss += loss / settings.batch_size
            total = grads if total is None else {k: total[k] + grads[k] for k in total}
        if not np.isfinite(step_loss):
            raise NumericalFailureError(f"non-finite loss at step {step}", index=step)
        params = opt.update(params, {k: g / settings.batch_size for k, g in total.items()})
        losses.append(step_loss)
        if step % 100 == 0:
            log.debug("step %d loss %.5f", step, step_loss)
    return TrainResult(params, losses, buckets, opt)


def loss_ratio(losses, window: int = 50) -> float:
    """Trailing-window mean loss over leading-window mean loss."""
    losses = np.asarray(losses)
    return float(losses[-window:].mean() / losses[:window].mean())
