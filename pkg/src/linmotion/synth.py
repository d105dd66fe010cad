"""Procedural video clips with exact per-frame displacement, values in [0, 1].

Clips are (N, C, H, W) float64 arrays. Motion is horizontal with
wrap-around, so frame k is frame 0 rolled by ``velocity * k`` pixels.
"""

from __future__ import annotations

from typing import Iterator, Sequence

import numpy as np

from .errors import ParameterError
from .tensor import Rng

KINDS = ("moving_square", "sinusoid_translate")


def _shift(frame: np.ndarray, offset: float) -> np.ndarray:
    """Roll an (C, H, W) frame right by ``offset`` px; fractional offsets interpolate linearly."""
    lo = int(np.floor(offset))
    frac = offset - lo
    out = np.roll(frame, lo, axis=-1)
    if frac:
        out = (1.0 - frac) * out + frac * np.roll(frame, lo + 1, axis=-1)
    return out


def translate_clip(base: np.ndarray, velocity: float, frames: int) -> np.ndarray:
    if velocity < 0:
        raise ParameterError(f"velocity must be >= 0, got {velocity}")
    return np.stack([_shift(base, velocity * k) for k in range(frames)])


def square_frame(size: int = 32, square: int = 8, top: int = 0, left: int = 0, channels: int = 1,
                 background: float = 0.1, foreground: float = 0.9) -> np.ndarray:
    frame = np.full((channels, size, size), background)
    rows = (np.arange(square) + top) % size
    cols = (np.arange(square) + left) % size
    frame[:, rows[:, None], cols[None, :]] = foreground
    return frame


def sinusoid_frame(size: int = 64, channels: int = 1, phase: float = 0.0,
                   periods: Sequence[int] = (1, 2), vertical_period: int = 1) -> np.ndarray:
    """Sum of horizontal sinusoids with whole periods across the frame, times a vertical one."""
    x = np.arange(size) / size
    y = np.arange(size) / size
    row = sum(np.sin(2 * np.pi * (p * x + phase)) / (i + 1) for i, p in enumerate(periods))
    col = np.cos(2 * np.pi * vertical_period * y)
    img = row[None, :] * (0.6 + 0.4 * col[:, None])
    img = (img - img.min()) / (img.max() - img.min())
    return np.broadcast_to(img, (channels, size, size)).copy()


def moving_square(velocity: float, frames: int = 16, size: int = 32, square: int = 8,
                  top: int = 0, left: int = 0, channels: int = 1) -> np.ndarray:
    return translate_clip(square_frame(size, square, top, left, channels), velocity, frames)


def sinusoid_translate(velocity: float, frames: int = 16, size: int = 64, phase: float = 0.0,
                       channels: int = 1) -> np.ndarray:
    return translate_clip(sinusoid_frame(size, channels, phase), velocity, frames)


def make_clip(kind: str, velocity: float, rng: Rng | None = None, frames: int = 16,
              size: int | None = None, channels: int = 1) -> np.ndarray:
    """One clip of ``kind``; ``rng`` (if given) randomizes placement or phase."""
    if kind == "moving_square":
        size = size or 32
        top, left = (0, 0) if rng is None else (int(v) for v in rng.integers(0, size - 1, size=2))
        return moving_square(velocity, frames, size, max(2, size // 4), top, left, channels)
    if kind == "sinusoid_translate":
        size = size or 64
        phase = 0.0 if rng is None else float(rng.uniform())
        return sinusoid_translate(velocity, frames, size, phase, channels)
    raise ParameterError(f"unknown clip kind {kind!r}; expected one of {KINDS}")


def synth_dataset(kind: str, velocity, rng: Rng, count: int | None = None, frames: int = 16,
                  size: int | None = None, channels: int = 1, start: int = 0) -> Iterator[np.ndarray]:
    """Stream of clips; ``velocity`` is a number or a sequence drawn from uniformly per clip.

    ``count=None`` streams forever. Clip i depends only on the rng seed and i,
    so ``start`` skips ahead without generating the skipped clips.
    """
    choices = np.atleast_1d(np.asarray(velocity, dtype=np.float64))
    if np.any(choices < 0):
        raise ParameterError("velocities must be >= 0")
    produced = 0
    while count is None or produced < count:
        item_rng = rng.split(start + produced)
        v = float(choices[int(item_rng.integers(0, len(choices) - 1))])
        yield make_clip(kind, v, item_rng, frames, size, channels)
        produced += 1


def gradient_image(size: int = 64, angle: float = 0.3) -> np.ndarray:
    """Smooth (size, size) linear ramp in [0, 1], tilted by ``angle`` radians."""
    y, x = np.mgrid[0:size, 0:size] / max(size - 1, 1)
    ramp = np.cos(angle) * x + np.sin(angle) * y
    return (ramp - ramp.min()) / (ramp.max() - ramp.min())
