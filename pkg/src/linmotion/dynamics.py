"""Dynamics-degree estimation: SSIM, MS-SSIM, mean absolute difference,
the averaged consecutive-frame score and its 20-bucket projection."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ParameterError, ShapeError
from .tensor import Rng

MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
NUM_BUCKETS = 20


@dataclass(frozen=True)
class SsimParams:
    window: int = 11
    sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    data_range: float = 1.0

    def __post_init__(self):
        if self.window < 1 or self.window % 2 == 0:
            raise ParameterError(f"window must be odd and positive, got {self.window}")
        if self.k1 <= 0 or self.k2 <= 0 or self.sigma <= 0 or self.data_range <= 0:
            raise ParameterError("k1, k2, sigma and data_range must be positive")

    def kernel(self) -> np.ndarray:
        x = np.arange(self.window) - (self.window - 1) / 2
        g = np.exp(-(x**2) / (2 * self.sigma**2))
        return g / g.sum()


def _as_chw(frame) -> np.ndarray:
    frame = np.asarray(frame, dtype=np.float64)
    if frame.ndim == 2:
        return frame[None]
    if frame.ndim != 3:
        raise ShapeError(f"frame must be (H, W) or (C, H, W), got {frame.shape}")
    return frame


def _filter_valid(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Separable 'valid' Gaussian filtering over the last two axes."""
    x = sliding_window_view(x, len(g), axis=-1) @ g
    x = sliding_window_view(x, len(g), axis=-2) @ g
    return x


def _ssim_maps(a, b, p: SsimParams):
    g = p.kernel()
    c1 = (p.k1 * p.data_range) ** 2
    c2 = (p.k2 * p.data_range) ** 2
    mu_a = _filter_valid(a, g)
    mu_b = _filter_valid(b, g)
    var_a = _filter_valid(a * a, g) - mu_a * mu_a
    var_b = _filter_valid(b * b, g) - mu_b * mu_b
    cov = _filter_valid(a * b, g) - mu_a * mu_b
    cs = (2 * cov + c2) / (var_a + var_b + c2)
    lum = (2 * mu_a * mu_b + c1) / (mu_a * mu_a + mu_b * mu_b + c1)
    return lum * cs, cs


def _check_pair(a, b, p):
    a, b = _as_chw(a), _as_chw(b)
    if a.shape != b.shape:
        raise ShapeError(f"frame shapes differ: {a.shape} vs {b.shape}")
    if min(a.shape[-2:]) < p.window:
        raise ParameterError(f"frame {a.shape[-2:]} smaller than window {p.window}")
    return a, b


def ssim(a, b, p: SsimParams = SsimParams()) -> float:
    """Mean Gaussian-windowed SSIM, averaged over channels."""
    a, b = _check_pair(a, b, p)
    return float(_ssim_maps(a, b, p)[0].mean())


def max_scales(extent: int, window: int = 11) -> int:
    """Largest s with extent >= window * 2**(s-1); 0 if even one scale does not fit."""
    if extent < window:
        return 0
    return int(math.floor(math.log2(extent / window))) + 1


def _downsample(x):
    h, w = x.shape[-2] // 2 * 2, x.shape[-1] // 2 * 2
    x = x[..., :h, :w]
    return 0.25 * (x[..., 0::2, 0::2] + x[..., 1::2, 0::2] + x[..., 0::2, 1::2] + x[..., 1::2, 1::2])


def ms_ssim(a, b, p: SsimParams = SsimParams(), scales: int = 5) -> float:
    """Multi-scale SSIM; scales shrink to fit the frame, weights renormalized.

    Per-scale terms are clamped at 0 before the fractional powers.
    """
    a, b = _as_chw(a), _as_chw(b)
    if a.shape != b.shape:
        raise ShapeError(f"frame shapes differ: {a.shape} vs {b.shape}")
    fit = max_scales(min(a.shape[-2:]), p.window)
    if fit == 0:
        raise ParameterError(f"frame {a.shape[-2:]} smaller than window {p.window}")
    levels = min(scales, fit, len(MS_SSIM_WEIGHTS))
    weights = np.array(MS_SSIM_WEIGHTS[:levels])
    weights /= weights.sum()
    terms = []
    for level in range(levels):
        full, cs = _ssim_maps(a, b, p)
        if level == levels - 1:
            terms.append(full.mean())
        else:
            terms.append(cs.mean())
            a, b = _downsample(a), _downsample(b)
    terms = np.maximum(np.array(terms), 0.0)
    return float(np.prod(terms**weights))


def effective_scales(shape, p: SsimParams = SsimParams(), scales: int = 5) -> int:
    return min(scales, max_scales(min(shape[-2:]), p.window), len(MS_SSIM_WEIGHTS))


def mean_abs_diff(a, b) -> float:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"frame shapes differ: {a.shape} vs {b.shape}")
    return float(np.mean(np.abs(a - b)))


def _consecutive(video, metric):
    video = np.asarray(video)
    if video.ndim not in (3, 4) or video.shape[0] < 2:
        raise ParameterError(f"need a clip with at least 2 frames, got shape {video.shape}")
    return [metric(video[i], video[i - 1]) for i in range(1, video.shape[0])]


def dynamics_score(video, p: SsimParams = SsimParams(), scales: int = 5) -> float:
    """Mean MS-SSIM between consecutive frames of an (N, C, H, W) clip."""
    return float(np.mean(_consecutive(video, lambda x, y: ms_ssim(x, y, p, scales))))


def mean_frame_ssim(video, p: SsimParams = SsimParams()) -> float:
    return float(np.mean(_consecutive(video, lambda x, y: ssim(x, y, p))))


def mean_frame_mad(video) -> float:
    return float(np.mean(_consecutive(video, mean_abs_diff)))


def score_to_bucket(s: float) -> int:
    """b = min(19, floor(20 (1 - clamp(s, 0, 1)))); 0 is static, 19 the most dynamic."""
    if math.isnan(s):
        raise ParameterError("dynamics score is NaN")
    s = min(max(float(s), 0.0), 1.0)
    return min(NUM_BUCKETS - 1, int(math.floor(NUM_BUCKETS * (1.0 - s))))


def sample_clip_interval(rng: Rng, low: int = 3, high: int = 10) -> int:
    return int(rng.integers(low, high))


ESTIMATORS = {
    "mad": mean_frame_mad,
    "ssim": mean_frame_ssim,
    "ms_ssim": dynamics_score,
}


def _timed(fn, clip):
    start = time.perf_counter()
    value = fn(clip)
    return value, time.perf_counter() - start


def estimator_cost_comparison(videos: Sequence[np.ndarray], interval_clips: dict | None = None) -> dict:
    """Mean per-clip wall time for each estimator, plus interval-monotonicity flags.

    ``interval_clips`` maps frame interval -> clip of the same content; the flag
    says whether the estimator's motion reading is monotone in the interval
    (MAD non-decreasing, similarities non-increasing).
    """
    if not videos:
        raise ParameterError("need at least one clip")
    report = {"clips": len(videos), "mean_seconds": {}}
    for name, fn in ESTIMATORS.items():
        times = [_timed(fn, clip)[1] for clip in videos]
        report["mean_seconds"][name] = float(np.mean(times))
    secs = report["mean_seconds"]
    report["mad_cheaper_than_ms_ssim"] = secs["mad"] < secs["ms_ssim"]
    if interval_clips:
        intervals = sorted(interval_clips)
        report["intervals"] = intervals
        report["values"] = {}
        report["monotone"] = {}
        for name, fn in ESTIMATORS.items():
            vals = [fn(interval_clips[k]) for k in intervals]
            diffs = np.diff(vals)
            report["values"][name] = vals
            report["monotone"][name] = bool(np.all(diffs >= 0) if name == "mad" else np.all(diffs <= 0))
    return report
