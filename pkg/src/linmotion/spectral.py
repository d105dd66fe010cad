"""Orthonormal DCT-II/III, low-pass masks, DCT noise refinement and
DCT-vs-FFT low-frequency energy profiles."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ParameterError, ShapeError


@lru_cache(maxsize=64)
def dct_basis(length: int) -> np.ndarray:
    """Orthonormal DCT-II matrix B with B[k, n] = a_k cos(pi (2n+1) k / 2L)."""
    if length <= 0:
        raise ShapeError(f"transform length must be positive, got {length}")
    n = np.arange(length)
    k = n[:, None]
    basis = np.cos(np.pi * (2 * n[None, :] + 1) * k / (2 * length))
    basis *= math.sqrt(2.0 / length)
    basis[0] /= math.sqrt(2.0)
    basis.setflags(write=False)
    return basis


@dataclass(frozen=True)
class DctPlan:
    """Per-axis bases for a fixed shape and axis set; immutable and shareable."""

    shape: tuple[int, ...]
    axes: tuple[int, ...]

    @classmethod
    def for_array(cls, x: np.ndarray, axes) -> "DctPlan":
        return cls(tuple(x.shape), _normalize_axes(axes, x.ndim))

    def bases(self):
        return [dct_basis(self.shape[ax]) for ax in self.axes]

    def forward(self, x):
        return _apply(x, self.axes, self.bases(), inverse=False)

    def inverse(self, x):
        return _apply(x, self.axes, self.bases(), inverse=True)


def _normalize_axes(axes, ndim) -> tuple[int, ...]:
    out = []
    for ax in axes:
        if not -ndim <= ax < ndim:
            raise ShapeError(f"axis {ax} out of range for rank {ndim}")
        out.append(ax % ndim)
    if len(set(out)) != len(out):
        raise ShapeError(f"repeated axis in {tuple(axes)}")
    return tuple(out)


def _apply(x, axes, bases, inverse):
    y = np.asarray(x, dtype=np.float64)
    for ax, basis in zip(axes, bases):
        mat = basis.T if inverse else basis
        y = np.moveaxis(np.tensordot(mat, y, axes=([1], [ax])), 0, ax)
    return y


def dct(x, axes=None) -> np.ndarray:
    """Separable orthonormal DCT-II over ``axes`` (all axes by default)."""
    x = np.asarray(x)
    axes = range(x.ndim) if axes is None else axes
    return DctPlan.for_array(x, axes).forward(x)


def idct(x, axes=None) -> np.ndarray:
    """Inverse of :func:`dct` (orthonormal DCT-III)."""
    x = np.asarray(x)
    axes = range(x.ndim) if axes is None else axes
    return DctPlan.for_array(x, axes).inverse(x)


@dataclass(frozen=True)
class LowPassFilter:
    mode: str
    cutoff_t: float
    cutoff_s: float
    mask: np.ndarray  # (N, h, w), values in [0, 1]

    @property
    def kept_fraction(self) -> float:
        return float(self.mask.mean())


def make_lowpass(shape, mode: str = "ideal", cutoff_t: float = 0.25, cutoff_s: float = 0.25) -> LowPassFilter:
    """Low-pass mask over a (frames, height, width) spectrum.

    ideal: keep index < ceil(cutoff * extent) on every axis.
    gaussian: exp(-r^2 / 2) where r^2 sums (index / extent / cutoff)^2 over axes.
    """
    for name, c in (("cutoff_t", cutoff_t), ("cutoff_s", cutoff_s)):
        if not 0.0 < c <= 1.0:
            raise ParameterError(f"{name} must be in (0, 1], got {c}")
    shape = tuple(int(s) for s in shape)
    if len(shape) != 3 or min(shape) <= 0:
        raise ShapeError(f"expected a positive (N, h, w) shape, got {shape}")
    cutoffs = (cutoff_t, cutoff_s, cutoff_s)
    grids = np.meshgrid(*(np.arange(s) for s in shape), indexing="ij")
    if mode == "ideal":
        mask = np.ones(shape)
        for g, s, c in zip(grids, shape, cutoffs):
            mask *= g < math.ceil(c * s)
    elif mode == "gaussian":
        r2 = sum((g / s / c) ** 2 for g, s, c in zip(grids, shape, cutoffs))
        mask = np.exp(-r2 / 2.0)
    else:
        raise ParameterError(f"unknown filter mode {mode!r}")
    mask.setflags(write=False)
    return LowPassFilter(mode, cutoff_t, cutoff_s, mask)


SPECTRAL_AXES = (0, 2, 3)  # frame, height, width of an (N, c, h, w) tensor


def spectral_mix(low_src, high_src, filt: LowPassFilter) -> np.ndarray:
    """idct(dct(low_src) * H + dct(high_src) * (1 - H)), transforming (N, h, w) per channel."""
    low_src = np.asarray(low_src, dtype=np.float64)
    high_src = np.asarray(high_src, dtype=np.float64)
    if low_src.shape != high_src.shape or low_src.ndim != 4:
        raise ShapeError(f"need matching (N, c, h, w) inputs, got {low_src.shape} and {high_src.shape}")
    n, _, h, w = low_src.shape
    if filt.mask.shape != (n, h, w):
        raise ShapeError(f"filter shape {filt.mask.shape} does not match {(n, h, w)}")
    H = filt.mask[:, None]
    plan = DctPlan(low_src.shape, SPECTRAL_AXES)
    return plan.inverse(plan.forward(low_src) * H + plan.forward(high_src) * (1.0 - H))


def noised_anchor(z1, eps, t_init: float) -> np.ndarray:
    """Anchor latent broadcast over frames and moved to time t_init on the flow path."""
    return (1.0 - t_init) * np.asarray(z1)[None] + t_init * np.asarray(eps)


def dct_init(z1, eps, t_init: float, filt: LowPassFilter) -> np.ndarray:
    """Refine inference noise with the low-frequency spectrum of the noised anchor.

    z1: (c, h, w) anchor latent; eps: (N, c, h, w) noise. The anchor is
    broadcast over the N frames before the 3-D (frame, h, w) transform.
    """
    z1 = np.asarray(z1, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if eps.ndim != 4 or z1.shape != eps.shape[1:]:
        raise ShapeError(f"anchor {z1.shape} incompatible with noise {eps.shape}")
    if not 0.0 < t_init <= 1.0:
        raise ParameterError(f"t_init must be in (0, 1], got {t_init}")
    return spectral_mix(noised_anchor(z1, eps, t_init), eps, filt)


def dct_init_report(z1, eps, t_init: float, filt: LowPassFilter) -> dict:
    """Branch energies of the refinement; for ideal masks they sum to the output energy."""
    z_tau = noised_anchor(z1, eps, t_init)
    plan = DctPlan(z_tau.shape, SPECTRAL_AXES)
    H = filt.mask[:, None]
    image_branch = plan.forward(z_tau) * H
    noise_branch = plan.forward(eps) * (1.0 - H)
    total = image_branch + noise_branch
    return {
        "kept_fraction": filt.kept_fraction,
        "image_branch_energy": float(np.sum(image_branch**2)),
        "noise_branch_energy": float(np.sum(noise_branch**2)),
        "total_energy": float(np.sum(total**2)),
        "mode": filt.mode,
        "cutoff_t": filt.cutoff_t,
        "cutoff_s": filt.cutoff_s,
        "t_init": t_init,
    }


def _radius_grid(shape, transform):
    h, w = shape
    if transform == "dct":
        fy = np.arange(h) / (2.0 * h)
        fx = np.arange(w) / (2.0 * w)
    elif transform == "fft":
        fy = np.minimum(np.arange(h), h - np.arange(h)) / h
        fx = np.minimum(np.arange(w), w - np.arange(w)) / w
    else:
        raise ParameterError(f"unknown transform {transform!r}")
    # Both grids are in cycles/sample, so 0.5 * sqrt(2) is the corner frequency.
    return np.hypot(fy[:, None], fx[None, :]) / (0.5 * math.sqrt(2.0))


def power_spectrum(x, transform: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"expected a 2-D image, got {x.shape}")
    if transform == "dct":
        return dct(x) ** 2
    if transform == "fft":
        return np.abs(np.fft.fft2(x)) ** 2
    raise ParameterError(f"unknown transform {transform!r}")


def spectral_energy_profile(x, transform: str = "dct", radii=None):
    """Cumulative energy fraction inside each normalized frequency radius.

    Returns ``(radii, fraction)``; radius 1 is the Nyquist corner, so the
    curve reaches 1.0 there. An all-zero image yields an all-ones curve.
    """
    radii = np.linspace(0.0, 1.0, 101) if radii is None else np.asarray(radii, dtype=np.float64)
    power = power_spectrum(x, transform)
    r = _radius_grid(power.shape, transform)
    total = power.sum()
    if total == 0.0:
        return radii, np.ones_like(radii)
    order = np.argsort(r, axis=None, kind="stable")
    r_sorted = r.ravel()[order]
    cum = np.cumsum(power.ravel()[order]) / total
    idx = np.searchsorted(r_sorted, radii + 1e-12, side="right")
    frac = np.where(idx > 0, cum[np.maximum(idx - 1, 0)], 0.0)
    return radii, np.minimum(np.maximum.accumulate(frac), 1.0)
