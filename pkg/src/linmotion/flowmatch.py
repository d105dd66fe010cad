"""Flow matching on the straight path z_t = t * noise + (1 - t) * data.

t = 0 is data and t = 1 is noise; the regression target is the constant
velocity noise - data. Sampling integrates dz/dt = v backwards with Euler
steps; inversion integrates the same ODE forwards.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import NumericalFailureError, ParameterError, ShapeError
from .tensor import Rng, randn

DEFAULT_STEPS = 25
DEFAULT_GUIDANCE = 5.5
T_EPS = 1e-5

# model(z_t, cond, t) -> velocity; cond=None requests the unconditional branch.
VelocityFn = Callable[[np.ndarray, object, float], np.ndarray]


@dataclass(frozen=True)
class FlowState:
    z_t: np.ndarray
    t: float


@dataclass(frozen=True)
class TimestepSchedule:
    mode: str = "logit_normal"
    loc: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if self.mode not in ("uniform", "logit_normal"):
            raise ParameterError(f"unknown schedule {self.mode!r}")


@dataclass(frozen=True)
class GuidanceConfig:
    scale: float = DEFAULT_GUIDANCE
    cond: object = None

    def __post_init__(self):
        if not self.scale >= 1.0:
            raise ParameterError(f"guidance scale must be >= 1, got {self.scale}")


def default_t_init(steps: int) -> float:
    """Sampler entry time 1 - 1/steps (1.0 for a single step)."""
    return 1.0 - 1.0 / steps if steps > 1 else 1.0


def _resolve_t_init(t_init, steps):
    if steps < 1:
        raise ParameterError(f"steps must be >= 1, got {steps}")
    return default_t_init(steps) if t_init is None else float(t_init)


def _same_shape(a, b):
    if np.shape(a) != np.shape(b):
        raise ShapeError(f"shape mismatch: {np.shape(a)} vs {np.shape(b)}")


def interpolate(z0, z1, t: float) -> FlowState:
    _same_shape(z0, z1)
    if not 0.0 <= t <= 1.0:
        raise ParameterError(f"t must be in [0, 1], got {t}")
    if t == 0.0:
        return FlowState(np.array(z0, dtype=np.float64), 0.0)
    if t == 1.0:
        return FlowState(np.array(z1, dtype=np.float64), 1.0)
    return FlowState(t * np.asarray(z1) + (1.0 - t) * np.asarray(z0), float(t))


def velocity_target(z0, z1) -> np.ndarray:
    _same_shape(z0, z1)
    return np.asarray(z1) - np.asarray(z0)


def fm_loss(pred_v, z0, z1) -> float:
    """Mean squared error between predicted and target velocity."""
    target = velocity_target(z0, z1)
    _same_shape(pred_v, target)
    return float(np.mean((target - pred_v) ** 2))


def sample_timestep(rng: Rng, sched: TimestepSchedule = TimestepSchedule()) -> float:
    if sched.mode == "uniform":
        u = float(rng.uniform())
        t = T_EPS + (1.0 - 2 * T_EPS) * u
    else:
        x = sched.loc + sched.scale * float(randn(rng, (1,))[0])
        t = 1.0 / (1.0 + math.exp(-x))
    return min(max(t, T_EPS), 1.0 - T_EPS)


def guided_velocity(model: VelocityFn, z, t: float, g: GuidanceConfig) -> np.ndarray:
    """v_uncond + scale * (v_cond - v_uncond); scale 1 evaluates the conditional branch only."""
    v_cond = model(z, g.cond, t)
    if g.scale == 1.0:
        return v_cond
    v_uncond = model(z, None, t)
    return v_uncond + g.scale * (v_cond - v_uncond)


def _grid(t_init: float, steps: int) -> np.ndarray:
    if steps < 1:
        raise ParameterError(f"steps must be >= 1, got {steps}")
    if not 0.0 < t_init <= 1.0:
        raise ParameterError(f"t_init must be in (0, 1], got {t_init}")
    return np.linspace(0.0, t_init, steps + 1)


def _checked(v, step):
    if not np.all(np.isfinite(v)):
        raise NumericalFailureError(f"non-finite velocity at step {step}", index=step)
    return v


def euler_sample(model: VelocityFn, z_init, steps: int = DEFAULT_STEPS, g: GuidanceConfig = GuidanceConfig(),
                 t_init: float | None = None) -> np.ndarray:
    """Integrate from t_init down to 0; returns the data-end estimate."""
    t_init = _resolve_t_init(t_init, steps)
    ts = _grid(t_init, steps)
    z = np.array(z_init, dtype=np.float64)
    for i in range(steps, 0, -1):
        v = _checked(guided_velocity(model, z, float(ts[i]), g), steps - i)
        z = z - (ts[i] - ts[i - 1]) * v
    return z


def euler_invert(model: VelocityFn, z_data, steps: int = DEFAULT_STEPS, g: GuidanceConfig = GuidanceConfig(),
                 t_init: float | None = None, refine: int = 0) -> np.ndarray:
    """Integrate from 0 up to t_init; euler_sample of the result approximately returns z_data.

    ``refine > 0`` runs that many fixed-point iterations per step on
    z_next = z + dt * v(z_next, t_next), the exact inverse of the sampler's
    step, so the round trip error falls from O(dt) toward solver precision.
    """
    t_init = _resolve_t_init(t_init, steps)
    if refine < 0:
        raise ParameterError(f"refine must be >= 0, got {refine}")
    ts = _grid(t_init, steps)
    z = np.array(z_data, dtype=np.float64)
    for i in range(steps):
        dt = ts[i + 1] - ts[i]
        z_next = z + dt * _checked(guided_velocity(model, z, float(ts[i]), g), i)
        for _ in range(refine):
            z_next = z + dt * _checked(guided_velocity(model, z_next, float(ts[i + 1]), g), i)
        z = z_next
    return z
