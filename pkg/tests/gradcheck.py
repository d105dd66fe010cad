"""Central finite-difference oracle for the denoiser's tape gradients."""

import numpy as np

from linmotion.denoiser import DenoiserConfig, init_params, loss_and_grads
from linmotion.denoiser.model import forward, residual_loss
from linmotion.denoiser.autodiff import Tape
from linmotion.tensor import Rng, randn

SMALL = DenoiserConfig(frames=4, channels=2, height=4, width=4, dim=8, blocks=2, emb_dim=8)


def loss_only(params, cfg, x_t, target, t, b):
    tape = Tape()
    return float(residual_loss(tape, forward(params, cfg, x_t, t, b), target).value)


def problem(cfg=SMALL, seed=0, t=0.37, b=7):
    r = Rng(seed)
    params = init_params(cfg, r.split(0), zero_out=False)
    x_t = randn(r.split(1), cfg.latent_shape)
    target = randn(r.split(2), (cfg.frames - 1,) + cfg.latent_shape[1:])
    return params, x_t, target, t, b


def relative_errors(cfg=SMALL, seed=0, h=1e-5, names=None, stride=1, t=0.37, b=7):
    """Per-tensor ||g_tape - g_fd|| / max(||g_tape||, ||g_fd||)."""
    params, x_t, target, t, b = problem(cfg, seed, t, b)
    _, grads = loss_and_grads(params, cfg, x_t, target, t, b)
    errors = {}
    for name in names or sorted(params):
        p = params[name]
        flat_idx = range(0, p.size, stride)
        fd = np.zeros(len(flat_idx))
        for j, idx in enumerate(flat_idx):
            orig = p.flat[idx]
            p.flat[idx] = orig + h
            up = loss_only(params, cfg, x_t, target, t, b)
            p.flat[idx] = orig - h
            down = loss_only(params, cfg, x_t, target, t, b)
            p.flat[idx] = orig
            fd[j] = (up - down) / (2 * h)
        g = grads[name].ravel()[list(flat_idx)]
        scale = max(np.linalg.norm(g), np.linalg.norm(fd), 1e-300)
        errors[name] = float(np.linalg.norm(g - fd) / scale)
    return errors
