import sys

import numpy as np
import pytest

from linmotion.tensor import Rng, randn


@pytest.fixture
def rng():
    return Rng(1234)


def rand(seed, *shape):
    return randn(Rng(seed), shape)


def rel_err(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


@pytest.fixture(scope="session")
def trained(tmp_path_factory):
    """The default toy denoiser after 500 training steps: (cfg, result, checkpoint path, seconds)."""
    import time

    from linmotion.denoiser import DenoiserConfig, TrainSettings, save_checkpoint, train

    cfg = DenoiserConfig()
    start = time.perf_counter()
    result = train(cfg, Rng(1), TrainSettings(steps=500))
    seconds = time.perf_counter() - start
    path = save_checkpoint(tmp_path_factory.mktemp("ckpt") / "toy", cfg, result.params, result.opt)
    return cfg, result, path, seconds


def held_out_clips(cfg, count=4, pixel_size=None):
    """Moving-square latent clips from seeds the training stream never uses."""
    from linmotion import motion
    from linmotion.synth import make_clip

    size = pixel_size or 2 * cfg.height
    clips = []
    for i in range(count):
        r = Rng(10_000 + i)
        v = float(int(r.integers(0, 4)))
        clips.append(motion.encode_latent(make_clip("moving_square", v, r, cfg.frames, size)))
    return clips


def pytest_terminal_summary(terminalreporter):
    acc = sys.modules.get("test_acceptance")
    if acc is None or not acc.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in acc.RESULTS:
        terminalreporter.write_line(line)
