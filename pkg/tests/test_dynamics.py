import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from skimage.metrics import structural_similarity

from linmotion import dynamics as D
from linmotion.dynamics import SsimParams, _ssim_maps
from linmotion.errors import ParameterError
from linmotion.synth import moving_square, sinusoid_frame, sinusoid_translate, translate_clip
from linmotion.tensor import Rng


def frame(seed, size=32):
    return Rng(seed).uniform((size, size))


def checkerboard(size=32):
    return (np.indices((size, size)).sum(0) % 2).astype(float)


def test_ssim_identity():
    x = frame(1)
    assert abs(D.ssim(x, x) - 1.0) < 1e-12


def test_ssim_matches_skimage():
    a, b = frame(2), np.clip(frame(2) + 0.1 * frame(3), 0, 1)
    ref = structural_similarity(a, b, gaussian_weights=True, sigma=1.5, use_sample_covariance=False, data_range=1.0)
    assert abs(D.ssim(a, b) - ref) < 1e-12


def test_ssim_checkerboard_inverse_pinned():
    cb = checkerboard()
    s = D.ssim(cb, 1 - cb)
    assert s < 0.1
    assert s == pytest.approx(-0.996406468356957, abs=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32))
def test_metrics_symmetric(seed):
    r = Rng(seed)
    a, b = r.uniform((24, 24)), r.uniform((24, 24))
    assert abs(D.ssim(a, b) - D.ssim(b, a)) < 1e-12
    assert abs(D.ms_ssim(a, b) - D.ms_ssim(b, a)) < 1e-12
    assert D.mean_abs_diff(a, b) == D.mean_abs_diff(b, a)


def test_ssim_too_small():
    with pytest.raises(ParameterError):
        D.ssim(np.ones((8, 8)), np.ones((8, 8)))
    with pytest.raises(ParameterError):
        D.ms_ssim(np.ones((8, 8)), np.ones((8, 8)))


def test_ms_ssim_identity():
    x = frame(4, 64)
    assert abs(D.ms_ssim(x, x) - 1.0) < 1e-10


def test_ms_ssim_scale_clamp_64():
    assert D.max_scales(64) == 3
    assert D.effective_scales((64, 64)) == 3
    assert D.effective_scales((176, 176)) == 5


def test_ms_ssim_shift_ordering():
    base = sinusoid_frame(64)
    one = translate_clip(base, 1, 2)
    four = translate_clip(base, 4, 2)
    assert D.ms_ssim(one[0], one[1]) > D.ms_ssim(four[0], four[1])


def test_ms_ssim_single_scale_is_ssim():
    a, b = frame(5, 16), frame(6, 16)
    assert abs(D.ms_ssim(a, b) - max(D.ssim(a, b), 0.0)) < 1e-12


def test_mad_examples():
    x = frame(7)
    assert D.mean_abs_diff(x, x) == 0.0
    assert D.mean_abs_diff(np.zeros((4, 4)), np.ones((4, 4))) == 1.0


def test_range_scaling_invariance():
    # scaling frames and data range together leaves every SSIM term unchanged
    a, b = frame(8), frame(9)
    p = SsimParams(data_range=3.0)
    assert abs(D.ssim(3 * a, 3 * b, p) - D.ssim(a, b)) < 1e-12
    assert abs(D.ms_ssim(3 * a, 3 * b, p) - D.ms_ssim(a, b)) < 1e-12


def test_constant_shift_contrast_structure_invariant():
    # only the luminance term sees the mean; contrast-structure and MAD ignore a shared offset
    a, b = frame(10), frame(11)
    p = SsimParams()
    cs0 = _ssim_maps(a[None], b[None], p)[1]
    cs1 = _ssim_maps(a[None] + 0.5, b[None] + 0.5, p)[1]
    assert np.max(np.abs(cs1 - cs0)) < 1e-6
    assert abs(D.mean_abs_diff(a + 0.5, b + 0.5) - D.mean_abs_diff(a, b)) < 1e-12


# clip scores


def test_static_clip_score_one():
    clip = moving_square(0, frames=6)
    assert D.dynamics_score(clip) == 1.0
    assert D.score_to_bucket(D.dynamics_score(clip)) == 0


def test_two_frame_score_is_single_term():
    clip = sinusoid_translate(2, frames=2)
    assert D.dynamics_score(clip) == D.ms_ssim(clip[1], clip[0])


def test_score_needs_two_frames():
    with pytest.raises(ParameterError):
        D.dynamics_score(moving_square(1, frames=1))


def test_square_speed_ordering():
    scores = [D.dynamics_score(moving_square(v, frames=8)) for v in (0, 1, 2, 4)]
    assert all(a > b for a, b in zip(scores, scores[1:]))


def test_sinusoid_speed_ordering():
    scores = [D.dynamics_score(sinusoid_translate(v, frames=6)) for v in (0, 1, 2, 4)]
    assert all(a > b for a, b in zip(scores, scores[1:]))


# buckets


@pytest.mark.parametrize("s,b", [(1.0, 0), (0.0, 19), (0.51, 9), (1.5, 0), (-0.3, 19), (0.95, 1), (0.049, 19)])
def test_bucket_values(s, b):
    assert D.score_to_bucket(s) == b


def test_bucket_nan():
    with pytest.raises(ParameterError):
        D.score_to_bucket(float("nan"))


def test_bucket_monotone_and_covering():
    s = np.linspace(0, 1, 4001)
    b = [D.score_to_bucket(x) for x in s]
    assert all(x >= y for x, y in zip(b, b[1:]))
    assert set(b) == set(range(20))


def test_interval_sampler_pinned():
    r = Rng(1)
    draws = [D.sample_clip_interval(r) for _ in range(8000)]
    counts = np.bincount(draws, minlength=11)[3:]
    assert min(draws) == 3 and max(draws) == 10
    assert counts.min() > 800
    assert counts.tolist() == [1023, 993, 965, 1001, 1067, 1019, 919, 1013]
    r2 = Rng(1)
    assert [D.sample_clip_interval(r2) for _ in range(8000)] == draws


# estimator comparison


def test_estimator_cost_ordering_and_monotone():
    clips = [sinusoid_translate(1 + i % 3, frames=16, phase=0.1 * i) for i in range(10)]
    base = sinusoid_frame(64)
    long = translate_clip(base, 1, 15 * 15 + 1)
    interval_clips = {k: long[::k][:16] for k in (3, 7, 11, 15)}
    rep = D.estimator_cost_comparison(clips, interval_clips)
    assert rep["mad_cheaper_than_ms_ssim"]
    assert rep["monotone"]["mad"] and rep["monotone"]["ms_ssim"] and rep["monotone"]["ssim"]


def test_estimator_single_clip_and_empty():
    rep = D.estimator_cost_comparison([sinusoid_translate(1, frames=3)])
    assert rep["clips"] == 1 and set(rep["mean_seconds"]) == {"mad", "ssim", "ms_ssim"}
    with pytest.raises(ParameterError):
        D.estimator_cost_comparison([])
