import math

import numpy as np
import pytest
import scipy.fft
from hypothesis import given, settings
from hypothesis import strategies as st

from linmotion.errors import ParameterError, ShapeError
from linmotion.spectral import (
    DctPlan,
    dct,
    dct_basis,
    dct_init,
    dct_init_report,
    idct,
    make_lowpass,
    noised_anchor,
    spectral_energy_profile,
    spectral_mix,
)
from linmotion.synth import gradient_image
from linmotion.tensor import Rng, randn


def test_basis_orthogonal():
    for L in (1, 2, 3, 8, 16, 17):
        B = dct_basis(L)
        assert np.allclose(B.T @ B, np.eye(L), atol=1e-12)


def test_constant_signal_is_dc_only():
    L, c = 8, 2.5
    y = dct(np.full(L, c))
    assert abs(y[0] - c * math.sqrt(L)) < 1e-12
    assert np.all(np.abs(y[1:]) < 1e-12)


def test_impulse_closed_form():
    y = dct(np.eye(4)[0])
    expected = [0.5] + [math.sqrt(0.5) * math.cos(math.pi * k / 8) for k in (1, 2, 3)]
    assert np.allclose(y, expected, atol=1e-15)
    assert np.allclose(y, [0.5, 0.6532814824381883, 0.5, 0.2705980500730985], atol=1e-15)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(1, 16), min_size=1, max_size=3), st.integers(0, 2**32))
def test_matches_scipy_dctn(shape, seed):
    x = randn(Rng(seed), shape)
    assert np.allclose(dct(x), scipy.fft.dctn(x, type=2, norm="ortho"), atol=1e-12)
    assert np.allclose(idct(x), scipy.fft.idctn(x, type=2, norm="ortho"), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(1, 16), min_size=1, max_size=3), st.integers(0, 2**32))
def test_round_trip_and_parseval(shape, seed):
    x = randn(Rng(seed), shape)
    y = dct(x)
    assert np.max(np.abs(idct(y) - x)) <= 1e-10
    assert abs(np.linalg.norm(y) - np.linalg.norm(x)) <= 1e-12 * max(1.0, np.linalg.norm(x))


def test_round_trip_8x8_and_3d():
    for shape in [(8, 8), (16, 8, 8)]:
        x = randn(Rng(1), shape)
        assert np.max(np.abs(idct(dct(x)) - x)) < 1e-10


def test_dc_only_inverse_is_constant():
    c = np.zeros((4, 6))
    c[0, 0] = 3.0
    x = idct(c)
    assert np.allclose(x, x[0, 0], atol=1e-15)


def test_linearity():
    a, b = randn(Rng(2), (5, 7)), randn(Rng(3), (5, 7))
    assert np.allclose(dct(2.0 * a - 0.5 * b), 2.0 * dct(a) - 0.5 * dct(b), atol=1e-10)


def test_axes_subset_and_errors():
    x = randn(Rng(4), (3, 4, 5))
    assert np.allclose(dct(x, axes=[1]), scipy.fft.dct(x, type=2, norm="ortho", axis=1), atol=1e-13)
    assert np.allclose(DctPlan(x.shape, (0, 2)).forward(x), scipy.fft.dctn(x, axes=(0, 2), norm="ortho"), atol=1e-13)
    with pytest.raises(ShapeError):
        dct(x, axes=[1, 1])
    with pytest.raises(ShapeError):
        dct(x, axes=[3])


# masks


def test_full_cutoff_all_ones():
    assert np.array_equal(make_lowpass((4, 5, 6), "ideal", 1.0, 1.0).mask, np.ones((4, 5, 6)))


def test_quarter_cutoff_4cube_dc_only():
    m = make_lowpass((4, 4, 4), "ideal", 0.25, 0.25).mask
    assert m.sum() == 1 and m[0, 0, 0] == 1


def test_popcount_16_8_8():
    m = make_lowpass((16, 8, 8), "ideal", 0.25, 0.25).mask
    count = sum(1 for i in range(16) for j in range(8) for k in range(8) if i < 4 and j < 2 and k < 2)
    assert m.sum() == count == 16


@pytest.mark.parametrize("mode", ["ideal", "gaussian"])
def test_mask_invariants(mode):
    m = make_lowpass((6, 5, 7), mode, 0.3, 0.6).mask
    assert m[0, 0, 0] == 1.0
    assert np.all((m >= 0) & (m <= 1))
    assert np.array_equal(m + (1.0 - m), np.ones_like(m))
    if mode == "ideal":
        assert set(np.unique(m)) <= {0.0, 1.0}


@pytest.mark.parametrize("c", [0.0, -0.1, 1.01])
def test_bad_cutoff(c):
    with pytest.raises(ParameterError):
        make_lowpass((4, 4, 4), "ideal", c, 0.5)


# DCTInit


def _inputs(seed, shape=(8, 2, 6, 6)):
    r = Rng(seed)
    return randn(r.split(0), shape[1:]), randn(r.split(1), shape)


def test_full_pass_gives_image_branch():
    z1, eps = _inputs(1)
    filt = make_lowpass((8, 6, 6), "ideal", 1.0, 1.0)
    out = dct_init(z1, eps, 0.96, filt)
    assert np.max(np.abs(out - noised_anchor(z1, eps, 0.96))) < 1e-10


def test_minimal_mask_gives_noise_branch_outside_dc():
    z1, eps = _inputs(2)
    eps = eps - eps.mean(axis=(0, 2, 3), keepdims=True)
    filt = make_lowpass((8, 6, 6), "ideal", 1e-3, 1e-3)
    assert filt.mask.sum() == 1
    out = dct_init(z1, eps, 0.96, filt)
    # direct substitution: only the DC coefficient changes, to the noised anchor's
    z_tau = noised_anchor(z1, eps, 0.96)
    expected = eps + z_tau.mean(axis=(0, 2, 3), keepdims=True)
    assert np.max(np.abs(out - expected)) < 1e-12
    d_out, d_eps = dct(out, (0, 2, 3)), dct(eps, (0, 2, 3))
    d_out[0, :, 0, 0] = d_eps[0, :, 0, 0]
    assert np.max(np.abs(d_out - d_eps)) < 1e-10


def test_identical_branches():
    z1, _ = _inputs(3)
    eps = np.broadcast_to(z1, (8,) + z1.shape).copy()
    out = dct_init(z1, eps, 1.0, make_lowpass((8, 6, 6)))
    assert np.max(np.abs(out - eps)) < 1e-10


def test_variance_mix_on_white_inputs():
    r = Rng(4)
    shape = (16, 4, 16, 16)
    low, high = 2.0 * randn(r.split(0), shape), randn(r.split(1), shape)
    filt = make_lowpass((16, 16, 16), "ideal", 0.5, 0.5)
    rho = filt.kept_fraction
    out = spectral_mix(low, high, filt)
    expected = rho * low.var() + (1 - rho) * high.var()
    assert abs(out.var() / expected - 1.0) < 0.10


def test_report_energies_partition():
    z1, eps = _inputs(5)
    rep = dct_init_report(z1, eps, 0.96, make_lowpass((8, 6, 6)))
    assert abs(rep["image_branch_energy"] + rep["noise_branch_energy"] - rep["total_energy"]) < 1e-8
    out = dct_init(z1, eps, 0.96, make_lowpass((8, 6, 6)))
    assert abs(rep["total_energy"] - np.sum(out**2)) < 1e-8
    full = dct_init_report(z1, eps, 0.96, make_lowpass((8, 6, 6), "ideal", 1.0, 1.0))
    assert full["noise_branch_energy"] == 0.0 and full["kept_fraction"] == 1.0


def test_dct_init_shape_and_time_errors():
    z1, eps = _inputs(6)
    with pytest.raises(ShapeError):
        dct_init(z1[:1], eps, 0.5, make_lowpass((8, 6, 6)))
    with pytest.raises(ParameterError):
        dct_init(z1, eps, 0.0, make_lowpass((8, 6, 6)))
    with pytest.raises(ShapeError):
        dct_init(z1, eps, 0.5, make_lowpass((4, 6, 6)))


# energy profiles


def test_constant_image_dct_hits_one_at_zero():
    _, f = spectral_energy_profile(np.full((16, 16), 0.7), "dct", [0.0, 0.5, 1.0])
    assert np.allclose(f, 1.0, atol=1e-12)


def test_profiles_monotone_and_end_at_one():
    x = randn(Rng(7), (32, 32))
    for tr in ("dct", "fft"):
        _, f = spectral_energy_profile(x, tr)
        assert np.all(np.diff(f) >= -1e-15) and abs(f[-1] - 1.0) < 1e-12


def test_white_noise_curves_close():
    x = randn(Rng(11), (64, 64))
    radii = np.linspace(0, 1, 21)
    _, a = spectral_energy_profile(x, "dct", radii)
    _, b = spectral_energy_profile(x, "fft", radii)
    assert np.max(np.abs(a - b)) < 0.05


def test_fft_side_matches_direct_dft():
    x = randn(Rng(12), (6, 5))
    m, n = np.arange(6), np.arange(5)
    W1 = np.exp(-2j * np.pi * np.outer(m, m) / 6)
    W2 = np.exp(-2j * np.pi * np.outer(n, n) / 5)
    from linmotion.spectral import power_spectrum

    assert np.allclose(power_spectrum(x, "fft"), np.abs(W1 @ x @ W2) ** 2, atol=1e-10)


def test_smooth_ramp_dct_more_concentrated():
    img = gradient_image(64)
    _, a = spectral_energy_profile(img, "dct", [0.1])
    _, b = spectral_energy_profile(img, "fft", [0.1])
    assert a[0] > b[0]
    y, x = np.mgrid[0:32, 0:32]
    ramp = (x + y) / 62.0
    _, a = spectral_energy_profile(ramp, "dct", [0.1])
    _, b = spectral_energy_profile(ramp, "fft", [0.1])
    assert a[0] > b[0]
