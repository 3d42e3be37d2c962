import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from satsim import bicubic
from satsim.optics import (CameraSpec, DegradeConfig, PsfKernel, SupportTooSmall, convolve, degrade,
                           downsample_bicubic, make_psf, output_size, q_from_camera)
from satsim.raster import Raster


def direct_convolve(img, kernel):
    """Nested-loop convolution with half-sample symmetric borders."""
    h, w = img.shape
    kh, kw = kernel.shape
    ch, cw = kh // 2, kw // 2

    def refl(i, n):
        while i < 0 or i >= n:
            i = -1 - i if i < 0 else 2 * n - 1 - i
        return i

    out = np.zeros((h, w))
    for y in range(h):
        for x in range(w):
            acc = 0.0
            for j in range(kh):
                for i in range(kw):
                    acc += kernel[j, i] * img[refl(y + ch - j, h), refl(x + cw - i, w)]
            out[y, x] = acc
    return out


def fft_psf_oracle(q, phi, size, period=1025):
    """Incoherent PSF from a full FFT of the band-limited pupil."""
    radius = 1.0 / (2 * q * phi)
    f = np.fft.fftfreq(period)
    pupil = (f[:, None] ** 2 + f[None, :] ** 2 <= radius ** 2).astype(float)
    power = np.abs(np.fft.fftshift(np.fft.ifft2(pupil))) ** 2
    c, h = period // 2, size // 2
    crop = power[c - h:c + h + 1, c - h:c + h + 1]
    return crop / crop.sum()


def test_q_examples():
    assert q_from_camera(CameraSpec(focal_length=1.0, aperture_diameter=550e-9, pixel_pitch=1.0)) == pytest.approx(1.0)
    cam = CameraSpec(focal_length=0.020, aperture_diameter=0.005, pixel_pitch=1.5425e-6)
    assert q_from_camera(cam) == pytest.approx(1.426, abs=5e-4)
    wide = CameraSpec(focal_length=0.020, aperture_diameter=0.010, pixel_pitch=1.5425e-6)
    assert q_from_camera(wide) == pytest.approx(q_from_camera(cam) / 2)
    with pytest.raises(ValueError):
        CameraSpec(focal_length=0.0, aperture_diameter=1.0, pixel_pitch=1.0)


@pytest.mark.parametrize("q", [0.1, 0.3, 1.0, 2.0, 4.34, 7.0, 10.0])
@pytest.mark.parametrize("phi", [1, 2, 10])
def test_psf_contract(q, phi):
    k = make_psf(q, phi)
    w = k.weights
    assert w.shape[0] % 2 == 1 and w.shape[0] <= 129
    assert w.min() >= 0
    assert abs(w.sum() - 1) <= 1e-6
    for other in (w[::-1], w[:, ::-1], w.T, np.rot90(w)):
        assert np.max(np.abs(other - w)) <= 1e-9


@pytest.mark.parametrize("q, phi, size", [(2.0, 1, 41), (1.0, 1, 15), (0.8, 2, 33), (0.2, 10, 51)])
def test_psf_matches_fft_oracle(q, phi, size):
    ours = make_psf(q, phi, max_support=size).weights
    ref = fft_psf_oracle(q, phi, ours.shape[0])
    assert np.max(np.abs(ours - ref)) < 1e-12


def test_psf_impulse_limit():
    assert make_psf(0.01, 1).centre_weight == pytest.approx(1.0, abs=1e-12)
    assert make_psf(0.05, 10).centre_weight > 0.99


@pytest.mark.parametrize("phi", [1, 2, 10])
def test_centre_weight_strictly_decreasing(phi):
    qs = [q for q in (0.1, 0.25, 0.5, 0.75, 1, 1.5, 2, 3, 4.34, 6, 8, 10) if q * phi >= 0.75]
    weights = [make_psf(q, phi).centre_weight for q in qs]
    assert all(b < a for a, b in zip(weights, weights[1:]))


def test_explicit_support_too_small():
    with pytest.raises(SupportTooSmall):
        make_psf(4.34, 10, support=9)
    k = make_psf(0.3, 1, support=3)
    assert k.size == 3 and k.energy_fraction >= 0.999
    with pytest.raises(ValueError):
        make_psf(1.0, 1, support=4)
    with pytest.raises(ValueError):
        make_psf(0.0, 1)
    with pytest.raises(ValueError):
        make_psf(1.0, 0.5)


def test_psf_kernel_rejects_even():
    with pytest.raises(ValueError):
        PsfKernel(np.ones((2, 2)))


def test_convolve_box_5x5_matches_oracle():
    img = np.arange(25, dtype=float).reshape(5, 5) * 7 % 23
    r = Raster(np.stack([img, img * 2, 255 - img], axis=-1))
    box = np.full((3, 3), 1 / 9)
    out = convolve(r, box).pixels
    for c in range(3):
        assert np.max(np.abs(out[..., c] - direct_convolve(r.pixels[..., c], box))) < 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(3, 14), st.integers(3, 14), st.integers(0, 2 ** 32 - 1), st.data())
def test_convolve_matches_oracle_random(h, w, seed, data):
    kh = data.draw(st.sampled_from([k for k in (1, 3, 5, 7, 9) if k <= h]))
    kw = data.draw(st.sampled_from([k for k in (1, 3, 5, 7, 9) if k <= w]))
    rng = np.random.default_rng(seed)
    r = Raster(rng.uniform(0, 255, (h, w, 3)))
    k = rng.normal(size=(kh, kw))
    out = convolve(r, k).pixels
    for c in range(3):
        assert np.max(np.abs(out[..., c] - direct_convolve(r.pixels[..., c], k))) < 1e-9


def test_convolve_identities():
    rng = np.random.default_rng(2)
    r = Raster(rng.uniform(0, 255, (20, 30, 3)))
    assert np.array_equal(convolve(r, PsfKernel.impulse()).pixels, r.pixels)
    delta = np.zeros((5, 5))
    delta[2, 2] = 1.0
    assert np.max(np.abs(convolve(r, delta).pixels - r.pixels)) < 1e-9
    const = Raster.filled(20, 30, 77.0)
    assert np.max(np.abs(convolve(const, make_psf(2.0, 1, max_support=19)).pixels - 77.0)) < 1e-9
    with pytest.raises(ValueError):
        convolve(Raster.filled(4, 4), np.ones((5, 5)))


def test_convolve_preserves_channel_means():
    rng = np.random.default_rng(3)
    r = Raster(rng.uniform(0, 255, (80, 90, 3)))
    out = convolve(r, make_psf(3.0, 1, max_support=61))
    assert np.max(np.abs(out.pixels.mean((0, 1)) - r.pixels.mean((0, 1)))) < 1e-3


def test_bicubic_weights_oracle():
    # closed form tap weights agree with the piecewise kernel
    t = np.linspace(0, 0.999, 50)
    taps = bicubic.tap_weights(t)
    for off, w in zip((-1, 0, 1, 2), taps):
        assert np.allclose(w, bicubic.keys_kernel(t - off), atol=1e-14)
    assert np.allclose(sum(taps), 1.0)


def test_sample_matches_brute_force():
    rng = np.random.default_rng(4)
    img = rng.uniform(0, 255, (9, 11))
    xs = rng.uniform(-3, 13, 200)
    ys = rng.uniform(-3, 11, 200)

    def refl(i, n):
        while i < 0 or i >= n:
            i = -1 - i if i < 0 else 2 * n - 1 - i
        return i

    expected = []
    for x, y in zip(xs, ys):
        acc = 0.0
        for j in range(math.floor(y) - 1, math.floor(y) + 3):
            for i in range(math.floor(x) - 1, math.floor(x) + 3):
                acc += (bicubic.keys_kernel(x - i) * bicubic.keys_kernel(y - j)
                        * img[refl(j, 9), refl(i, 11)])
        expected.append(acc)
    assert np.max(np.abs(bicubic.sample(img, xs, ys) - np.array(expected))) < 1e-9


def test_downsample_geometry():
    r = Raster.filled(57, 83, 10.0, gsd=0.05)
    out = downsample_bicubic(r, 10)
    assert out.shape == (5, 8)
    assert out.gsd == pytest.approx(0.5)
    assert np.max(np.abs(out.pixels - 10.0)) < 1e-6
    assert output_size(5000, 0.5 / 0.05) == 500
    with pytest.raises(ValueError):
        downsample_bicubic(Raster.filled(5, 5), 10)


def test_downsample_phi_one_is_identity():
    rng = np.random.default_rng(5)
    r = Raster(rng.uniform(0, 255, (13, 17, 3)))
    assert np.array_equal(downsample_bicubic(r, 1).pixels, r.pixels)


def test_downsample_matches_point_sampling():
    rng = np.random.default_rng(6)
    img = rng.uniform(0, 255, (40, 30, 3))
    out = downsample_bicubic(Raster(img), 3).pixels
    ys = (np.arange(13) + 0.5) * 3 - 0.5
    xs = (np.arange(10) + 0.5) * 3 - 0.5
    gx, gy = np.meshgrid(xs, ys)
    assert np.max(np.abs(out - bicubic.sample(img, gx, gy))) < 1e-9


def test_degrade_examples():
    rng = np.random.default_rng(7)
    r = Raster(rng.uniform(0, 255, (200, 210, 3)), gsd=0.05)
    out = degrade(r, DegradeConfig.from_gsd(4.34, 0.05, 0.5))
    assert out.shape == (20, 21) and out.gsd == 0.5
    again = degrade(r, DegradeConfig.from_gsd(4.34, 0.05, 0.5))
    assert np.array_equal(out.pixels, again.pixels)

    same = degrade(r, DegradeConfig(q=0.01, phi=1, target_gsd=0.05))
    assert np.max(np.abs(same.pixels - r.pixels)) < 1

    const = degrade(Raster.filled(150, 150, 42.0, gsd=0.05), DegradeConfig.from_gsd(2.0, 0.05, 0.5))
    assert np.max(np.abs(const.pixels - 42.0)) < 1e-6

    with pytest.raises(ValueError):
        degrade(r, DegradeConfig(q=1.0, phi=10, target_gsd=0.4))
