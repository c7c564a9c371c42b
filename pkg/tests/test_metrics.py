import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from rfdn.errors import ConfigError, ShapeError
from rfdn.metrics import PSNR_CAP, evaluate, gaussian_window, psnr_y, rgb_to_y, ssim


def solid(rgb, h=4, w=4):
    return np.broadcast_to(np.array(rgb, float)[:, None, None], (3, h, w)).copy()


def test_luma_reference_values():
    assert rgb_to_y(solid((0, 0, 0)))[0, 0] == pytest.approx(16.0, abs=1e-12)
    assert rgb_to_y(solid((255, 255, 255)))[0, 0] == pytest.approx(235.0, abs=1e-3)
    expected = 16 + 128 * (65.481 + 128.553 + 24.966) / 255
    assert rgb_to_y(solid((128, 128, 128)))[0, 0] == pytest.approx(expected, abs=1e-9)
    # the commonly quoted 125.96 comes from the 3-digit coefficient form
    assert expected == pytest.approx(125.96, abs=0.05)


def test_luma_batched_shape_and_errors():
    assert rgb_to_y(np.zeros((2, 3, 5, 6))).shape == (2, 1, 5, 6)
    with pytest.raises(ShapeError):
        rgb_to_y(np.zeros((4, 5, 6)))


def test_psnr_cap_and_closed_form(rng):
    img = rng.integers(0, 256, (1, 3, 20, 20)).astype(float)
    assert psnr_y(img, img) == PSNR_CAP
    # a grey offset of 16/k per channel shifts Y by exactly 16
    k = (65.481 + 128.553 + 24.966) / 255
    other = img + 16 / k
    assert psnr_y(img, other) == pytest.approx(20 * np.log10(255 / 16), abs=1e-9)
    assert psnr_y(img, other) == pytest.approx(24.05, abs=5e-3)


def test_psnr_shape_mismatch():
    with pytest.raises(ShapeError):
        psnr_y(np.zeros((3, 4, 4)), np.zeros((3, 4, 5)))


@settings(max_examples=40, deadline=None)
@given(a=arrays(np.float64, (3, 6, 6), elements=st.floats(0, 255)),
       b=arrays(np.float64, (3, 6, 6), elements=st.floats(0, 255)),
       c=st.floats(-50, 50))
def test_psnr_symmetric_and_shift_invariant(a, b, c):
    p = psnr_y(a, b)
    assert psnr_y(b, a) == p
    if p < PSNR_CAP - 1:
        assert psnr_y(a + c, b + c) == pytest.approx(p, abs=1e-6)


def test_shave_ignores_border_differences(rng):
    hr = rng.integers(0, 256, (3, 16, 16)).astype(float)
    sr = hr + rng.normal(0, 5, hr.shape)
    other = sr.copy()
    other[:, :2] = 0
    other[:, :, -2:] = 255
    assert psnr_y(sr, hr, shave=2) == psnr_y(other, hr, shave=2)
    assert psnr_y(sr, hr, shave=0) != psnr_y(other, hr, shave=0)
    inner = np.mean((rgb_to_y(sr) - rgb_to_y(hr))[2:14, 2:14] ** 2)
    assert psnr_y(sr, hr, shave=2) == pytest.approx(20 * np.log10(255 / np.sqrt(inner)))


def test_ssim_identity_exact(rng):
    x = rng.integers(0, 256, (3, 24, 20)).astype(float)
    assert ssim(x, x) == 1.0


def test_ssim_constant_images_closed_form():
    a, b = np.full((1, 16, 16), 100.0), np.full((1, 16, 16), 120.0)
    c1 = (0.01 * 255) ** 2
    expected = (2 * 100 * 120 + c1) / (100 ** 2 + 120 ** 2 + c1)
    assert ssim(a, b) == pytest.approx(expected, rel=1e-12)


def direct_ssim(a, b, win, c1, c2):
    k = win.shape[0]
    vals = []
    for i in range(a.shape[0] - k + 1):
        for j in range(a.shape[1] - k + 1):
            pa, pb = a[i:i + k, j:j + k], b[i:i + k, j:j + k]
            ma, mb = np.sum(win * pa), np.sum(win * pb)
            va = np.sum(win * (pa - ma) ** 2)
            vb = np.sum(win * (pb - mb) ** 2)
            cov = np.sum(win * (pa - ma) * (pb - mb))
            vals.append((2 * ma * mb + c1) * (2 * cov + c2)
                        / ((ma ** 2 + mb ** 2 + c1) * (va + vb + c2)))
    return float(np.mean(vals))


def test_ssim_matches_direct_oracle(rng):
    a = rng.uniform(0, 255, (32, 32))
    b = np.clip(a + rng.normal(0, 20, a.shape), 0, 255)
    win = gaussian_window()
    oracle = direct_ssim(a, b, win, (0.01 * 255) ** 2, (0.03 * 255) ** 2)
    assert abs(ssim(a[None], b[None]) - oracle) < 1e-6


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), noise=st.floats(0.5, 80))
def test_ssim_below_one_for_different_images(seed, noise):
    r = np.random.default_rng(seed)
    a = r.uniform(0, 255, (1, 12, 12))
    b = a + r.normal(0, noise, a.shape)
    assert ssim(a, b) < 1.0
    assert -1.0 <= ssim(a, b)


def test_ssim_small_image_rejected():
    with pytest.raises(ConfigError):
        ssim(np.zeros((1, 10, 30)), np.zeros((1, 10, 30)))


def test_evaluate_applies_shave(rng):
    hr = rng.integers(0, 256, (1, 3, 30, 30)).astype(float)
    res = evaluate(hr, hr, 4)
    assert (res.psnr_db, res.ssim, res.shave) == (PSNR_CAP, 1.0, 4)
