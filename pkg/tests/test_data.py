import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from rfdn.data import (ImageFormatError, ImagePair, apply_transform, augment, crop_to_multiple,
                       degrade, load_image, sample_batch, save_image, upscale_bicubic)
from rfdn.errors import ConfigError


def test_tiny_image_round_trip(tmp_path):
    pixels = np.array([[[0, 10, 255], [1, 2, 3]], [[200, 100, 50], [7, 8, 9]]], np.uint8)
    Image.fromarray(pixels, "RGB").save(tmp_path / "a.png")
    img = load_image(tmp_path / "a.png")
    assert img.shape == (1, 3, 2, 2)
    np.testing.assert_array_equal(img[0].transpose(1, 2, 0), pixels)
    save_image(img, tmp_path / "b.png")
    np.testing.assert_array_equal(load_image(tmp_path / "b.png"), img)


def test_grayscale_promoted(tmp_path):
    Image.fromarray(np.arange(12, dtype=np.uint8).reshape(3, 4), "L").save(tmp_path / "g.png")
    img = load_image(tmp_path / "g.png")
    assert img.shape == (1, 3, 3, 4)
    assert np.array_equal(img[0, 0], img[0, 1]) and np.array_equal(img[0, 1], img[0, 2])


def test_truncated_file_is_io_error(tmp_path, astronaut):
    save_image(astronaut, tmp_path / "full.png")
    raw = (tmp_path / "full.png").read_bytes()
    (tmp_path / "cut.png").write_bytes(raw[: len(raw) // 2])
    with pytest.raises(OSError):
        load_image(tmp_path / "cut.png")


def test_non_rgb_mode_is_format_error(tmp_path):
    Image.new("RGBA", (4, 4)).save(tmp_path / "x.png")
    with pytest.raises(ImageFormatError):
        load_image(tmp_path / "x.png")


def test_save_clamps_and_rounds(tmp_path):
    img = np.array([-3.0, 12.4, 12.6, 300.0]).reshape(1, 1, 2, 2).repeat(3, 1)
    save_image(img, tmp_path / "c.png")
    np.testing.assert_array_equal(load_image(tmp_path / "c.png")[0, 0], [[0, 12], [13, 255]])


def test_degrade_shapes_and_crop():
    pair = degrade(np.zeros((1, 3, 64, 64), np.float32), 4)
    assert pair.lr.shape == (1, 3, 16, 16)
    pair = degrade(np.zeros((1, 3, 65, 70), np.float32), 3)
    assert pair.hr.shape == (1, 3, 63, 69) and pair.lr.shape == (1, 3, 21, 23)
    with pytest.raises(ConfigError):
        degrade(np.zeros((1, 3, 2, 8), np.float32), 3)
    with pytest.raises(ConfigError):
        degrade(np.zeros((1, 3, 8, 8), np.float32), 5)


def test_crop_is_top_left():
    hr = np.arange(25, dtype=np.float32).reshape(1, 1, 5, 5)
    np.testing.assert_array_equal(crop_to_multiple(hr, 2), hr[..., :4, :4])


@pytest.mark.parametrize("scale", [2, 3, 4])
def test_constant_image_survives_degrade_and_upscale(scale):
    hr = np.full((1, 3, 24, 24), 137.0, np.float32)
    pair = degrade(hr, scale)
    assert np.all(pair.lr == 137.0)
    up = upscale_bicubic(pair.lr, scale)
    # exact at grey-level precision; the float weights sum to 1 only within an ulp
    np.testing.assert_array_equal(np.round(up), hr)
    np.testing.assert_allclose(up, hr, rtol=1e-14)


def test_degrade_stays_in_range(astronaut):
    pair = degrade(astronaut, 3, quantize=False)
    assert pair.lr.min() >= 0 and pair.lr.max() <= 255


def pair_of(h, w, scale, seed=0):
    r = np.random.default_rng(seed)
    hr = r.integers(0, 256, (1, 3, h * scale, w * scale)).astype(np.float32)
    lr = r.integers(0, 256, (1, 3, h, w)).astype(np.float32)
    return ImagePair(hr, lr, scale, "p")


def test_sample_batch_alignment():
    pair = pair_of(20, 30, 2)
    lr, hr = sample_batch([pair], 8, 5, np.random.default_rng(0))
    assert lr.shape == (5, 3, 8, 8) and hr.shape == (5, 3, 16, 16)
    for b in range(5):
        # locate the crop and check the HR window sits at doubled offsets
        hits = [(y, x) for y in range(13) for x in range(23)
                if np.array_equal(pair.lr[0, :, y:y + 8, x:x + 8], lr[b])]
        assert hits
        y, x = hits[0]
        np.testing.assert_array_equal(hr[b], pair.hr[0, :, 2 * y:2 * y + 16, 2 * x:2 * x + 16])


def test_sample_batch_deterministic():
    pairs = [pair_of(12, 12, 3, 1), pair_of(16, 10, 3, 2)]
    a = sample_batch(pairs, 6, 4, np.random.default_rng(42))
    b = sample_batch(pairs, 6, 4, np.random.default_rng(42))
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


def test_sample_batch_skips_small(caplog):
    big, small = pair_of(10, 10, 2), pair_of(4, 4, 2)
    lr, _ = sample_batch([small, big], 8, 3, np.random.default_rng(0))
    assert lr.shape == (3, 3, 8, 8)
    assert "skipping" in caplog.text
    with pytest.raises(ConfigError):
        sample_batch([small], 8, 1, np.random.default_rng(0))


@settings(max_examples=40, deadline=None)
@given(h=st.integers(1, 20), w=st.integers(1, 20), patch=st.integers(1, 20),
       scale=st.sampled_from([2, 3, 4]), seed=st.integers(0, 2**16))
def test_sample_batch_in_bounds(h, w, patch, scale, seed):
    pair = pair_of(h, w, scale, seed)
    if min(h, w) < patch:
        with pytest.raises(ConfigError):
            sample_batch([pair], patch, 2, np.random.default_rng(seed))
        return
    lr, hr = sample_batch([pair], patch, 2, np.random.default_rng(seed))
    assert lr.shape == (2, 3, patch, patch)
    assert hr.shape == (2, 3, scale * patch, scale * patch)


def test_identity_transform_and_flip_law(rng):
    img = rng.random((3, 4, 6))
    np.testing.assert_array_equal(apply_transform(img, False, 0), img)
    flipped = apply_transform(img, True, 0)
    W = img.shape[-1]
    for x in range(W):
        np.testing.assert_array_equal(flipped[..., x], img[..., W - 1 - x])
    np.testing.assert_array_equal(apply_transform(flipped, True, 0), img)


def test_flip_then_rotate_order(rng):
    img = rng.random((1, 3, 3))
    np.testing.assert_array_equal(apply_transform(img, True, 1),
                                  np.rot90(img[..., ::-1], 1, axes=(-2, -1)))


def test_augment_applies_same_transform(rng):
    lr = rng.random((3, 4, 4))
    hr = np.repeat(np.repeat(lr, 2, axis=1), 2, axis=2)
    for _ in range(10):
        a, b = augment(lr, hr, rng)
        np.testing.assert_array_equal(np.repeat(np.repeat(a, 2, axis=1), 2, axis=2), b)


def test_augment_draws_only_four_elements_by_default(rng):
    img = np.arange(9.0).reshape(1, 3, 3)
    seen = {augment(img, img, rng)[0].tobytes() for _ in range(200)}
    assert len(seen) == 4
    seen_all = {augment(img, img, rng, full_dihedral=True)[0].tobytes() for _ in range(400)}
    assert len(seen_all) == 8


@pytest.mark.parametrize("rot", [0, 1])
def test_augment_commutes_with_degrade(astronaut, rot):
    hr = astronaut[..., :96, :96]
    lhs = degrade(apply_transform(hr, True, rot), 2).lr
    rhs = apply_transform(degrade(hr, 2).lr, True, rot)
    np.testing.assert_array_equal(lhs, rhs)
