"""Image I/O, bicubic degradation, patch sampling and augmentation.

Images are ``(1, 3, H, W)`` float32 tensors holding grey levels in [0, 255].
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ConfigError
from .tensor import bicubic_resize

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".bmp", ".ppm", ".tif", ".tiff")


class ImageFormatError(ValueError):
    """A readable image whose mode cannot be treated as RGB."""


@dataclass(frozen=True)
class ImagePair:
    hr: np.ndarray
    lr: np.ndarray
    scale: int
    id: str = ""


def load_image(path) -> np.ndarray:
    """Read an 8-bit RGB (or greyscale, promoted to RGB) image."""
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if mode == "L":
                im = im.convert("RGB")
            elif mode != "RGB":
                raise ImageFormatError(f"{path}: unsupported image mode {mode!r}")
            arr = np.asarray(im, dtype=np.uint8)
    except ImageFormatError:
        raise
    except (OSError, SyntaxError, ValueError) as exc:
        raise OSError(f"cannot read image {path}: {exc}") from exc
    return arr.transpose(2, 0, 1)[None].astype(np.float32)


def to_uint8(img: np.ndarray) -> np.ndarray:
    """Clamp to [0, 255] and round to the nearest grey level, HWC layout."""
    img = np.asarray(img)
    if img.ndim == 4:
        img = img[0]
    return np.clip(np.round(img), 0, 255).astype(np.uint8).transpose(1, 2, 0)


def save_image(img: np.ndarray, path) -> None:
    Image.fromarray(to_uint8(img), "RGB").save(path)


def list_images(root) -> list[Path]:
    root = Path(root)
    return sorted(p for p in root.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


def crop_to_multiple(hr: np.ndarray, scale: int) -> np.ndarray:
    h, w = hr.shape[-2:]
    return hr[..., : h - h % scale, : w - w % scale]


def degrade(hr: np.ndarray, scale: int, id: str = "", quantize: bool = True,
            edge: str = "clamp") -> ImagePair:
    """Crop ``hr`` (top-left anchored) to a multiple of ``scale`` and bicubic-downsample it.

    With ``quantize`` the LR image is rounded to whole grey levels, matching
    what a saved-and-reloaded LR file contains.
    """
    if scale not in (2, 3, 4):
        raise ConfigError(f"scale must be 2, 3 or 4, got {scale}")
    if min(hr.shape[-2:]) < scale:
        raise ConfigError(f"image {hr.shape[-2:]} is smaller than scale {scale}")
    hr = crop_to_multiple(hr, scale)
    src = hr.astype(np.float64)
    lr = np.clip(bicubic_resize(src, Fraction(1, scale), antialias=True, edge=edge), 0, 255)
    if quantize:
        lr = np.round(lr)
    return ImagePair(hr=hr, lr=lr.astype(hr.dtype), scale=scale, id=id)


def upscale_bicubic(lr: np.ndarray, scale: int, edge: str = "clamp") -> np.ndarray:
    out = bicubic_resize(lr.astype(np.float64), scale, antialias=True, edge=edge)
    return np.clip(out, 0, 255)


def sample_batch(pairs, patch: int, batch: int, rng: np.random.Generator):
    """Random aligned crops: ``(batch, 3, p, p)`` LR and ``(batch, 3, s*p, s*p)`` HR.

    Pairs whose LR side is shorter than ``patch`` are skipped with a warning.
    """
    usable = []
    for pair in pairs:
        if min(pair.lr.shape[-2:]) >= patch:
            usable.append(pair)
        else:
            log.warning("skipping %s: LR %s smaller than patch %d", pair.id or "image",
                        pair.lr.shape[-2:], patch)
    if not usable:
        raise ConfigError(f"no image is large enough for {patch}x{patch} LR patches")
    scale = usable[0].scale
    lr_out = np.empty((batch, 3, patch, patch), usable[0].lr.dtype)
    hr_out = np.empty((batch, 3, patch * scale, patch * scale), usable[0].hr.dtype)
    for b in range(batch):
        pair = usable[rng.integers(len(usable))]
        h, w = pair.lr.shape[-2:]
        y = int(rng.integers(h - patch + 1))
        x = int(rng.integers(w - patch + 1))
        lr_out[b] = pair.lr[0, :, y:y + patch, x:x + patch]
        s = pair.scale
        hr_out[b] = pair.hr[0, :, s * y:s * (y + patch), s * x:s * (x + patch)]
    return lr_out, hr_out


def apply_transform(img: np.ndarray, flip: bool, rot: int) -> np.ndarray:
    """Horizontal flip (if asked) followed by ``rot`` quarter turns counter-clockwise."""
    out = img[..., ::-1] if flip else img
    if rot:
        out = np.rot90(out, rot, axes=(-2, -1))
    return np.ascontiguousarray(out)


def augment(lr: np.ndarray, hr: np.ndarray, rng: np.random.Generator, full_dihedral: bool = False):
    """Apply one random flip / rotation to both images of an aligned pair.

    By default the rotation is either 0 or 90 degrees; ``full_dihedral`` draws
    from all four quarter turns.
    """
    flip = bool(rng.integers(2))
    rot = int(rng.integers(4 if full_dihedral else 2))
    return apply_transform(lr, flip, rot), apply_transform(hr, flip, rot)
