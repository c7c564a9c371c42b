"""PSNR / SSIM on the luma channel, computed in float64."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError

PSNR_CAP = 100.0
_Y_WEIGHTS = np.array([65.481, 128.553, 24.966]) / 255.0


@dataclass(frozen=True)
class EvalResult:
    psnr_db: float
    ssim: float
    shave: int


def rgb_to_y(img) -> np.ndarray:
    """BT.601 studio-swing luma of an RGB image in [0, 255].

    Accepts ``(3, h, w)`` or ``(n, 3, h, w)``; returns ``(h, w)`` or ``(n, 1, h, w)``.
    """
    img = np.asarray(img, dtype=np.float64)
    axis = img.ndim - 3
    if img.ndim not in (3, 4) or img.shape[axis] != 3:
        raise ShapeError(f"expected 3 colour channels, got shape {img.shape}")
    y = 16.0 + np.tensordot(_Y_WEIGHTS, np.moveaxis(img, axis, 0), axes=1)
    return y[:, None] if img.ndim == 4 else y


def _luma(img) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 4:
        if img.shape[0] != 1:
            raise ShapeError("metrics take one image at a time")
        img = img[0]
    if img.ndim == 3:
        return rgb_to_y(img) if img.shape[0] == 3 else img[0]
    return img


def _shave(y: np.ndarray, shave: int) -> np.ndarray:
    if shave < 0:
        raise ConfigError("shave must be non-negative")
    return y[shave:y.shape[0] - shave, shave:y.shape[1] - shave] if shave else y


def psnr_y(sr, hr, shave: int = 0) -> float:
    """PSNR in dB on the Y channel after removing ``shave`` border pixels.

    Identical inputs return :data:`PSNR_CAP`.
    """
    a, b = _luma(sr), _luma(hr)
    if a.shape != b.shape:
        raise ShapeError(f"image shapes differ: {a.shape} vs {b.shape}")
    a, b = _shave(a, shave), _shave(b, shave)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0:
        return PSNR_CAP
    return min(PSNR_CAP, 20.0 * np.log10(255.0 / np.sqrt(mse)))


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2
    g = np.exp(-(r ** 2) / (2 * sigma ** 2))
    g /= g.sum()
    return np.outer(g, g)


def _filter_valid(img: np.ndarray, win: np.ndarray) -> np.ndarray:
    # window is separable: filter rows then columns
    g = win.sum(axis=1)
    k = g.size
    rows = np.lib.stride_tricks.sliding_window_view(img, k, axis=0) @ g
    return np.lib.stride_tricks.sliding_window_view(rows, k, axis=1) @ g


def ssim(sr, hr, window: int = 11, sigma: float = 1.5,
         k1: float = 0.01, k2: float = 0.03, data_range: float = 255.0) -> float:
    """Mean single-scale SSIM over all fully-covered Gaussian window positions."""
    a, b = _luma(sr), _luma(hr)
    if a.shape != b.shape:
        raise ShapeError(f"image shapes differ: {a.shape} vs {b.shape}")
    if min(a.shape) < window:
        raise ConfigError(f"image {a.shape} smaller than the {window}x{window} window")
    c1, c2 = (k1 * data_range) ** 2, (k2 * data_range) ** 2
    win = gaussian_window(window, sigma)
    mu_a, mu_b = _filter_valid(a, win), _filter_valid(b, win)
    var_a = _filter_valid(a * a, win) - mu_a ** 2
    var_b = _filter_valid(b * b, win) - mu_b ** 2
    cov = _filter_valid(a * b, win) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def evaluate(sr, hr, shave: int) -> EvalResult:
    a, b = _shave(_luma(sr), shave), _shave(_luma(hr), shave)
    return EvalResult(psnr_y(a, b), ssim(a, b), shave)
