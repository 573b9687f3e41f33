"""PSNR and SSIM on 8-bit grayscale rasters."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

PEAK = 255.0
PSNR_CAP = 120.0
C1 = (0.01 * PEAK) ** 2
C2 = (0.03 * PEAK) ** 2


@dataclass
class QualityReport:
    psnr_db: float
    ssim: float
    image_id: str = ""


def _pair(reference, test):
    a = np.asarray(reference, dtype=np.float64)
    b = np.asarray(test, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def psnr(reference, test) -> float:
    a, b = _pair(reference, test)
    mse = np.mean((a - b) ** 2)
    if mse == 0:
        return PSNR_CAP
    return float(min(PSNR_CAP, 10.0 * np.log10(PEAK ** 2 / mse)))


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x ** 2) / (2 * sigma ** 2))
    return g / g.sum()


def _local_mean(img, win):
    out = correlate1d(img, win, axis=0, mode="constant")
    out = correlate1d(out, win, axis=1, mode="constant")
    h = len(win) // 2
    return out[h:-h, h:-h]


def ssim_map(reference, test, size: int = 11, sigma: float = 1.5) -> np.ndarray:
    """Local SSIM over every fully contained ``size x size`` Gaussian window."""
    a, b = _pair(reference, test)
    if a.ndim != 2 or min(a.shape) < size:
        raise ValueError(f"SSIM needs a 2D image of at least {size}x{size}")
    win = gaussian_window(size, sigma)
    mu_a = _local_mean(a, win)
    mu_b = _local_mean(b, win)
    var_a = _local_mean(a * a, win) - mu_a * mu_a
    var_b = _local_mean(b * b, win) - mu_b * mu_b
    cov = _local_mean(a * b, win) - mu_a * mu_b
    num = (2 * mu_a * mu_b + C1) * (2 * cov + C2)
    den = (mu_a * mu_a + mu_b * mu_b + C1) * (var_a + var_b + C2)
    return num / den


def ssim(reference, test) -> float:
    return float(np.mean(ssim_map(reference, test)))


def quality(reference, test, image_id: str = "") -> QualityReport:
    return QualityReport(psnr(reference, test), ssim(reference, test), image_id)
