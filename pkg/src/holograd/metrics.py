"""Image-quality metrics for 8-bit grayscale comparisons.

PSNR uses the 255 peak with a 100 dB cap so identical images stay finite in
CSV output. SSIM follows the original reference formulation: 11x11 Gaussian
window with sigma 1.5, K1 = 0.01, K2 = 0.03, dynamic range 255, mean taken
over the valid (fully overlapped) window positions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import convolve2d

from .errors import ConfigError

__all__ = ["MetricsReport", "psnr", "ssim", "PSNR_CAP"]

PSNR_CAP = 100.0
_WINDOW_SIDE = 11
_SIGMA = 1.5
_K1 = 0.01
_K2 = 0.03
_L = 255.0


@dataclass(frozen=True)
class MetricsReport:
    """Quality of one reconstruction against its target."""

    image: str
    psnr: float
    ssim: float

    def __post_init__(self):
        if not (0.0 <= self.psnr <= PSNR_CAP):
            raise ConfigError(f"psnr {self.psnr} outside [0, {PSNR_CAP}]")
        if not (-1.0 <= self.ssim <= 1.0):
            raise ConfigError(f"ssim {self.ssim} outside [-1, 1]")


def _check_pair(a: np.ndarray, b: np.ndarray, min_side: int = 1):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ConfigError(f"images must be 2-D, got {a.shape} and {b.shape}")
    if a.shape != b.shape:
        raise ConfigError(f"image shapes differ: {a.shape} vs {b.shape}")
    if min(a.shape) < min_side:
        raise ConfigError(f"image sides must be at least {min_side}, got {a.shape}")
    return a, b


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB against the 8-bit peak of 255."""
    a, b = _check_pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return float(min(10.0 * np.log10(_L * _L / mse), PSNR_CAP))


def _gaussian_window() -> np.ndarray:
    half = (_WINDOW_SIDE - 1) / 2.0
    coords = np.arange(_WINDOW_SIDE) - half
    g = np.exp(-(coords[:, None] ** 2 + coords[None, :] ** 2) / (2.0 * _SIGMA**2))
    return g / g.sum()


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean structural similarity over valid 11x11 Gaussian windows."""
    a, b = _check_pair(a, b, min_side=_WINDOW_SIDE)
    w = _gaussian_window()
    c1 = (_K1 * _L) ** 2
    c2 = (_K2 * _L) ** 2

    def smooth(x):
        return convolve2d(x, w, mode="valid")

    mu_a = smooth(a)
    mu_b = smooth(b)
    var_a = smooth(a * a) - mu_a * mu_a
    var_b = smooth(b * b) - mu_b * mu_b
    cov = smooth(a * b) - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))
