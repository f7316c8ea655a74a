"""PSNR and SSIM against closed-form values."""

import numpy as np
import pytest

from holograd.errors import ConfigError
from holograd.metrics import PSNR_CAP, MetricsReport, psnr, ssim


@pytest.fixture
def image(rng):
    return rng.uniform(0, 255, (32, 32))


# ---------------------------------------------------------------- psnr


def test_psnr_identical_images_hit_cap(image):
    assert psnr(image, image) == PSNR_CAP


def test_psnr_constant_offset_closed_form(image):
    # MSE of a uniform 16-level shift is 256
    base = np.clip(image, 0, 239)
    assert psnr(base, base + 16) == pytest.approx(24.048403955560608, abs=1e-9)


def test_psnr_inverted_checker_is_zero():
    checker = np.indices((16, 16)).sum(axis=0) % 2 * 255.0
    assert psnr(checker, 255.0 - checker) == pytest.approx(0.0, abs=1e-12)


def test_psnr_symmetry(image, rng):
    other = rng.uniform(0, 255, (32, 32))
    assert psnr(image, other) == psnr(other, image)


def test_psnr_monotone_in_mse(image):
    base = np.clip(image, 0, 200)
    assert psnr(base, base + 4) > psnr(base, base + 8) > psnr(base, base + 32)


def test_psnr_rejects_dim_mismatch(image):
    with pytest.raises(ConfigError):
        psnr(image, image[:16])
    with pytest.raises(ConfigError):
        psnr(image.ravel(), image.ravel())


# ---------------------------------------------------------------- ssim


def test_ssim_identical_is_exactly_one(image):
    assert ssim(image, image) == 1.0


def test_ssim_constant_gap_closed_form():
    a = np.full((16, 16), 100.0)
    b = np.full((16, 16), 110.0)
    # constant images keep only the luminance term:
    # (2*100*110 + 6.5025) / (100^2 + 110^2 + 6.5025)
    assert ssim(a, b) == pytest.approx(0.9954764441, abs=1e-9)


def test_ssim_symmetry(image, rng):
    other = rng.uniform(0, 255, (32, 32))
    assert ssim(image, other) == pytest.approx(ssim(other, image), abs=1e-13)


def test_ssim_negative_on_inversion(rng):
    a = rng.uniform(80, 175, (32, 32))
    assert ssim(a, 255.0 - a) < 0.0


def test_ssim_decreases_with_noise(image, rng):
    light = image + rng.normal(0, 2, image.shape)
    heavy = image + rng.normal(0, 30, image.shape)
    assert ssim(image, light) > ssim(image, heavy)


def test_ssim_rejects_small_or_mismatched(image):
    with pytest.raises(ConfigError):
        ssim(image, image[:16, :])
    small = np.zeros((10, 10))
    with pytest.raises(ConfigError):
        ssim(small, small)


# ---------------------------------------------------------------- report


def test_metrics_report_validation():
    MetricsReport(image="a.png", psnr=35.0, ssim=0.9)
    with pytest.raises(ConfigError):
        MetricsReport(image="a.png", psnr=120.0, ssim=0.5)
    with pytest.raises(ConfigError):
        MetricsReport(image="a.png", psnr=30.0, ssim=1.5)
