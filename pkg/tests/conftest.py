"""Shared fixtures and helpers for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from holograd.fields import ComplexField
from holograd.propagation import OpticalConfig


def band_limited_field(
    height: int,
    width: int,
    pitch: float,
    rng: np.random.Generator,
    keep: float = 0.25,
) -> ComplexField:
    """Random complex field whose spectrum is confined to a low-frequency box.

    ``keep`` is the kept fraction of the Nyquist band per axis.
    """
    spec = rng.standard_normal((height, width)) + 1j * rng.standard_normal((height, width))
    fy = np.fft.fftfreq(height)
    fx = np.fft.fftfreq(width)
    mask = (np.abs(fy)[:, None] <= keep / 2) & (np.abs(fx)[None, :] <= keep / 2)
    spec = np.where(mask, spec, 0.0)
    data = np.fft.ifft2(spec, norm="ortho")
    return ComplexField(data, pitch)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def slm_config() -> OpticalConfig:
    """Full-resolution display panel: 520 nm, 8 um pitch, 1920 x 1080."""
    return OpticalConfig(wavelength=520e-9, pitch=8e-6, width=1920, height=1080)


@pytest.fixture
def small_config() -> OpticalConfig:
    """Square 256-pixel grid at the same wavelength and pitch."""
    return OpticalConfig(wavelength=520e-9, pitch=8e-6, width=256, height=256)
