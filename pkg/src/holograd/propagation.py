"""Scalar diffraction between parallel planes with regime-adaptive kernels.

The forward model is a circular convolution applied in the frequency domain:
``out = ifft2(K * fft2(u))``. The kernel ``K`` is chosen by propagation
distance so that whichever representation is well sampled on the pixel grid
is the one actually used:

* near field (``z <= asm_threshold``): the angular-spectrum transfer
  function, sampled directly in frequency; exact for band-limited fields and
  unimodular on the propagating band, so energy is conserved.
* mid field (``asm_threshold < z <= far_threshold``): the DFT of the sampled
  Rayleigh-Sommerfeld impulse response. Beyond the near-field bound the
  transfer function oscillates faster than the frequency grid resolves, while
  the impulse response is smooth enough to sample in space.
* far field (``z > far_threshold``): the impulse response again, with a hard
  window that zeroes samples whose local spatial frequency exceeds the grid
  Nyquist rate, preserving only the representable band.

Both thresholds depend only on wavelength, pixel pitch, and the larger grid
dimension. The adjoint operator conjugates the kernel, which makes
``<P a, b> == <a, P^H b>`` hold to rounding for every regime.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from .errors import ConfigError
from .fields import ComplexField, fft2, ifft2

__all__ = [
    "OpticalConfig",
    "Regime",
    "asm_threshold",
    "far_threshold",
    "select_regime",
    "ir_window_mask",
    "PropagationPlan",
    "build_plan",
    "propagate",
    "adjoint_propagate",
]


@dataclass(frozen=True)
class OpticalConfig:
    """Wavelength, pixel pitch, and grid size of one optical setup.

    Parameters
    ----------
    wavelength : float
        Vacuum wavelength in meters.
    pitch : float
        Pixel pitch in meters, identical in both axes. Must exceed half the
        wavelength; coarser-than-half-wave sampling is what makes the
        near-field threshold well defined.
    width, height : int
        Grid size in pixels (width = columns, height = rows).
    """

    wavelength: float
    pitch: float
    width: int
    height: int

    def __post_init__(self):
        if not (np.isfinite(self.wavelength) and self.wavelength > 0):
            raise ConfigError(f"wavelength must be positive, got {self.wavelength}")
        if not (np.isfinite(self.pitch) and self.pitch > 0):
            raise ConfigError(f"pixel pitch must be positive, got {self.pitch}")
        if self.pitch < self.wavelength / 2:
            raise ConfigError(
                f"pixel pitch {self.pitch} is below half the wavelength "
                f"({self.wavelength / 2}); sub-half-wave grids are not supported"
            )
        if int(self.width) != self.width or int(self.height) != self.height:
            raise ConfigError("grid size must be integral")
        if self.width < 2 or self.height < 2:
            raise ConfigError(
                f"grid must be at least 2x2, got {self.width}x{self.height}"
            )

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)


class Regime(enum.Enum):
    """Which kernel representation a given distance selects."""

    ASM = "ASM"
    IR_MID = "IR_MID"
    IR_FAR = "IR_FAR"


def asm_threshold(config: OpticalConfig) -> float:
    """Largest distance at which the spectral transfer function is well sampled.

    ``z1 = N * pitch * sqrt(pitch^2 - (wavelength/2)^2) / wavelength`` with
    ``N`` the larger grid dimension.
    """
    n = max(config.width, config.height)
    dx = config.pitch
    lam = config.wavelength
    return n * dx * np.sqrt(dx * dx - (lam / 2.0) ** 2) / lam


def far_threshold(config: OpticalConfig) -> float:
    """Distance beyond which the impulse response needs band windowing.

    ``z2 = (25 * N^4 * pitch^4 / wavelength)^(1/3)`` with ``N`` the larger
    grid dimension.
    """
    n = max(config.width, config.height)
    return float(np.cbrt(25.0 * n**4 * config.pitch**4 / config.wavelength))


def select_regime(config: OpticalConfig, distance: float) -> Regime:
    """Pick the kernel regime for a distance; ties go to the nearer regime."""
    if not (np.isfinite(distance) and distance > 0):
        raise ConfigError(f"propagation distance must be positive, got {distance}")
    if distance <= asm_threshold(config):
        return Regime.ASM
    if distance <= far_threshold(config):
        return Regime.IR_MID
    return Regime.IR_FAR


def _asm_kernel(config: OpticalConfig, z: float) -> np.ndarray:
    """Angular-spectrum transfer function on the FFT frequency grid.

    Evanescent components (spatial frequency beyond 1/wavelength) carry no
    energy to any positive distance at this sampling and are zeroed.
    """
    fx = np.fft.fftfreq(config.width, d=config.pitch)
    fy = np.fft.fftfreq(config.height, d=config.pitch)
    fsq = fy[:, None] ** 2 + fx[None, :] ** 2
    arg = 1.0 / config.wavelength**2 - fsq
    prop = arg > 0
    kz = np.sqrt(np.where(prop, arg, 0.0))
    kernel = np.where(prop, np.exp(1j * 2.0 * np.pi * z * kz), 0.0 + 0.0j)
    return kernel.astype(np.complex128)


def _spatial_grid(config: OpticalConfig, z: float):
    """Centered sample coordinates and spherical radii for one plane pair."""
    x = (np.arange(config.width) - config.width // 2) * config.pitch
    y = (np.arange(config.height) - config.height // 2) * config.pitch
    xx = x[None, :]
    yy = y[:, None]
    r = np.sqrt(xx**2 + yy**2 + z * z)
    return xx, yy, r


def _impulse_response(config: OpticalConfig, z: float) -> np.ndarray:
    """Spherical-wave impulse response sampled on the centered pixel grid."""
    xx, yy, r = _spatial_grid(config, z)
    lam = config.wavelength
    return (z / (1j * lam * r * r)) * np.exp(1j * 2.0 * np.pi * r / lam)


def ir_window_mask(config: OpticalConfig, z: float) -> np.ndarray:
    """Boolean mask of impulse-response samples the pixel grid can represent.

    A sample passes when its local spatial frequency, ``|x| / (wavelength *
    r)`` per axis, stays at or below the grid Nyquist rate
    ``1 / (2 * pitch)``. The surviving region is a centered box that widens
    with distance.
    """
    xx, yy, r = _spatial_grid(config, z)
    nyq = 1.0 / (2.0 * config.pitch)
    lam = config.wavelength
    return (np.abs(xx) / (lam * r) <= nyq) & (np.abs(yy) / (lam * r) <= nyq)


def _ir_kernel(config: OpticalConfig, z: float, windowed: bool) -> np.ndarray:
    """Transfer function from the sampled spherical-wave impulse response.

    The response is circularly shifted so the grid center lands at index
    (0, 0) and scaled by the pixel area so the DFT approximates the
    continuous convolution kernel. With ``windowed`` set, samples beyond the
    Nyquist bound of :func:`ir_window_mask` are zeroed first.
    """
    impulse = _impulse_response(config, z)
    if windowed:
        impulse = np.where(ir_window_mask(config, z), impulse, 0.0 + 0.0j)
    dx = config.pitch
    return dx * dx * np.fft.fft2(np.fft.ifftshift(impulse))


@dataclass(frozen=True)
class PropagationPlan:
    """A distance-specific frequency-domain kernel bound to one grid.

    Built once by :func:`build_plan` and reused across fields of the same
    shape; holds the selected regime, both thresholds, and the kernel.
    """

    config: OpticalConfig
    distance: float
    regime: Regime
    near_limit: float
    far_limit: float
    kernel: np.ndarray = dataclass_field(repr=False)

    @property
    def shape(self) -> tuple[int, int]:
        return self.config.shape


def build_plan(config: OpticalConfig, distance: float) -> PropagationPlan:
    """Select the regime for ``distance`` and precompute its kernel."""
    regime = select_regime(config, distance)
    if regime is Regime.ASM:
        kernel = _asm_kernel(config, distance)
    elif regime is Regime.IR_MID:
        kernel = _ir_kernel(config, distance, windowed=False)
    else:
        kernel = _ir_kernel(config, distance, windowed=True)
    return PropagationPlan(
        config=config,
        distance=float(distance),
        regime=regime,
        near_limit=asm_threshold(config),
        far_limit=far_threshold(config),
        kernel=kernel,
    )


def _check_field(field: ComplexField, plan: PropagationPlan) -> None:
    if field.shape != plan.shape:
        raise ConfigError(
            f"field shape {field.shape} does not match plan grid {plan.shape}"
        )
    if not np.isclose(field.pitch, plan.config.pitch, rtol=1e-12, atol=0.0):
        raise ConfigError(
            f"field pitch {field.pitch} does not match plan pitch {plan.config.pitch}"
        )


def propagate(field: ComplexField, plan: PropagationPlan) -> ComplexField:
    """Propagate a field by the plan's distance."""
    _check_field(field, plan)
    out = ifft2(plan.kernel * fft2(field.data))
    return ComplexField(out, field.pitch)


def adjoint_propagate(field: ComplexField, plan: PropagationPlan) -> ComplexField:
    """Apply the adjoint of :func:`propagate` under the Hermitian product."""
    _check_field(field, plan)
    out = ifft2(np.conj(plan.kernel) * fft2(field.data))
    return ComplexField(out, field.pitch)
