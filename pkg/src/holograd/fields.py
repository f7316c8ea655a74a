"""Core complex-field containers and tensor primitives.

Everything downstream (propagation, solvers, the denoiser network) works on
2-D complex scalar fields sampled on a square pixel grid, or on
height x width x channels complex feature maps. This module owns the field
container, the unitary FFT pair, the Hermitian inner product, complex layer
normalization, and bilinear sampling at fractional coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ComplexField",
    "fft2",
    "ifft2",
    "hermitian_inner",
    "complex_layer_norm",
    "bilinear_sample",
]


@dataclass
class ComplexField:
    """A sampled scalar complex field on a uniform square-pixel grid.

    Parameters
    ----------
    data : ndarray
        2-D complex128 array, row-major (height, width).
    pitch : float
        Pixel pitch in meters (identical in both axes).

    Treat instances as immutable: operations return new fields rather than
    mutating ``data`` in place.
    """

    data: np.ndarray
    pitch: float

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"field data must be 2-D and non-empty, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValueError("field data contains non-finite values")
        if not (np.isfinite(self.pitch) and self.pitch > 0):
            raise ValueError(f"pixel pitch must be positive and finite, got {self.pitch}")
        self.data = np.ascontiguousarray(arr, dtype=np.complex128)
        self.pitch = float(self.pitch)

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def energy(self) -> float:
        """Total field energy, sum of squared magnitudes."""
        return float(np.sum(np.abs(self.data) ** 2))


def _check_finite(a: np.ndarray, name: str) -> None:
    if not np.isfinite(a).all():
        raise ValueError(f"{name} contains non-finite values")


def fft2(a: np.ndarray) -> np.ndarray:
    """Unitary 2-D FFT over the first two axes.

    The orthonormal scaling makes the transform energy preserving, so
    ``ifft2(fft2(a)) == a`` and ``||fft2(a)|| == ||a||`` to rounding.
    Trailing axes (channels) are transformed independently.
    """
    a = np.asarray(a)
    _check_finite(a, "fft2 input")
    return np.fft.fft2(a, axes=(0, 1), norm="ortho")


def ifft2(a: np.ndarray) -> np.ndarray:
    """Unitary 2-D inverse FFT over the first two axes."""
    a = np.asarray(a)
    _check_finite(a, "ifft2 input")
    return np.fft.ifft2(a, axes=(0, 1), norm="ortho")


def hermitian_inner(x: np.ndarray, y: np.ndarray) -> complex:
    """Hermitian inner product ``sum_j x_j * conj(y_j)``.

    Linear in ``x``, conjugate-linear in ``y``; invariant under a common
    global phase rotation of both arguments, which the plain (unconjugated)
    dot product is not.
    """
    x = np.asarray(x)
    y = np.asarray(y)
    if x.size != y.size:
        raise ValueError(f"length mismatch: {x.size} vs {y.size}")
    return complex(np.vdot(y, x))


def complex_layer_norm(
    f: np.ndarray,
    gamma: np.ndarray,
    beta: np.ndarray,
    eps: float = 1e-5,
) -> np.ndarray:
    """Layer-normalize a complex feature map per spatial location.

    At each location the complex channel mean is subtracted and the result is
    divided by the square root of the joint variance (real and imaginary
    parts pooled into one real scalar), then scaled and shifted by the
    complex affine parameters.

    Parameters
    ----------
    f : ndarray
        Complex feature map (..., channels); normalization runs over the
        last axis.
    gamma, beta : ndarray
        Complex affine parameters of shape (channels,).
    eps : float
        Variance floor added before the square root.
    """
    f = np.asarray(f, dtype=np.complex128)
    mean = f.mean(axis=-1, keepdims=True)
    d = f - mean
    var = np.mean(d.real**2 + d.imag**2, axis=-1, keepdims=True)
    return (d / np.sqrt(var + eps)) * gamma + beta


def bilinear_sample(f: np.ndarray, coords: np.ndarray) -> np.ndarray:
    """Sample a feature map at fractional (row, col) coordinates.

    Coordinates are clamped to the valid grid before interpolation, so
    samples at or beyond the border replicate edge values.

    Parameters
    ----------
    f : ndarray
        Feature map (H, W) or (H, W, C), real or complex.
    coords : ndarray
        (N, 2) array of (row, col) sample positions in pixel units.

    Returns
    -------
    ndarray
        (N,) or (N, C) array of interpolated values, dtype of ``f``.
    """
    f = np.asarray(f)
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim != 2 or coords.shape[1] != 2:
        raise ValueError(f"coords must have shape (N, 2), got {coords.shape}")
    h, w = f.shape[0], f.shape[1]
    r = np.clip(coords[:, 0], 0.0, h - 1.0)
    c = np.clip(coords[:, 1], 0.0, w - 1.0)
    r0 = np.floor(r).astype(np.intp)
    c0 = np.floor(c).astype(np.intp)
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)
    wr = r - r0
    wc = c - c0
    if f.ndim == 3:
        wr = wr[:, None]
        wc = wc[:, None]
    top = f[r0, c0] * (1.0 - wc) + f[r0, c1] * wc
    bot = f[r1, c0] * (1.0 - wc) + f[r1, c1] * wc
    return top * (1.0 - wr) + bot * wr
