"""Grayscale image I/O and synthetic dataset generation.

Images are 8-bit single-channel on disk; color inputs are luma-converted on
read. In memory they are float64 arrays on the [0, 255] scale. The pipeline
is monochromatic, so one channel is all there is.
"""

from __future__ import annotations

import os

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DataError

__all__ = [
    "imread_gray",
    "imread_resized",
    "imwrite_gray",
    "to_uint8",
    "list_images",
    "write_synthetic_dataset",
]

_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp")


def imread_gray(path) -> np.ndarray:
    """Read an image as float64 grayscale on [0, 255] (luma for color)."""
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("L"), dtype=np.float64)
    except FileNotFoundError:
        raise DataError(f"cannot read image {path}: no such file") from None
    except UnidentifiedImageError:
        raise DataError(f"cannot read image {path}: not a recognized image") from None
    except OSError as exc:
        raise DataError(f"cannot read image {path}: {exc}") from None


def imread_resized(source, shape: tuple[int, int]) -> np.ndarray:
    """Read (or pass through) a grayscale image, bilinearly resized to ``shape``.

    ``source`` may be a path or an already-loaded float array on [0, 255].
    """
    img = source.astype(np.float64) if isinstance(source, np.ndarray) else imread_gray(source)
    if img.shape != tuple(shape):
        h, w = shape
        with Image.fromarray(to_uint8(img), mode="L") as im:
            img = np.asarray(im.resize((w, h), Image.BILINEAR), dtype=np.float64)
    return img


def to_uint8(arr: np.ndarray) -> np.ndarray:
    """Round and clip a float image to 8-bit levels."""
    return np.clip(np.rint(np.asarray(arr, dtype=np.float64)), 0, 255).astype(np.uint8)


def imwrite_gray(path, arr: np.ndarray) -> None:
    """Write a float image as an 8-bit grayscale PNG."""
    a = np.asarray(arr)
    if a.ndim != 2:
        raise DataError(f"cannot write image {path}: expected 2-D array, got {a.shape}")
    try:
        Image.fromarray(to_uint8(a), mode="L").save(path)
    except OSError as exc:
        raise DataError(f"cannot write image {path}: {exc}") from None


def list_images(directory) -> list[str]:
    """Sorted image paths directly inside a directory."""
    if not os.path.isdir(directory):
        raise DataError(f"not a directory: {directory}")
    names = sorted(
        n for n in os.listdir(directory) if n.lower().endswith(_EXTENSIONS)
    )
    return [os.path.join(directory, n) for n in names]


def _synthetic_image(rng: np.random.Generator, size: int) -> np.ndarray:
    """One random grayscale scene: smooth blobs, a few hard-edged shapes."""
    yy, xx = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    img = np.zeros((size, size))
    for _ in range(rng.integers(2, 5)):
        cy, cx = rng.uniform(0, size, 2)
        s = rng.uniform(size / 12, size / 3)
        img += rng.uniform(0.3, 1.0) * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * s * s))
    for _ in range(rng.integers(1, 4)):
        y0, x0 = rng.integers(0, size - size // 8, 2)
        h, w = rng.integers(size // 10, size // 3, 2)
        img[y0 : y0 + h, x0 : x0 + w] += rng.uniform(0.2, 0.8)
    if rng.random() < 0.5:
        freq = rng.uniform(1, 4) * 2 * np.pi / size
        angle = rng.uniform(0, np.pi)
        img += 0.15 * (1 + np.sin(freq * (yy * np.cos(angle) + xx * np.sin(angle))))
    img -= img.min()
    peak = img.max()
    if peak > 0:
        img = img / peak
    return 255.0 * img


def write_synthetic_dataset(directory, count: int, size: int, seed: int = 0) -> list[str]:
    """Generate a deterministic directory of grayscale PNG scenes."""
    if count < 1 or size < 1:
        raise DataError(f"dataset needs positive count and size, got {count}, {size}")
    os.makedirs(directory, exist_ok=True)
    rng = np.random.default_rng(seed)
    paths = []
    for i in range(count):
        path = os.path.join(directory, f"img_{i:04d}.png")
        imwrite_gray(path, _synthetic_image(rng, size))
        paths.append(path)
    return paths
