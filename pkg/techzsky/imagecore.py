"""
Image containers and the pixel-level primitives shared by every stage.

Images are stored as float64 numpy arrays normalized to [0, 1], row-major
(`data[row, col]`), and are read-only once constructed. All borders use
reflect-101 mirroring (`d c b | a b c d | c b a`), which is numpy's
`mode="reflect"` and scipy.ndimage's `mode="mirror"`.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path
from typing import Tuple, Union

import numpy as np
from PIL import Image
from scipy import ndimage

from techzsky.errors import BadPatchSize, ImageTooSmall, NonFiniteInput

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])

# Sobel taps sum to 8 in absolute value; dividing keeps gradients in
# intensity units per pixel.
SOBEL_SCALE = 1.0 / 8.0

Pixel = Tuple[int, int]


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.ascontiguousarray(array, dtype=np.float64)
    array.setflags(write=False)
    return array


def _check_unit_range(data: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(data)):
        raise NonFiniteInput(f"{what} contains non-finite intensities")
    if data.size and (data.min() < 0.0 or data.max() > 1.0):
        raise NonFiniteInput(f"{what} intensities must lie within [0, 1]")


@dataclass(frozen=True, eq=False)
class RgbImage:
    """Three-plane color image, `data` shaped (height, width, 3)."""

    data: np.ndarray

    def __post_init__(self) -> None:
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 3 or data.shape[2] != 3:
            raise ImageTooSmall(f"RGB image must be (H, W, 3), got {data.shape}")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise ImageTooSmall("RGB image needs at least one pixel")
        _check_unit_range(data, "RGB image")
        object.__setattr__(self, "data", _frozen(data))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True, eq=False)
class GrayImage:
    """Single-plane image, `data` shaped (height, width)."""

    data: np.ndarray

    def __post_init__(self) -> None:
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise ImageTooSmall(f"gray image must be a non-empty 2-D array, got {data.shape}")
        _check_unit_range(data, "gray image")
        object.__setattr__(self, "data", _frozen(data))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True, eq=False)
class GradientField:
    gx: np.ndarray
    gy: np.ndarray
    magnitude: np.ndarray


@dataclass(frozen=True, eq=False)
class Patch:
    side: int
    values: np.ndarray

    def __post_init__(self) -> None:
        if self.side % 2 == 0 or self.values.shape != (self.side * self.side,):
            raise BadPatchSize(f"patch of side {self.side} needs {self.side ** 2} values")

    @property
    def center(self) -> float:
        return float(self.values[(self.side * self.side - 1) // 2])


def to_grayscale(img: RgbImage) -> GrayImage:
    """BT.601 luminance, clamped to [0, 1]."""
    return GrayImage(np.clip(img.data @ LUMA_WEIGHTS, 0.0, 1.0))


def sobel_xy(data: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Scaled 3x3 Sobel derivatives of a 2-D array with reflect-101 borders.

    Returns:
        Tuple[np.ndarray, np.ndarray]: `(gx, gy)`, derivative along columns and rows.
    """
    gx = ndimage.sobel(data, axis=1, mode="mirror") * SOBEL_SCALE
    gy = ndimage.sobel(data, axis=0, mode="mirror") * SOBEL_SCALE
    return gx, gy


def gradient(img: GrayImage) -> GradientField:
    """
    Sobel gradient field of a gray image.

    Raises:
        ImageTooSmall: If either dimension is below 3 pixels.
    """
    if img.width < 3 or img.height < 3:
        raise ImageTooSmall(f"gradient needs at least 3x3 pixels, got {img.height}x{img.width}")
    gx, gy = sobel_xy(img.data)
    return GradientField(gx=gx, gy=gy, magnitude=np.hypot(gx, gy))


def _check_side(side: int) -> None:
    if side < 3 or side % 2 == 0:
        raise BadPatchSize(f"patch side must be odd and >= 3, got {side}")


def padded(data: np.ndarray, radius: int) -> np.ndarray:
    """Reflect-101 pad of a 2-D array by `radius` pixels on every side."""
    return np.pad(data, radius, mode="reflect")


def extract_patch(img: GrayImage, center: Pixel, side: int) -> Patch:
    """
    Extract the `side` x `side` window centered at `center` = (row, col).

    Out-of-bounds taps are mirrored (reflect-101).
    """
    _check_side(side)
    radius = side // 2
    row, col = center
    window = padded(img.data, radius)[row : row + side, col : col + side]
    return Patch(side=side, values=window.reshape(-1).copy())


def extract_patches(img: GrayImage, rows: np.ndarray, cols: np.ndarray, side: int) -> np.ndarray:
    """
    Vectorized `extract_patch` for many centers.

    Returns:
        np.ndarray: Array of shape (len(rows), side * side), row-major taps.
    """
    _check_side(side)
    radius = side // 2
    windows = np.lib.stride_tricks.sliding_window_view(padded(img.data, radius), (side, side))
    rows = np.asarray(rows, dtype=np.intp)
    cols = np.asarray(cols, dtype=np.intp)
    return windows[rows, cols].reshape(len(rows), side * side)


def normalize01(values: np.ndarray) -> np.ndarray:
    """
    Min-max normalize a scalar field to [0, 1]; a constant field maps to zeros.

    Raises:
        NonFiniteInput: If the field is empty or holds NaN/inf.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise NonFiniteInput("cannot normalize an empty field")
    if not np.all(np.isfinite(values)):
        raise NonFiniteInput("cannot normalize a field with non-finite values")
    low = values.min()
    span = values.max() - low
    if span == 0:
        return np.zeros_like(values)
    return np.clip((values - low) / span, 0.0, 1.0)


def decode_image(payload: bytes) -> RgbImage:
    """Decode 8-bit PNG/PPM bytes (gray or color) into an RgbImage."""
    with Image.open(io.BytesIO(payload)) as image:
        pixels = np.asarray(image.convert("RGB"), dtype=np.float64)
    return RgbImage(pixels / 255.0)


def load_rgb(path: Union[str, Path]) -> RgbImage:
    return decode_image(Path(path).read_bytes())


def to_uint8(img: RgbImage) -> np.ndarray:
    return np.rint(img.data * 255.0).astype(np.uint8)


def encode_png(pixels: np.ndarray) -> bytes:
    """Encode an (H, W, 3) uint8 array as PNG bytes; output is deterministic."""
    buffer = io.BytesIO()
    Image.fromarray(np.ascontiguousarray(pixels, dtype=np.uint8)).save(
        buffer, format="PNG", optimize=False
    )
    return buffer.getvalue()


def overlay_rows(img: RgbImage, rows) -> np.ndarray:
    """8-bit copy of `img` with one pure-red pixel per column at `rows[col]`."""
    pixels = to_uint8(img)
    cols = np.arange(img.width)
    pixels[np.asarray(rows, dtype=np.intp), cols] = (255, 0, 0)
    return pixels
