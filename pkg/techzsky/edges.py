"""
Canny edge detection producing the binary candidate map used by every
skyline cost.

Thresholds are fractions of the image's maximum smoothed gradient magnitude,
so they do not depend on contrast. A small absolute floor (`min_gradient`)
keeps numerically flat images and faint steps edge-free.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from techzsky.errors import BadThresholds, ConfigError
from techzsky.imagecore import GrayImage, sobel_xy

EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)

# (row, col) step along the gradient for each quantized direction:
# 0 deg, 45 deg, 90 deg, 135 deg measured from the +col axis towards +row.
_DIRECTION_STEPS = ((0, 1), (1, 1), (1, 0), (1, -1))


@dataclass(frozen=True)
class CannyConfig:
    sigma: float = 1.4
    low: float = 0.1
    high: float = 0.2
    min_gradient: float = 0.01

    def __post_init__(self) -> None:
        if not self.sigma > 0:
            raise ConfigError(f"canny.sigma must be > 0, got {self.sigma}")
        if not 0 < self.low < self.high <= 1:
            raise BadThresholds(
                f"canny thresholds need 0 < low < high <= 1, got low={self.low} high={self.high}"
            )
        if self.min_gradient < 0:
            raise ConfigError(f"canny.min_gradient must be >= 0, got {self.min_gradient}")


@dataclass(frozen=True, eq=False)
class EdgeMap:
    mask: np.ndarray

    def __post_init__(self) -> None:
        mask = np.array(self.mask, dtype=bool)
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)

    @property
    def height(self) -> int:
        return self.mask.shape[0]

    @property
    def width(self) -> int:
        return self.mask.shape[1]

    @property
    def count(self) -> int:
        return int(self.mask.sum())


def _shifted(values: np.ndarray, d_row: int, d_col: int) -> np.ndarray:
    """values[r + d_row, c + d_col] with zeros outside the image."""
    out = np.zeros_like(values)
    rows, cols = values.shape
    dst_r = slice(max(0, -d_row), rows - max(0, d_row))
    src_r = slice(max(0, d_row), rows - max(0, -d_row))
    dst_c = slice(max(0, -d_col), cols - max(0, d_col))
    src_c = slice(max(0, d_col), cols - max(0, -d_col))
    out[dst_r, dst_c] = values[src_r, src_c]
    return out


def non_maximum_suppression(magnitude: np.ndarray, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """
    Thin gradient ridges to one pixel, with directions quantized to 4 bins.

    A pixel survives when it is strictly larger than the neighbour behind it
    and no smaller than the neighbour ahead of it along the gradient.
    """
    angle = np.mod(np.arctan2(gy, gx), np.pi)
    sector = np.floor((angle + np.pi / 8) / (np.pi / 4)).astype(int) % 4
    keep = np.zeros(magnitude.shape, dtype=bool)
    for index, (d_row, d_col) in enumerate(_DIRECTION_STEPS):
        ahead = _shifted(magnitude, d_row, d_col)
        behind = _shifted(magnitude, -d_row, -d_col)
        local_max = (magnitude > behind) & (magnitude >= ahead)
        keep |= (sector == index) & local_max
    return keep & (magnitude > 0)


def hysteresis(strong: np.ndarray, weak: np.ndarray) -> np.ndarray:
    """Keep 8-connected components of `weak` that contain a `strong` pixel."""
    labels, count = ndimage.label(weak, structure=EIGHT_CONNECTED)
    if count == 0:
        return np.zeros_like(weak)
    seeded = np.zeros(count + 1, dtype=bool)
    seeded[np.unique(labels[strong & weak])] = True
    seeded[0] = False
    return seeded[labels]


def canny(
    img: GrayImage,
    sigma: float = 1.4,
    low: float = 0.1,
    high: float = 0.2,
    min_gradient: float = 0.01,
) -> EdgeMap:
    """
    Canny edge detector.

    Gaussian smoothing at `sigma`, Sobel gradients, 4-direction non-maximum
    suppression and double-threshold hysteresis with 8-connected linking.

    Raises:
        BadThresholds: If `low >= high` or either lies outside (0, 1].
    """
    config = CannyConfig(sigma=sigma, low=low, high=high, min_gradient=min_gradient)
    smoothed = ndimage.gaussian_filter(img.data, sigma=config.sigma, mode="mirror")
    gx, gy = sobel_xy(smoothed)
    magnitude = np.hypot(gx, gy)
    peak = float(magnitude.max())
    if peak <= config.min_gradient:
        return EdgeMap(np.zeros(magnitude.shape, dtype=bool))

    thin = non_maximum_suppression(magnitude, gx, gy)
    candidates = thin & (magnitude >= config.min_gradient)
    weak = candidates & (magnitude >= config.low * peak)
    strong = candidates & (magnitude >= config.high * peak)
    return EdgeMap(hysteresis(strong, weak))


def canny_with(img: GrayImage, config: CannyConfig) -> EdgeMap:
    return canny(img, config.sigma, config.low, config.high, config.min_gradient)


def edge_density(edges: EdgeMap) -> float:
    """Fraction of pixels marked as edges."""
    return edges.count / float(edges.mask.size)
