"""
Joint-color structure tensor, its eigen features and the bucket index used to
select a filter from the bank.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np
from scipy import ndimage

from techzsky.errors import BadPatchSize, ConfigError, ImageTooSmall
from techzsky.imagecore import RgbImage, sobel_xy

COHERENCE_EPS = 1e-12


@dataclass(frozen=True)
class QuantizerConfig:
    orientation_bins: int = 16
    strength_edges: Tuple[float, ...] = (0.02, 0.05, 0.1, 0.2, 0.4)
    coherence_edges: Tuple[float, ...] = (1.0 / 3.0, 2.0 / 3.0)

    def __post_init__(self) -> None:
        object.__setattr__(self, "strength_edges", tuple(float(e) for e in self.strength_edges))
        object.__setattr__(self, "coherence_edges", tuple(float(e) for e in self.coherence_edges))
        if self.orientation_bins < 1:
            raise ConfigError(f"orientation_bins must be >= 1, got {self.orientation_bins}")
        for name in ("strength_edges", "coherence_edges"):
            edges = getattr(self, name)
            if any(b <= a for a, b in zip(edges, edges[1:])):
                raise ConfigError(f"{name} must be strictly ascending, got {edges}")

    @property
    def strength_bins(self) -> int:
        return len(self.strength_edges) + 1

    @property
    def coherence_bins(self) -> int:
        return len(self.coherence_edges) + 1

    @property
    def bucket_count(self) -> int:
        return self.orientation_bins * self.strength_bins * self.coherence_bins


@dataclass(frozen=True)
class TensorConfig:
    window: int = 7
    weight_sigma: float = 1.5
    quantizer: QuantizerConfig = field(default_factory=QuantizerConfig)

    def __post_init__(self) -> None:
        if self.window < 3 or self.window % 2 == 0:
            raise BadPatchSize(f"tensor window must be odd and >= 3, got {self.window}")
        if not self.weight_sigma > 0:
            raise ConfigError(f"tensor weight_sigma must be > 0, got {self.weight_sigma}")


@dataclass(frozen=True)
class StructureTensor:
    txx: float
    txy: float
    tyy: float


@dataclass(frozen=True)
class TensorFeatures:
    orientation: float
    strength: float
    coherence: float


@dataclass(frozen=True, eq=False)
class TensorField:
    """Per-pixel tensor components, each shaped (height, width)."""

    txx: np.ndarray
    txy: np.ndarray
    tyy: np.ndarray

    def at(self, row: int, col: int) -> StructureTensor:
        return StructureTensor(
            float(self.txx[row, col]), float(self.txy[row, col]), float(self.tyy[row, col])
        )


@dataclass(frozen=True, eq=False)
class FeatureField:
    """Per-pixel eigen features, each shaped (height, width)."""

    orientation: np.ndarray
    strength: np.ndarray
    coherence: np.ndarray

    def at(self, row: int, col: int) -> TensorFeatures:
        return TensorFeatures(
            float(self.orientation[row, col]),
            float(self.strength[row, col]),
            float(self.coherence[row, col]),
        )


def gaussian_weights(window: int, sigma: float) -> np.ndarray:
    """1-D Gaussian taps of length `window`, normalized to sum 1."""
    radius = window // 2
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    taps = np.exp(-(offsets ** 2) / (2.0 * sigma * sigma))
    return taps / taps.sum()


def gaussian_window(window: int, sigma: float) -> np.ndarray:
    """Separable 2-D weights; sums to 1."""
    taps = gaussian_weights(window, sigma)
    return np.outer(taps, taps)


def _weighted_sum(values: np.ndarray, taps: np.ndarray) -> np.ndarray:
    out = ndimage.correlate1d(values, taps, axis=0, mode="mirror")
    return ndimage.correlate1d(out, taps, axis=1, mode="mirror")


def tensor_field(img: RgbImage, window: int = 7, weight_sigma: float = 1.5) -> TensorField:
    """
    Spatially weighted structure tensor summed over the R, G, B gradients.

    Raises:
        ImageTooSmall: If either dimension is below 3 pixels.
    """
    config = TensorConfig(window=window, weight_sigma=weight_sigma)
    if img.width < 3 or img.height < 3:
        raise ImageTooSmall(f"tensor field needs at least 3x3 pixels, got {img.height}x{img.width}")

    gxx = np.zeros((img.height, img.width))
    gxy = np.zeros_like(gxx)
    gyy = np.zeros_like(gxx)
    for c in range(3):
        gx, gy = sobel_xy(img.data[:, :, c])
        gxx += gx * gx
        gxy += gx * gy
        gyy += gy * gy

    taps = gaussian_weights(config.window, config.weight_sigma)
    return TensorField(
        txx=np.maximum(_weighted_sum(gxx, taps), 0.0),
        txy=_weighted_sum(gxy, taps),
        tyy=np.maximum(_weighted_sum(gyy, taps), 0.0),
    )


def eigen_feature_field(txx: np.ndarray, txy: np.ndarray, tyy: np.ndarray) -> FeatureField:
    """
    Closed-form eigen analysis of symmetric 2x2 tensors, elementwise.

    Orientation is the angle of the dominant eigenvector in [0, pi); strength is
    sqrt(lambda1); coherence is (sqrt(l1) - sqrt(l2)) / (sqrt(l1) + sqrt(l2)).
    Degenerate tensors yield orientation 0 and coherence 0.
    """
    txx = np.asarray(txx, dtype=np.float64)
    txy = np.asarray(txy, dtype=np.float64)
    tyy = np.asarray(tyy, dtype=np.float64)

    half_trace = 0.5 * (txx + tyy)
    radius = np.hypot(0.5 * (txx - tyy), txy)
    lambda1 = np.maximum(half_trace + radius, 0.0)
    lambda2 = np.maximum(half_trace - radius, 0.0)
    root1 = np.sqrt(lambda1)
    root2 = np.minimum(np.sqrt(lambda2), root1)

    total = root1 + root2
    degenerate = total < COHERENCE_EPS
    coherence = np.where(degenerate, 0.0, (root1 - root2) / np.where(degenerate, 1.0, total))
    coherence = np.clip(coherence, 0.0, 1.0)

    orientation = np.mod(0.5 * np.arctan2(2.0 * txy, txx - tyy), np.pi)
    orientation = np.where((orientation >= np.pi) | degenerate, 0.0, orientation)
    return FeatureField(orientation=orientation, strength=root1, coherence=coherence)


def eigen_features(t: StructureTensor) -> TensorFeatures:
    field = eigen_feature_field(np.array(t.txx), np.array(t.txy), np.array(t.tyy))
    return TensorFeatures(
        orientation=float(field.orientation),
        strength=float(field.strength),
        coherence=float(field.coherence),
    )


def features_of(img: RgbImage, config: TensorConfig) -> FeatureField:
    tensors = tensor_field(img, config.window, config.weight_sigma)
    return eigen_feature_field(tensors.txx, tensors.txy, tensors.tyy)


def quantize_field(
    orientation: np.ndarray, strength: np.ndarray, coherence: np.ndarray, q: QuantizerConfig
) -> np.ndarray:
    """Bucket index per element, ((o * S) + s) * C + c."""
    o_bin = np.floor(np.asarray(orientation) / math.pi * q.orientation_bins).astype(np.int64)
    o_bin = np.clip(o_bin, 0, q.orientation_bins - 1)
    s_bin = np.searchsorted(np.asarray(q.strength_edges), strength, side="right")
    c_bin = np.searchsorted(np.asarray(q.coherence_edges), coherence, side="right")
    return (o_bin * q.strength_bins + s_bin) * q.coherence_bins + c_bin


def quantize(f: TensorFeatures, q: QuantizerConfig) -> int:
    """Bucket index in [0, K) for one feature triple."""
    return int(quantize_field(np.array(f.orientation), np.array(f.strength), np.array(f.coherence), q))


def bucket_field(features: FeatureField, q: QuantizerConfig) -> np.ndarray:
    return quantize_field(features.orientation, features.strength, features.coherence, q)
