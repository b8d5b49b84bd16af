"""
Deterministic synthetic mountain scenes with ground-truth skylines.

Each scene has a bright sky with a vertical gradient, a few bright cloud
streaks, and darker textured terrain crossed by ridge lines that are easy to
mistake for the skyline. When it fits above the skyline, a darker cloud bank
with straight edges spans the full width. An edge map alone cannot tell its
flat boundary from the real skyline. The skyline row of every column holds
an even blend of sky and terrain so the boundary is centered on that row.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
from scipy import ndimage

from techzsky.errors import ConfigError, ImageTooSmall
from techzsky.evaluate import GroundTruth
from techzsky.extra import as_path
from techzsky.imagecore import encode_png
from techzsky.logger import Logger

logger = Logger("synth")

SKY_TINT = np.array([0.86, 0.93, 1.0])
TERRAIN_TINT = np.array([1.05, 0.95, 0.8])
MIN_SIDE = 32


@dataclass
class SynthSummary:
    out_dir: Path
    images: List[Path] = field(default_factory=list)
    truths: List[Path] = field(default_factory=list)

    @property
    def count(self) -> int:
        return len(self.images)


def _skyline(width: int, height: int, rng: np.random.Generator) -> np.ndarray:
    knots = max(3, width // 40)
    xs = np.linspace(0, width - 1, knots)
    ys = np.empty(knots)
    ys[0] = rng.uniform(0.32, 0.5) * height
    for k in range(1, knots):
        ys[k] = np.clip(ys[k - 1] + rng.uniform(-0.08, 0.08) * height, 0.28 * height, 0.58 * height)
    base = np.interp(np.arange(width), xs, ys)
    period = rng.uniform(30.0, 50.0)
    wobble = 1.5 * np.sin(2 * np.pi * np.arange(width) / period + rng.uniform(0, 2 * np.pi))
    return np.clip(np.rint(base + wobble), 4, height - 5).astype(np.int64)


def _cloud_bank(height: int, skyline: np.ndarray, rng: np.random.Generator) -> Optional[Tuple[int, int]]:
    """Top and bottom row of a flat cloud bank that spans the full width, or None when it does not fit."""
    top = int(np.rint(rng.uniform(0.08, 0.14) * height))
    bottom = top + max(4, int(np.rint(rng.uniform(0.04, 0.07) * height)))
    if bottom + 6 >= int(skyline.min()):
        return None
    return top, bottom


def _sky(width: int, height: int, skyline: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    rows = np.arange(height)[:, None]
    sky = 0.92 - 0.18 * rows / np.maximum(skyline[None, :], 1)
    sky = sky + rng.normal(0.0, 0.008, size=(height, width))

    # a darker bank with straight edges; its boundary rows are half covered
    bank = _cloud_bank(height, skyline, rng)
    lowest = 0
    if bank is not None:
        upper, lower = bank
        cover = ((rows > upper) & (rows < lower)) + 0.5 * ((rows == upper) | (rows == lower))
        sky = sky - 0.16 * cover
        lowest = lower + 3

    cols = np.arange(width)[None, :]
    top = int(skyline.min())
    for _ in range(rng.integers(2, 5)):
        if top < 16:
            break
        low = max(0.1 * top, lowest)
        if low >= 0.8 * top:
            break
        c_row = rng.uniform(low, 0.8 * top)
        c_col = rng.uniform(0, width)
        a = rng.uniform(0.08, 0.2) * width
        b = rng.uniform(2.0, 5.0)
        inside = ((rows - c_row) / b) ** 2 + ((cols - c_col) / a) ** 2 <= 1.0
        inside &= (rows < skyline[None, :] - 12) & (rows >= lowest)
        sky = sky + 0.08 * inside
    return sky


def _terrain(width: int, height: int, skyline: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    rows = np.arange(height)[:, None]
    cols = np.arange(width)
    texture = ndimage.gaussian_filter(rng.normal(0.0, 1.0, size=(height, width)), 2.0, mode="mirror")
    texture *= 0.03 / max(texture.std(), 1e-12)
    terrain = 0.38 + texture

    # haze band just under the skyline in part of the image lowers its contrast
    haze_center = rng.uniform(0, width)
    haze = 0.12 * np.exp(-(((cols - haze_center) / (0.15 * width)) ** 2))
    depth = rows - skyline[None, :]
    terrain = terrain + haze[None, :] * np.exp(-np.maximum(depth, 0) / 12.0)

    for _ in range(2):
        offset = rng.uniform(14, max(15.0, 0.35 * (height - skyline.max())))
        period = rng.uniform(40.0, 90.0)
        ridge = skyline + offset + 3.0 * np.sin(2 * np.pi * cols / period + rng.uniform(0, 2 * np.pi))
        amplitude = 0.12 + 0.1 * (1 + np.sin(2 * np.pi * cols / rng.uniform(60, 140) + rng.uniform(0, 6)))
        terrain = terrain - amplitude[None, :] * (rows > ridge[None, :])
    return terrain


def render_scene(width: int, height: int, rng: np.random.Generator) -> Tuple[np.ndarray, GroundTruth]:
    """
    Render one scene.

    Returns:
        Tuple: `(pixels, truth)`, pixels as (H, W, 3) uint8.
    """
    if width < MIN_SIDE or height < MIN_SIDE:
        raise ImageTooSmall(f"synthetic scenes need at least {MIN_SIDE}x{MIN_SIDE} pixels")
    skyline = _skyline(width, height, rng)
    sky = _sky(width, height, skyline, rng)
    terrain = _terrain(width, height, skyline, rng)

    sky_rgb = sky[:, :, None] * SKY_TINT
    terrain_rgb = terrain[:, :, None] * TERRAIN_TINT
    rows = np.arange(height)[:, None]
    above = (rows < skyline[None, :])[:, :, None]
    on = (rows == skyline[None, :])[:, :, None]
    pixels = np.where(above, sky_rgb, terrain_rgb)
    pixels = np.where(on, 0.5 * (sky_rgb + terrain_rgb), pixels)
    pixels = np.rint(np.clip(pixels, 0.0, 1.0) * 255.0).astype(np.uint8)
    return pixels, GroundTruth(tuple(skyline))


def synth_generate(
    count: int,
    width: int,
    height: int,
    seed: int,
    out_dir: Union[str, Path],
    split: Optional[int] = None,
) -> SynthSummary:
    """
    Write `count` PNG scenes and their ground-truth CSVs to `out_dir`.

    With `split`, the first `split` scenes go to `out_dir/train` and the rest
    to `out_dir/test`. Output bytes depend only on the arguments.
    """
    if count < 0:
        raise ConfigError(f"count must be >= 0, got {count}")
    if split is not None and not 0 <= split <= count:
        raise ConfigError(f"split must lie in [0, {count}], got {split}")
    out_dir = as_path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = SynthSummary(out_dir=out_dir)
    for index in range(count):
        target = out_dir
        if split is not None:
            target = out_dir / ("train" if index < split else "test")
        target.mkdir(parents=True, exist_ok=True)
        rng = np.random.default_rng([seed, index])
        pixels, truth = render_scene(width, height, rng)
        stem = f"synth_{index:04d}"
        image_path = target / f"{stem}.png"
        csv_path = target / f"{stem}.csv"
        image_path.write_bytes(encode_png(pixels))
        csv_path.write_text(truth.to_csv())
        summary.images.append(image_path)
        summary.truths.append(csv_path)
    logger.info(f"Generated {count} synthetic scene(s) in {out_dir}")
    return summary
