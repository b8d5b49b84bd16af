"""
Skyline accuracy metrics, ground-truth files, dataset ingestion and reports.

Ground truth is stored as one CSV line of integer rows, one per image column,
next to the image and sharing its stem.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from techzsky.dp import SkylinePath
from techzsky.errors import (
    ConfigError,
    EmptyInput,
    LengthMismatch,
    MalformedGroundTruth,
    MissingDirectory,
)
from techzsky.extra import as_path, list_images
from techzsky.imagecore import RgbImage, load_rgb
from techzsky.logger import Logger

logger = Logger("eval")

PathLike = Union[SkylinePath, "GroundTruth", Sequence[int], np.ndarray]


@dataclass(frozen=True)
class EvalConfig:
    bin_width: float = 0.5
    overflow: float = 10.0
    good_threshold: float = 4.0

    def __post_init__(self) -> None:
        if not self.bin_width > 0 or not self.overflow > 0:
            raise ConfigError("eval.bin_width and eval.overflow must be > 0")
        if self.good_threshold < 0:
            raise ConfigError("eval.good_threshold must be >= 0")


@dataclass(frozen=True)
class GroundTruth:
    rows: Tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "rows", tuple(int(r) for r in self.rows))

    def __len__(self) -> int:
        return len(self.rows)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.rows, dtype=np.int64)

    def validate(self, width: int, height: int, source: str = "ground truth") -> "GroundTruth":
        """
        Raises:
            MalformedGroundTruth: Wrong column count or a row outside the image.
        """
        if len(self.rows) != width:
            raise MalformedGroundTruth(f"{source}: {len(self.rows)} columns, image has {width}")
        bad = [r for r in self.rows if not 0 <= r < height]
        if bad:
            raise MalformedGroundTruth(f"{source}: row {bad[0]} outside image height {height}")
        return self

    def to_csv(self) -> str:
        return ",".join(str(r) for r in self.rows) + "\n"

    @classmethod
    def from_csv(cls, text: str, source: str = "ground truth") -> "GroundTruth":
        line = text.strip()
        if not line:
            raise MalformedGroundTruth(f"{source}: empty file")
        try:
            return cls(tuple(int(v) for v in line.split(",")))
        except ValueError as e:
            raise MalformedGroundTruth(f"{source}: {e}") from e

    @classmethod
    def from_path(cls, path: SkylinePath) -> "GroundTruth":
        return cls(path.rows)


def read_ground_truth(path: Union[str, Path]) -> GroundTruth:
    path = as_path(path)
    return GroundTruth.from_csv(path.read_text(), source=path.name)


def _rows(value: PathLike) -> np.ndarray:
    if isinstance(value, (SkylinePath, GroundTruth)):
        return value.as_array()
    return np.asarray(value, dtype=np.int64)


def _paired(pred: PathLike, gt: PathLike) -> Tuple[np.ndarray, np.ndarray]:
    p, g = _rows(pred), _rows(gt)
    if p.shape != g.shape:
        raise LengthMismatch(f"prediction has {p.size} columns, ground truth has {g.size}")
    if p.size == 0:
        raise EmptyInput("cannot score an empty skyline")
    return p, g


def average_absolute_error(pred: PathLike, gt: PathLike) -> float:
    """Mean per-column |pred - gt| in pixels."""
    p, g = _paired(pred, gt)
    return float(np.abs(p - g).sum() / p.size)


def segmentation_accuracy(pred: PathLike, gt: PathLike, height: int) -> float:
    """
    Fraction of pixels whose sky / non-sky label agrees. Rows above the
    skyline are sky; the skyline row itself and everything below are not.
    """
    p, g = _paired(pred, gt)
    if height < 1 or min(p.min(), g.min()) < 0 or max(p.max(), g.max()) >= height:
        raise LengthMismatch(f"skyline rows must lie in [0, {height})")
    mislabeled = int(np.abs(p - g).sum())
    total = height * p.size
    return (total - mislabeled) / total


def error_histogram(errors: Sequence[float], bin_width: float = 0.5, overflow: float = 10.0) -> List[float]:
    """
    Normalized histogram of right-open bins [k*w, (k+1)*w) up to `overflow`,
    plus a final bin collecting everything >= `overflow`.
    """
    values = np.asarray(errors, dtype=np.float64)
    regular = int(math.ceil(overflow / bin_width))
    index = np.minimum(np.floor(values / bin_width).astype(np.int64), regular)
    index[values >= overflow] = regular
    counts = np.bincount(index, minlength=regular + 1).astype(np.float64)
    return (counts / counts.sum()).tolist()


@dataclass
class EvalReport:
    per_image: Dict[str, float]
    mean: float
    std: float
    min: float
    max: float
    histogram: List[float]
    bin_width: float = 0.5
    fraction_below: float = 0.0
    good_threshold: float = 4.0
    segmentation: Optional[Dict[str, float]] = None

    @property
    def mean_segmentation(self) -> Optional[float]:
        if not self.segmentation:
            return None
        return float(np.mean(list(self.segmentation.values())))

    def to_dict(self) -> dict:
        data = {
            "per_image": self.per_image,
            "mean": self.mean,
            "std": self.std,
            "min": self.min,
            "max": self.max,
            "histogram": self.histogram,
            "bin_width": self.bin_width,
            "fraction_below": self.fraction_below,
            "good_threshold": self.good_threshold,
        }
        if self.segmentation is not None:
            data["segmentation"] = self.segmentation
            data["mean_segmentation"] = self.mean_segmentation
        return data

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "EvalReport":
        return cls(
            per_image={k: float(v) for k, v in data["per_image"].items()},
            mean=float(data["mean"]),
            std=float(data["std"]),
            min=float(data["min"]),
            max=float(data["max"]),
            histogram=[float(v) for v in data["histogram"]],
            bin_width=float(data.get("bin_width", 0.5)),
            fraction_below=float(data.get("fraction_below", 0.0)),
            good_threshold=float(data.get("good_threshold", 4.0)),
            segmentation=data.get("segmentation"),
        )

    def format_table(self, title: str = "A_err (px)") -> str:
        lines = [f"{'image':<32} {title:>12}"]
        for name, value in self.per_image.items():
            extra = ""
            if self.segmentation and name in self.segmentation:
                extra = f"  seg={self.segmentation[name]:.4f}"
            lines.append(f"{name:<32} {value:>12.4f}{extra}")
        lines.append("-" * 45)
        lines.append(f"{'mu':<8}{self.mean:>10.4f} {'sigma':<8}{self.std:>10.4f}")
        lines.append(f"{'min':<8}{self.min:>10.4f} {'max':<8}{self.max:>10.4f}")
        lines.append(f"below {self.good_threshold:g} px: {100.0 * self.fraction_below:.1f}% of images")
        if self.mean_segmentation is not None:
            lines.append(f"segmentation accuracy: {self.mean_segmentation:.4f}")
        return "\n".join(lines)


def aggregate(
    errors: Union[Sequence[float], Dict[str, float]],
    config: Optional[EvalConfig] = None,
    segmentation: Optional[Dict[str, float]] = None,
) -> EvalReport:
    """
    Mean, population standard deviation, min, max and histogram of per-image
    errors.

    Raises:
        EmptyInput: If no errors are given.
    """
    config = config or EvalConfig()
    if isinstance(errors, dict):
        per_image = {str(k): float(v) for k, v in errors.items()}
    else:
        per_image = {str(i): float(v) for i, v in enumerate(errors)}
    if not per_image:
        raise EmptyInput("cannot aggregate an empty error list")
    values = np.fromiter(per_image.values(), dtype=np.float64)
    return EvalReport(
        per_image=per_image,
        mean=float(values.mean()),
        std=float(values.std(ddof=0)),
        min=float(values.min()),
        max=float(values.max()),
        histogram=error_histogram(values, config.bin_width, config.overflow),
        bin_width=config.bin_width,
        fraction_below=float(np.mean(values < config.good_threshold)),
        good_threshold=config.good_threshold,
        segmentation=segmentation,
    )


@dataclass(frozen=True, eq=False)
class LabeledImage:
    name: str
    image: RgbImage
    truth: GroundTruth
    path: Path


@dataclass
class Dataset:
    """Image / ground-truth pairs plus the images skipped for lack of a CSV."""

    pairs: List[LabeledImage] = field(default_factory=list)
    skipped: List[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self) -> Iterator[LabeledImage]:
        return iter(self.pairs)

    def __getitem__(self, index: int) -> LabeledImage:
        return self.pairs[index]


def load_dataset(root: Union[str, Path]) -> Dataset:
    """
    Pair every image in `root` with `<stem>.csv`.

    Raises:
        MissingDirectory: If `root` is not a directory.
        MalformedGroundTruth: If a CSV has the wrong column count or rows.
    """
    root = as_path(root)
    if not root.is_dir():
        raise MissingDirectory(f"dataset directory {root} does not exist")
    dataset = Dataset()
    for image_path in list_images(root):
        csv_path = image_path.with_suffix(".csv")
        if not csv_path.is_file():
            dataset.skipped.append(image_path.name)
            continue
        image = load_rgb(image_path)
        truth = read_ground_truth(csv_path).validate(image.width, image.height, csv_path.name)
        dataset.pairs.append(LabeledImage(image_path.stem, image, truth, image_path))
    if dataset.skipped:
        logger.warning(
            f"Skipped {len(dataset.skipped)} image(s) without ground truth: {', '.join(dataset.skipped)}"
        )
    return dataset
