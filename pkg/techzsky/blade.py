"""
Learned filter bank: Gram accumulation, per-bucket regularized least squares
and spatially varying, edge-gated inference.

Each bucket k owns an (n^2 + 1) x (n^2 + 1) Gram matrix built from augmented
vectors (patch, target). Its top-left block is A^T A, the last column A^T b
and the corner b^T b, so solving filter k only ever touches bucket k.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import TYPE_CHECKING, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg

from techzsky.edges import CannyConfig, EdgeMap, canny_with
from techzsky.errors import (
    BankFormatError,
    BankVersionMismatch,
    BadPatchSize,
    ConfigError,
    ConfigMismatch,
    DimensionMismatch,
    InsufficientNegatives,
    SolveFailure,
)
from techzsky.imagecore import GrayImage, Patch, RgbImage, extract_patches, normalize01, to_grayscale
from techzsky.logger import Logger
from techzsky.tensor import (
    FeatureField,
    QuantizerConfig,
    TensorConfig,
    bucket_field,
    features_of,
)

if TYPE_CHECKING:
    from techzsky.dp import SkylinePath
    from techzsky.evaluate import GroundTruth

logger = Logger("blade")

BANK_MAGIC = b"RDGL"
BANK_VERSION = 1
NORMALIZATION_MODES = ("clamp", "minmax")


@dataclass(frozen=True)
class BladeConfig:
    side: int = 7
    smoothness_weight: float = 1e-2
    ridge_weight: float = 1e-4
    scale_by_count: bool = True
    min_samples: Optional[int] = None
    positive_target: float = 1.0
    negative_target: float = 0.0
    exclusion_margin: int = 10
    normalization: str = "clamp"

    def __post_init__(self) -> None:
        if isinstance(self.side, bool) or not isinstance(self.side, (int, np.integer)):
            raise BadPatchSize(f"blade.side must be an integer, got {self.side!r}")
        if self.side < 3 or self.side % 2 == 0:
            raise BadPatchSize(f"blade.side must be odd and >= 3, got {self.side}")
        if self.smoothness_weight < 0 or self.ridge_weight <= 0:
            raise ConfigError("blade needs smoothness_weight >= 0 and ridge_weight > 0")
        if self.min_samples is not None and self.min_samples < 1:
            raise ConfigError(f"blade.min_samples must be >= 1, got {self.min_samples}")
        if self.exclusion_margin < 0:
            raise ConfigError(f"blade.exclusion_margin must be >= 0, got {self.exclusion_margin}")
        if self.normalization not in NORMALIZATION_MODES:
            raise ConfigError(
                f"blade.normalization must be one of {NORMALIZATION_MODES}, got {self.normalization!r}"
            )

    @property
    def taps(self) -> int:
        return self.side * self.side

    @property
    def effective_min_samples(self) -> int:
        return self.min_samples if self.min_samples is not None else 2 * self.taps

    @property
    def regularizer(self) -> "Regularizer":
        return Regularizer(self.smoothness_weight, self.ridge_weight, self.scale_by_count)


@dataclass(frozen=True)
class TrainingSample:
    patch: Patch
    target: float
    bucket: int


@dataclass(frozen=True, eq=False)
class SampleBatch:
    """Column-stacked training samples: patches (S, n^2), targets (S,), buckets (S,)."""

    patches: np.ndarray
    targets: np.ndarray
    buckets: np.ndarray

    def __len__(self) -> int:
        return len(self.targets)

    def samples(self, side: int) -> List[TrainingSample]:
        return [
            TrainingSample(Patch(side, self.patches[i].copy()), float(self.targets[i]), int(self.buckets[i]))
            for i in range(len(self))
        ]

    @classmethod
    def from_samples(cls, samples: Sequence[TrainingSample], taps: int) -> "SampleBatch":
        if not samples:
            return cls(np.zeros((0, taps)), np.zeros(0), np.zeros(0, dtype=np.int64))
        return cls(
            np.stack([s.patch.values for s in samples]),
            np.array([s.target for s in samples], dtype=np.float64),
            np.array([s.bucket for s in samples], dtype=np.int64),
        )


@lru_cache(maxsize=8)
def laplacian_matrix(side: int) -> np.ndarray:
    """
    Graph Laplacian of the 4-connected tap grid, (n^2) x (n^2).

    Constant filters lie in its null space, so L^T L only penalizes roughness.
    """
    taps = side * side
    lap = np.zeros((taps, taps))
    for r in range(side):
        for c in range(side):
            i = r * side + c
            for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                rr, cc = r + dr, c + dc
                if 0 <= rr < side and 0 <= cc < side:
                    lap[i, rr * side + cc] = 1.0
                    lap[i, i] -= 1.0
    lap.setflags(write=False)
    return lap


@dataclass(frozen=True)
class Regularizer:
    smoothness_weight: float = 1e-2
    ridge_weight: float = 1e-4
    scale_by_count: bool = False

    def __post_init__(self) -> None:
        if self.smoothness_weight < 0 or self.ridge_weight < 0:
            raise ConfigError("regularizer weights must be non-negative")

    def matrix(self, side: int, count: int = 1) -> np.ndarray:
        """Q = ls * L^T L + lr * I, both weights multiplied by `count` when scaling."""
        scale = float(count) if self.scale_by_count else 1.0
        lap = laplacian_matrix(side)
        q = (self.smoothness_weight * scale) * (lap.T @ lap)
        q[np.diag_indices_from(q)] += self.ridge_weight * scale
        return q


class GramAccumulator:
    """
    Per-bucket Gram matrices of augmented (patch, target) vectors.

    Single writer; shard across workers and combine with `merge`.
    """

    def __init__(self, side: int, quantizer: QuantizerConfig) -> None:
        if side < 3 or side % 2 == 0:
            raise BadPatchSize(f"filter side must be odd and >= 3, got {side}")
        self.side = side
        self.quantizer = quantizer
        self.taps = side * side
        self.gram = np.zeros((quantizer.bucket_count, self.taps + 1, self.taps + 1))
        self.counts = np.zeros(quantizer.bucket_count, dtype=np.int64)

    @property
    def bucket_count(self) -> int:
        return self.quantizer.bucket_count

    def blocks(self, bucket: int) -> Tuple[np.ndarray, np.ndarray, float]:
        """`(A^T A, A^T b, b^T b)` of one bucket."""
        g = self.gram[bucket]
        n = self.taps
        return g[:n, :n], g[:n, n], float(g[n, n])

    def copy(self) -> "GramAccumulator":
        other = GramAccumulator(self.side, self.quantizer)
        other.gram = self.gram.copy()
        other.counts = self.counts.copy()
        return other

    def add(self, sample: TrainingSample) -> "GramAccumulator":
        if sample.patch.values.shape != (self.taps,):
            raise DimensionMismatch(
                f"patch has {sample.patch.values.size} taps, accumulator expects {self.taps}"
            )
        if not 0 <= sample.bucket < self.bucket_count:
            raise DimensionMismatch(f"bucket {sample.bucket} outside [0, {self.bucket_count})")
        vector = np.append(sample.patch.values, sample.target)
        self.gram[sample.bucket] += np.outer(vector, vector)
        self.counts[sample.bucket] += 1
        return self

    def add_batch(self, batch: SampleBatch) -> "GramAccumulator":
        """Accumulate a batch; equal to adding its samples one by one (up to rounding)."""
        if len(batch) == 0:
            return self
        if batch.patches.shape[1] != self.taps:
            raise DimensionMismatch(
                f"patches have {batch.patches.shape[1]} taps, accumulator expects {self.taps}"
            )
        if batch.buckets.min() < 0 or batch.buckets.max() >= self.bucket_count:
            raise DimensionMismatch("batch holds bucket indices outside the quantizer range")
        vectors = np.hstack([batch.patches, batch.targets[:, None]])
        for bucket in np.unique(batch.buckets):
            rows = vectors[batch.buckets == bucket]
            self.gram[bucket] += rows.T @ rows
            self.counts[bucket] += len(rows)
        return self


def accumulate(acc: GramAccumulator, sample: TrainingSample) -> GramAccumulator:
    """G[bucket] += v v^T with v = (patch, target); updates `acc` in place and returns it."""
    return acc.add(sample)


def merge(a: GramAccumulator, b: GramAccumulator) -> GramAccumulator:
    """
    Sum two accumulators bucket by bucket into a new accumulator.

    Raises:
        ConfigMismatch: If filter sides or quantizers differ.
    """
    if a.side != b.side or a.quantizer != b.quantizer:
        raise ConfigMismatch("cannot merge accumulators with different filter side or quantizer")
    merged = GramAccumulator(a.side, a.quantizer)
    merged.gram = a.gram + b.gram
    merged.counts = a.counts + b.counts
    return merged


def delta_filter(side: int) -> np.ndarray:
    h = np.zeros(side * side)
    h[(side * side - 1) // 2] = 1.0
    return h


@dataclass(frozen=True, eq=False)
class FilterBank:
    side: int
    quantizer: QuantizerConfig
    filters: np.ndarray
    trained_mask: np.ndarray
    tensor_window: int = 7

    def __post_init__(self) -> None:
        # coefficients are held at the float32 precision they are stored with
        filters = np.asarray(self.filters, dtype=np.float32).astype(np.float64)
        expected = (self.quantizer.bucket_count, self.side * self.side)
        if filters.shape != expected:
            raise DimensionMismatch(f"filter bank must be {expected}, got {filters.shape}")
        if not np.all(np.isfinite(filters)):
            raise BankFormatError("filter bank holds non-finite coefficients")
        mask = np.asarray(self.trained_mask, dtype=bool)
        if mask.shape != (self.quantizer.bucket_count,):
            raise DimensionMismatch("trained_mask must hold one flag per bucket")
        filters.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "filters", filters)
        object.__setattr__(self, "trained_mask", mask)

    @property
    def bucket_count(self) -> int:
        return self.quantizer.bucket_count

    @property
    def trained_count(self) -> int:
        return int(self.trained_mask.sum())

    @classmethod
    def uniform(
        cls, side: int, quantizer: QuantizerConfig, h: Optional[np.ndarray] = None, tensor_window: int = 7
    ) -> "FilterBank":
        """Bank holding the same filter (center-tap delta by default) in every bucket."""
        h = delta_filter(side) if h is None else np.asarray(h, dtype=np.float64)
        filters = np.tile(h, (quantizer.bucket_count, 1))
        return cls(side, quantizer, filters, np.zeros(quantizer.bucket_count, dtype=bool), tensor_window)

    def to_bytes(self) -> bytes:
        """
        Serialize as little-endian: magic, version, side, tensor window, the
        three bin counts, both edge lists (u16 count + float32 values), K * n^2
        float32 coefficients in bucket order, K trained-mask bytes.
        """
        q = self.quantizer
        parts = [
            BANK_MAGIC,
            struct.pack(
                "<6H",
                BANK_VERSION,
                self.side,
                self.tensor_window,
                q.orientation_bins,
                q.strength_bins,
                q.coherence_bins,
            ),
            struct.pack("<H", len(q.strength_edges)),
            np.asarray(q.strength_edges, dtype="<f4").tobytes(),
            struct.pack("<H", len(q.coherence_edges)),
            np.asarray(q.coherence_edges, dtype="<f4").tobytes(),
            self.filters.astype("<f4").tobytes(),
            self.trained_mask.astype(np.uint8).tobytes(),
        ]
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, payload: bytes) -> "FilterBank":
        """
        Parse a bank file. Coefficients come back as float32 values, so a loaded
        bank re-serializes to identical bytes.

        Raises:
            BankFormatError: Bad magic, truncated or inconsistent payload.
            BankVersionMismatch: Unsupported version field.
        """
        view = memoryview(payload)
        if len(payload) < 16 or bytes(view[:4]) != BANK_MAGIC:
            raise BankFormatError("not a filter bank file (bad magic)")
        version, side, window, o_bins, s_bins, c_bins = struct.unpack_from("<6H", payload, 4)
        if version != BANK_VERSION:
            raise BankVersionMismatch(f"bank version {version} is not supported (expected {BANK_VERSION})")
        offset = 16
        try:
            strength_edges, offset = _read_edges(payload, offset)
            coherence_edges, offset = _read_edges(payload, offset)
            quantizer = QuantizerConfig(o_bins, strength_edges, coherence_edges)
        except (struct.error, ValueError) as e:
            raise BankFormatError(f"corrupt bank header: {e}") from e
        if quantizer.strength_bins != s_bins or quantizer.coherence_bins != c_bins:
            raise BankFormatError("bank bin counts disagree with its edge lists")

        k = quantizer.bucket_count
        coeff_bytes = k * side * side * 4
        if len(payload) != offset + coeff_bytes + k:
            raise BankFormatError(
                f"bank payload is {len(payload)} bytes, expected {offset + coeff_bytes + k}"
            )
        filters = np.frombuffer(payload, dtype="<f4", count=k * side * side, offset=offset)
        mask = np.frombuffer(payload, dtype=np.uint8, count=k, offset=offset + coeff_bytes)
        return cls(
            side=side,
            quantizer=quantizer,
            filters=filters.astype(np.float64).reshape(k, side * side),
            trained_mask=mask.astype(bool),
            tensor_window=window,
        )


def _read_edges(payload: bytes, offset: int) -> Tuple[Tuple[float, ...], int]:
    (count,) = struct.unpack_from("<H", payload, offset)
    offset += 2
    if count == 0:
        return (), offset
    edges = np.frombuffer(payload, dtype="<f4", count=count, offset=offset)
    return tuple(float(e) for e in edges), offset + 4 * count


def solve_bucket(acc: GramAccumulator, reg: Regularizer, bucket: int) -> np.ndarray:
    """
    Float64 solution of (Q + A^T A) h = A^T b for one bucket.

    Raises:
        SolveFailure: If the system is not positive definite.
    """
    ata, atb, _ = acc.blocks(bucket)
    system = reg.matrix(acc.side, int(acc.counts[bucket])) + ata
    try:
        factor = scipy.linalg.cho_factor(system, lower=False, check_finite=True)
        h = scipy.linalg.cho_solve(factor, atb)
    except (np.linalg.LinAlgError, ValueError) as e:
        raise SolveFailure(f"bucket {bucket} system is singular: {e}") from e
    if not np.all(np.isfinite(h)):
        raise SolveFailure(f"bucket {bucket} produced non-finite coefficients")
    return h


def solve_bank(
    acc: GramAccumulator, reg: Regularizer, min_samples: int, tensor_window: int = 7
) -> FilterBank:
    """
    Solve (Q + A^T A) h = A^T b per bucket with a Cholesky factorization.

    Buckets with fewer than `min_samples` samples get the fallback filter: the
    mean of all trained filters, or the center-tap delta when none trained.

    Raises:
        SolveFailure: If a bucket's system is not positive definite.
    """
    if not reg.ridge_weight > 0:
        raise ConfigError("solve_bank needs ridge_weight > 0")
    taps = acc.taps
    filters = np.zeros((acc.bucket_count, taps))
    trained = acc.counts >= max(1, min_samples)
    for bucket in np.flatnonzero(trained):
        filters[bucket] = solve_bucket(acc, reg, int(bucket))

    fallback = filters[trained].mean(axis=0) if trained.any() else delta_filter(acc.side)
    filters[~trained] = fallback
    logger.debug(f"Solved {int(trained.sum())}/{acc.bucket_count} buckets")
    return FilterBank(acc.side, acc.quantizer, filters, trained, tensor_window)


@dataclass(frozen=True, eq=False)
class ScoreMap:
    """Skyline confidence per edge pixel; NaN marks absent (non-edge) pixels."""

    scores: np.ndarray

    @property
    def mask(self) -> np.ndarray:
        return ~np.isnan(self.scores)

    def filled(self, value: float = 0.0) -> np.ndarray:
        return np.where(self.mask, self.scores, value)


@dataclass(frozen=True, eq=False)
class PixelContext:
    """Per-image quantities shared by sample collection and inference."""

    gray: GrayImage
    features: FeatureField
    buckets: np.ndarray

    @classmethod
    def build(cls, img: RgbImage, tensor: TensorConfig, gray: Optional[GrayImage] = None) -> "PixelContext":
        features = features_of(img, tensor)
        gray = gray if gray is not None else to_grayscale(img)
        return cls(gray, features, bucket_field(features, tensor.quantizer))


def _row_array(rows) -> np.ndarray:
    # SkylinePath and GroundTruth both expose their rows through as_array()
    if hasattr(rows, "as_array"):
        return np.asarray(rows.as_array(), dtype=np.int64)
    return np.asarray(rows, dtype=np.int64)


def collect_sample_batch(
    img: RgbImage,
    gt_rows: Union[Sequence[int], "SkylinePath", "GroundTruth"],
    canny_cfg: CannyConfig,
    tensor: TensorConfig,
    side: int,
    rng_seed,
    exclusion_margin: int = 10,
    positive_target: float = 1.0,
    negative_target: float = 0.0,
    context: Optional[PixelContext] = None,
    edges: Optional[EdgeMap] = None,
) -> SampleBatch:
    """
    Positive samples along the ground-truth skyline (one per column) and as
    many negatives drawn without replacement from edge pixels farther than
    `exclusion_margin` rows from it.
    """
    gt = _row_array(gt_rows)
    if gt.shape != (img.width,):
        raise DimensionMismatch(f"ground truth has {gt.size} columns, image has {img.width}")
    context = context or PixelContext.build(img, tensor)
    edges = edges or canny_with(context.gray, canny_cfg)

    pos_cols = np.arange(img.width)
    pos_rows = gt

    edge_rows, edge_cols = np.nonzero(edges.mask)
    eligible = np.abs(edge_rows - gt[edge_cols]) > exclusion_margin
    pool_rows, pool_cols = edge_rows[eligible], edge_cols[eligible]

    rng = np.random.default_rng(rng_seed)
    wanted = len(pos_rows)
    if len(pool_rows) < wanted:
        message = f"only {len(pool_rows)} eligible negative edge pixels for {wanted} positives"
        logger.warning(message)
        warnings.warn(message, InsufficientNegatives, stacklevel=2)
        picked = rng.permutation(len(pool_rows))
    else:
        picked = rng.choice(len(pool_rows), size=wanted, replace=False)
    neg_rows, neg_cols = pool_rows[picked], pool_cols[picked]

    rows = np.concatenate([pos_rows, neg_rows])
    cols = np.concatenate([pos_cols, neg_cols])
    targets = np.concatenate(
        [np.full(len(pos_rows), positive_target), np.full(len(neg_rows), negative_target)]
    )
    return SampleBatch(
        patches=extract_patches(context.gray, rows, cols, side),
        targets=targets,
        buckets=context.buckets[rows, cols].astype(np.int64),
    )


def collect_samples(
    img: RgbImage,
    gt_rows: Union[Sequence[int], "SkylinePath", "GroundTruth"],
    canny_cfg: CannyConfig,
    quantizer: QuantizerConfig,
    side: int,
    rng_seed,
    exclusion_margin: int = 10,
    window: int = 7,
    weight_sigma: float = 1.5,
) -> List[TrainingSample]:
    """List form of `collect_sample_batch` (positives first, then negatives)."""
    tensor = TensorConfig(window=window, weight_sigma=weight_sigma, quantizer=quantizer)
    batch = collect_sample_batch(img, gt_rows, canny_cfg, tensor, side, rng_seed, exclusion_margin)
    return batch.samples(side)


def raw_scores(bank: FilterBank, context: PixelContext, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    patches = extract_patches(context.gray, rows, cols, bank.side)
    chosen = bank.filters[context.buckets[rows, cols]]
    return np.einsum("ij,ij->i", chosen, patches)


def predict(
    bank: FilterBank,
    img: RgbImage,
    edges: EdgeMap,
    weight_sigma: float = 1.5,
    normalization: str = "clamp",
    context: Optional[PixelContext] = None,
) -> ScoreMap:
    """
    Score every edge pixel with the filter its tensor bucket selects.

    Raw dot products are clamped to [0, 1] ("clamp") or min-max normalized over
    the image's edge pixels ("minmax"). Non-edge pixels stay absent.
    """
    if normalization not in NORMALIZATION_MODES:
        raise ConfigError(f"unknown score normalization {normalization!r}")
    if edges.mask.shape != (img.height, img.width):
        raise DimensionMismatch("edge map and image sizes differ")
    scores = np.full((img.height, img.width), np.nan)
    rows, cols = np.nonzero(edges.mask)
    if len(rows) == 0:
        return ScoreMap(scores)

    if context is None:
        tensor = TensorConfig(bank.tensor_window, weight_sigma, bank.quantizer)
        context = PixelContext.build(img, tensor)
    values = raw_scores(bank, context, rows, cols)
    if normalization == "clamp":
        values = np.clip(values, 0.0, 1.0)
    else:
        values = normalize01(values)
    scores[rows, cols] = values
    return ScoreMap(scores)
