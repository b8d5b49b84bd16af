import struct

import numpy as np
import pytest

from conftest import step_scene
from techzsky.blade import (
    BANK_MAGIC,
    FilterBank,
    GramAccumulator,
    PixelContext,
    Regularizer,
    SampleBatch,
    TrainingSample,
    accumulate,
    collect_sample_batch,
    collect_samples,
    delta_filter,
    laplacian_matrix,
    merge,
    predict,
    solve_bank,
    solve_bucket,
)
from techzsky.config import PipelineConfig
from techzsky.dp import SkylinePath
from techzsky.edges import CannyConfig, EdgeMap
from techzsky.errors import (
    BankFormatError,
    BankVersionMismatch,
    ConfigMismatch,
    DimensionMismatch,
    InsufficientNegatives,
)
from techzsky.evaluate import load_dataset
from techzsky.imagecore import Patch, RgbImage, extract_patch, to_grayscale
from techzsky.synth import synth_generate
from techzsky.tensor import QuantizerConfig, TensorConfig

SMALL_Q = QuantizerConfig(orientation_bins=2, strength_edges=(0.1,), coherence_edges=(0.5,))


def random_samples(rng, count, side=3, buckets=8):
    taps = side * side
    return [
        TrainingSample(Patch(side, rng.random(taps)), float(rng.integers(0, 2)), int(rng.integers(0, buckets)))
        for _ in range(count)
    ]


def filled(samples, side=3, quantizer=SMALL_Q):
    acc = GramAccumulator(side, quantizer)
    for s in samples:
        accumulate(acc, s)
    return acc


class TestGramAccumulator:
    def test_zero_patch_unit_target(self):
        acc = filled([TrainingSample(Patch(3, np.zeros(9)), 1.0, 2)])
        expected = np.zeros((10, 10))
        expected[9, 9] = 1.0
        np.testing.assert_array_equal(acc.gram[2], expected)
        assert acc.counts.tolist() == [0, 0, 1, 0, 0, 0, 0, 0]

    def test_same_sample_twice_doubles(self, rng):
        sample = random_samples(rng, 1)[0]
        once = filled([sample])
        twice = filled([sample, sample])
        np.testing.assert_allclose(twice.gram, 2 * once.gram, atol=1e-15)

    def test_blocks_match_direct_assembly(self, rng):
        samples = random_samples(rng, 500)
        acc = filled(samples)
        for bucket in range(8):
            rows = [s for s in samples if s.bucket == bucket]
            a = np.array([s.patch.values for s in rows])
            b = np.array([s.target for s in rows])
            ata, atb, btb = acc.blocks(bucket)
            np.testing.assert_allclose(ata, a.T @ a, atol=1e-10)
            np.testing.assert_allclose(atb, a.T @ b, atol=1e-10)
            assert btb == pytest.approx(b @ b, abs=1e-10)
            np.testing.assert_allclose(acc.gram[bucket], acc.gram[bucket].T, atol=1e-12)

    def test_batch_matches_single_adds(self, rng):
        samples = random_samples(rng, 200)
        batched = GramAccumulator(3, SMALL_Q).add_batch(SampleBatch.from_samples(samples, 9))
        np.testing.assert_allclose(batched.gram, filled(samples).gram, atol=1e-10)
        np.testing.assert_array_equal(batched.counts, filled(samples).counts)

    def test_order_independence(self, rng):
        samples = random_samples(rng, 300)
        shuffled = [samples[i] for i in rng.permutation(len(samples))]
        np.testing.assert_allclose(filled(samples).gram, filled(shuffled).gram, atol=1e-12)

    def test_wrong_patch_size(self):
        acc = GramAccumulator(3, SMALL_Q)
        with pytest.raises(DimensionMismatch):
            acc.add(TrainingSample(Patch(5, np.zeros(25)), 1.0, 0))

    def test_bucket_out_of_range(self):
        acc = GramAccumulator(3, SMALL_Q)
        with pytest.raises(DimensionMismatch):
            acc.add(TrainingSample(Patch(3, np.zeros(9)), 1.0, 8))


class TestMerge:
    def test_empty_is_identity(self, rng):
        acc = filled(random_samples(rng, 40))
        merged = merge(acc, GramAccumulator(3, SMALL_Q))
        np.testing.assert_array_equal(merged.gram, acc.gram)
        np.testing.assert_array_equal(merged.counts, acc.counts)

    def test_commutative(self, rng):
        a = filled(random_samples(rng, 30))
        b = filled(random_samples(rng, 30))
        np.testing.assert_array_equal(merge(a, b).gram, merge(b, a).gram)

    def test_shards_equal_sequential(self, rng):
        samples = random_samples(rng, 500)
        shards = [filled(samples[i::3]) for i in range(3)]
        merged = merge(merge(shards[0], shards[1]), shards[2])
        np.testing.assert_allclose(merged.gram, filled(samples).gram, atol=1e-12)
        np.testing.assert_array_equal(merged.counts, filled(samples).counts)

    def test_mismatch(self):
        with pytest.raises(ConfigMismatch):
            merge(GramAccumulator(3, SMALL_Q), GramAccumulator(5, SMALL_Q))
        with pytest.raises(ConfigMismatch):
            merge(GramAccumulator(3, SMALL_Q), GramAccumulator(3, QuantizerConfig()))


class TestRegularizer:
    def test_laplacian_null_space(self):
        lap = laplacian_matrix(5)
        np.testing.assert_allclose(lap @ np.ones(25), 0.0, atol=1e-15)
        assert not lap.flags.writeable

    def test_positive_definite(self):
        q = Regularizer(1e-2, 1e-4).matrix(7)
        np.testing.assert_allclose(q, q.T)
        assert np.linalg.eigvalsh(q).min() > 0

    def test_count_scaling(self):
        reg = Regularizer(1e-2, 1e-4, scale_by_count=True)
        np.testing.assert_allclose(reg.matrix(3, 10), 10 * reg.matrix(3, 1))


class TestSolve:
    def test_sherman_morrison(self, rng):
        p = rng.random(9)
        acc = filled([TrainingSample(Patch(3, p), 1.0, 0)])
        lam = 0.3
        h = solve_bucket(acc, Regularizer(0.0, lam), 0)
        np.testing.assert_allclose(h, p / (lam + p @ p), atol=1e-10)

    def test_empty_bucket_gets_fallback(self, rng):
        samples = [TrainingSample(Patch(3, rng.random(9)), 1.0, 0) for _ in range(30)]
        bank = solve_bank(filled(samples), Regularizer(1e-2, 1e-4), min_samples=1)
        assert bank.trained_mask.tolist() == [True] + [False] * 7
        for bucket in range(1, 8):
            np.testing.assert_array_equal(bank.filters[bucket], bank.filters[0])

    def test_nothing_trained_is_delta(self):
        bank = solve_bank(GramAccumulator(3, SMALL_Q), Regularizer(), min_samples=18)
        assert bank.trained_count == 0
        np.testing.assert_array_equal(bank.filters, np.tile(delta_filter(3), (8, 1)))

    def test_min_samples_threshold(self, rng):
        samples = [TrainingSample(Patch(3, rng.random(9)), 1.0, 1) for _ in range(17)]
        bank = solve_bank(filled(samples), Regularizer(), min_samples=18)
        assert not bank.trained_mask[1]

    def test_residual_on_synthetic_training(self, tmp_path):
        synth_generate(5, 64, 64, seed=11, out_dir=tmp_path)
        config = PipelineConfig()
        acc = GramAccumulator(config.blade.side, config.quantizer)
        for index, item in enumerate(load_dataset(tmp_path)):
            acc.add_batch(
                collect_sample_batch(
                    item.image, item.truth.rows, config.canny, config.tensor, config.blade.side, [0, index]
                )
            )
        reg = config.blade.regularizer
        solved = 0
        for bucket in np.flatnonzero(acc.counts):
            h = solve_bucket(acc, reg, int(bucket))
            ata, atb, _ = acc.blocks(bucket)
            system = reg.matrix(acc.side, int(acc.counts[bucket])) + ata
            residual = np.linalg.norm(system @ h - atb)
            assert residual <= 1e-8 * (1 + np.linalg.norm(atb))
            solved += 1
        assert solved > 0

    def test_stationary_point(self, rng):
        samples = [TrainingSample(Patch(3, rng.random(9)), float(rng.integers(0, 2)), 0) for _ in range(100)]
        reg = Regularizer(1e-2, 1e-4, scale_by_count=True)
        acc = filled(samples)
        h = solve_bucket(acc, reg, 0)
        x = np.array([s.patch.values for s in samples])
        u = np.array([s.target for s in samples])
        q = reg.matrix(3, len(samples))

        def loss(w):
            r = u - x @ w
            return r @ r + w @ q @ w

        best = loss(h)
        for i in range(9):
            for step in (1e-4, -1e-4):
                moved = h.copy()
                moved[i] += step
                assert loss(moved) >= best

    def test_shrinkage(self, rng):
        samples = [TrainingSample(Patch(3, rng.random(9)), 1.0, 0) for _ in range(60)]
        acc = filled(samples)
        norms = [np.linalg.norm(solve_bucket(acc, Regularizer(0.0, lam), 0)) for lam in (1e-2, 1.0, 1e2)]
        assert norms[0] > norms[1] > norms[2]
        assert np.abs(solve_bucket(acc, Regularizer(0.0, 1e8), 0)).max() < 1e-5

    def test_separability(self, rng):
        samples = random_samples(rng, 400)
        only_three = [s for s in samples if s.bucket == 3]
        reg = Regularizer()
        full = solve_bucket(filled(samples), reg, 3)
        alone = solve_bucket(filled(only_three), reg, 3)
        np.testing.assert_array_equal(full, alone)


class TestBankFile:
    def test_default_size(self):
        bank = FilterBank.uniform(7, QuantizerConfig())
        payload = bank.to_bytes()
        assert len(payload) == 4 + 2 * 6 + 2 + 5 * 4 + 2 + 2 * 4 + 288 * 49 * 4 + 288
        assert payload[:4] == BANK_MAGIC

    def test_round_trip_is_bit_exact(self, rng):
        q = QuantizerConfig()
        mask = rng.random(q.bucket_count) < 0.5
        bank = FilterBank(7, q, rng.normal(size=(q.bucket_count, 49)), mask, tensor_window=9)
        payload = bank.to_bytes()
        loaded = FilterBank.from_bytes(payload)
        assert loaded.to_bytes() == payload
        assert loaded.tensor_window == 9
        np.testing.assert_array_equal(loaded.trained_mask, mask)
        np.testing.assert_array_equal(loaded.filters, bank.filters)

    def test_bad_version(self):
        payload = bytearray(FilterBank.uniform(3, SMALL_Q).to_bytes())
        struct.pack_into("<H", payload, 4, 2)
        with pytest.raises(BankVersionMismatch):
            FilterBank.from_bytes(bytes(payload))

    def test_bad_magic(self):
        payload = b"XXXX" + FilterBank.uniform(3, SMALL_Q).to_bytes()[4:]
        with pytest.raises(BankFormatError):
            FilterBank.from_bytes(payload)

    def test_truncated(self):
        payload = FilterBank.uniform(3, SMALL_Q).to_bytes()
        with pytest.raises(BankFormatError):
            FilterBank.from_bytes(payload[:-3])

    def test_non_finite_rejected(self):
        filters = np.zeros((8, 9))
        filters[0, 0] = np.nan
        with pytest.raises(BankFormatError):
            FilterBank(3, SMALL_Q, filters, np.zeros(8, dtype=bool))


class TestPredict:
    def test_empty_edges(self, rng):
        img = RgbImage(rng.random((8, 8, 3)))
        scores = predict(FilterBank.uniform(3, SMALL_Q), img, EdgeMap(np.zeros((8, 8), dtype=bool)))
        assert not scores.mask.any()

    def test_delta_bank_reads_center_pixel(self, rng):
        img = RgbImage(rng.random((10, 10, 3)))
        mask = rng.random((10, 10)) < 0.3
        scores = predict(FilterBank.uniform(5, QuantizerConfig()), img, EdgeMap(mask))
        gray = to_grayscale(img).data
        np.testing.assert_array_equal(scores.mask, mask)
        np.testing.assert_allclose(scores.scores[mask], np.clip(gray[mask], 0, 1), atol=1e-15)

    def test_matches_scalar_dot_products(self, rng):
        img = RgbImage(rng.random((10, 10, 3)))
        mask = rng.random((10, 10)) < 0.5
        q = QuantizerConfig()
        bank = FilterBank(3, q, rng.normal(scale=0.3, size=(q.bucket_count, 9)), np.ones(q.bucket_count, dtype=bool))
        context = PixelContext.build(img, TensorConfig(bank.tensor_window, 1.5, q))
        scores = predict(bank, img, EdgeMap(mask))
        for r, c in zip(*np.nonzero(mask)):
            patch = extract_patch(context.gray, (r, c), 3).values
            raw = float(bank.filters[context.buckets[r, c]] @ patch)
            assert scores.scores[r, c] == pytest.approx(min(max(raw, 0.0), 1.0), abs=1e-12)
        assert np.isnan(scores.scores[~mask]).all()

    def test_minmax_normalization(self, rng):
        img = RgbImage(rng.random((10, 10, 3)))
        mask = rng.random((10, 10)) < 0.5
        scores = predict(FilterBank.uniform(3, SMALL_Q), img, EdgeMap(mask), normalization="minmax")
        values = scores.scores[mask]
        assert values.min() == 0.0 and values.max() == 1.0


class TestCollectSamples:
    def test_one_positive_per_column(self, tiny_dataset):
        item = load_dataset(tiny_dataset / "train")[0]
        samples = collect_samples(item.image, item.truth.rows, CannyConfig(), QuantizerConfig(), 7, rng_seed=5)
        positives = [s for s in samples if s.target == 1.0]
        assert len(positives) == item.image.width
        assert all(s.patch.side == 7 for s in samples)

    def test_negatives_stay_away_from_skyline(self, tiny_dataset):
        item = load_dataset(tiny_dataset / "train")[0]
        config = PipelineConfig()
        batch = collect_sample_batch(item.image, item.truth.rows, config.canny, config.tensor, 7, rng_seed=5)
        width = item.image.width
        assert len(batch) <= 2 * width
        assert (batch.targets[width:] == 0.0).all()

    def test_deterministic(self, tiny_dataset):
        item = load_dataset(tiny_dataset / "train")[1]
        config = PipelineConfig()
        first = collect_sample_batch(item.image, item.truth.rows, config.canny, config.tensor, 7, rng_seed=[0, 1])
        second = collect_sample_batch(item.image, item.truth.rows, config.canny, config.tensor, 7, rng_seed=[0, 1])
        np.testing.assert_array_equal(first.patches, second.patches)
        np.testing.assert_array_equal(first.buckets, second.buckets)

    def test_insufficient_negatives(self):
        img = step_scene(32, 32, [16] * 32)
        with pytest.warns(InsufficientNegatives):
            batch = collect_sample_batch(img, [16] * 32, CannyConfig(), TensorConfig(), 7, rng_seed=0)
        assert len(batch) == 32
        assert (batch.targets == 1.0).all()

    def test_wrong_ground_truth_width(self, rng):
        img = RgbImage(rng.random((16, 16, 3)))
        with pytest.raises(DimensionMismatch):
            collect_sample_batch(img, [3] * 10, CannyConfig(), TensorConfig(), 7, rng_seed=0)

    def test_accepts_path_and_ground_truth_objects(self, tiny_dataset):
        item = load_dataset(tiny_dataset / "train")[0]
        config = PipelineConfig()
        reference = collect_sample_batch(item.image, list(item.truth.rows), config.canny, config.tensor, 7, rng_seed=2)
        for truth in (SkylinePath(item.truth.rows), item.truth):
            batch = collect_sample_batch(item.image, truth, config.canny, config.tensor, 7, rng_seed=2)
            np.testing.assert_array_equal(batch.patches, reference.patches)
            np.testing.assert_array_equal(batch.targets, reference.targets)
        samples = collect_samples(
            item.image, SkylinePath(item.truth.rows), CannyConfig(), QuantizerConfig(), 7, rng_seed=2
        )
        assert sum(s.target == 1.0 for s in samples) == item.image.width
