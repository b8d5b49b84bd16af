import math

import numpy as np
import pytest

from conftest import gray_rgb, horizontal_ramp
from techzsky.errors import BadPatchSize, ConfigError, ImageTooSmall
from techzsky.imagecore import RgbImage, sobel_xy
from techzsky.tensor import (
    QuantizerConfig,
    StructureTensor,
    TensorFeatures,
    eigen_feature_field,
    eigen_features,
    gaussian_window,
    quantize,
    tensor_field,
)

INTERIOR = (slice(4, -4), slice(4, -4))


class TestTensorField:
    def test_constant_image(self):
        field = tensor_field(RgbImage(np.full((9, 9, 3), 0.3)))
        for part in (field.txx, field.txy, field.tyy):
            assert not part.any()

    def test_horizontal_ramp(self):
        field = tensor_field(gray_rgb(horizontal_ramp(16, 16)))
        assert not field.txy.any()
        assert not field.tyy.any()
        assert (field.txx[INTERIOR] > 0).all()

    def test_matches_double_loop(self, rng):
        data = rng.random((8, 8, 3))
        window, sigma = 5, 1.2
        field = tensor_field(RgbImage(data), window, sigma)

        weights = gaussian_window(window, sigma)
        radius = window // 2
        grads = [sobel_xy(data[:, :, c]) for c in range(3)]
        for r, c in [(3, 3), (4, 2), (2, 5)]:
            t = np.zeros(3)
            for dr in range(-radius, radius + 1):
                for dc in range(-radius, radius + 1):
                    w = weights[dr + radius, dc + radius]
                    for gx, gy in grads:
                        x, y = gx[r + dr, c + dc], gy[r + dr, c + dc]
                        t += w * np.array([x * x, x * y, y * y])
            got = field.at(r, c)
            np.testing.assert_allclose([got.txx, got.txy, got.tyy], t, atol=1e-10)

    def test_positive_semidefinite(self, rng):
        field = tensor_field(RgbImage(rng.random((12, 10, 3))))
        assert (field.txx >= 0).all() and (field.tyy >= 0).all()
        assert (field.txy**2 <= field.txx * field.tyy + 1e-9).all()

    def test_too_small(self):
        with pytest.raises(ImageTooSmall):
            tensor_field(RgbImage(np.zeros((2, 8, 3))))

    def test_even_window(self):
        with pytest.raises(BadPatchSize):
            tensor_field(RgbImage(np.zeros((8, 8, 3))), window=6)


class TestEigenFeatures:
    def test_diagonal(self):
        f = eigen_features(StructureTensor(1.0, 0.0, 0.0))
        assert (f.orientation, f.strength, f.coherence) == (0.0, 1.0, 1.0)

    def test_closed_form(self):
        f = eigen_features(StructureTensor(4.0, 0.0, 1.0))
        assert f.strength == pytest.approx(2.0)
        assert f.coherence == pytest.approx(1.0 / 3.0)

    def test_degenerate(self):
        f = eigen_features(StructureTensor(0.0, 0.0, 0.0))
        assert (f.orientation, f.strength, f.coherence) == (0.0, 0.0, 0.0)

    def test_against_generic_solver(self, rng):
        a = rng.normal(size=(1000, 2, 2))
        tensors = a @ a.transpose(0, 2, 1)
        field = eigen_feature_field(tensors[:, 0, 0], tensors[:, 0, 1], tensors[:, 1, 1])
        values, vectors = np.linalg.eigh(tensors)
        np.testing.assert_allclose(field.strength, np.sqrt(values[:, 1]), atol=1e-10)
        roots = np.sqrt(np.clip(values, 0, None))
        coherence = (roots[:, 1] - roots[:, 0]) / (roots[:, 1] + roots[:, 0])
        np.testing.assert_allclose(field.coherence, coherence, atol=1e-10)
        dominant = vectors[:, :, 1]
        angle = np.mod(np.arctan2(dominant[:, 1], dominant[:, 0]), np.pi)
        # axial angles: compare on the circle of period pi
        diff = np.abs(np.mod(field.orientation - angle + np.pi / 2, np.pi) - np.pi / 2)
        assert diff.max() < 1e-8

    def test_ranges(self, rng):
        features = eigen_feature_field(*(rng.random((3, 50)) * [[1], [0.1], [1]]))
        assert ((features.orientation >= 0) & (features.orientation < math.pi)).all()
        assert ((features.coherence >= 0) & (features.coherence <= 1)).all()


class TestImageFeatures:
    def _features(self, plane):
        field = tensor_field(gray_rgb(plane))
        return eigen_feature_field(field.txx, field.txy, field.tyy)

    def test_ramp_orientation_and_coherence(self):
        f = self._features(horizontal_ramp(20, 20))
        assert np.abs(f.orientation[INTERIOR]).max() <= 1e-6
        assert f.coherence[INTERIOR].min() >= 1 - 1e-9

    def test_rotation_shifts_orientation(self):
        plane = horizontal_ramp(20, 20)
        before = self._features(plane).orientation[INTERIOR]
        after = self._features(np.rot90(plane)).orientation[INTERIOR]
        shifted = np.mod(before + np.pi / 2, np.pi)
        assert np.abs(after - shifted).max() <= 1e-6

    def test_diagonal_ramp(self):
        rows, cols = np.mgrid[0:20, 0:20]
        f = self._features((rows + cols) / 38.0)
        np.testing.assert_allclose(f.orientation[INTERIOR], np.pi / 4, atol=1e-6)

    def test_intensity_scaling(self, rng):
        plane = rng.random((16, 16)) * 0.5
        base = self._features(plane)
        scaled = self._features(plane * 2.0)
        np.testing.assert_allclose(scaled.strength[INTERIOR], 2.0 * base.strength[INTERIOR], rtol=1e-9)
        np.testing.assert_allclose(scaled.coherence[INTERIOR], base.coherence[INTERIOR], atol=1e-9)
        np.testing.assert_allclose(scaled.orientation[INTERIOR], base.orientation[INTERIOR], atol=1e-9)


class TestQuantize:
    def test_default_bucket_count(self):
        assert QuantizerConfig().bucket_count == 288

    def test_first_bucket(self):
        assert quantize(TensorFeatures(0.0, 0.0, 0.0), QuantizerConfig()) == 0

    def test_orientation_clamped(self):
        q = QuantizerConfig()
        index = quantize(TensorFeatures(math.pi - 1e-12, 0.0, 0.0), q)
        assert index // (q.strength_bins * q.coherence_bins) == q.orientation_bins - 1

    def test_composition(self):
        q = QuantizerConfig()
        # orientation bin 4, strength 0.15 -> bin 3, coherence 0.9 -> bin 2
        f = TensorFeatures(4.5 * math.pi / 16, 0.15, 0.9)
        assert quantize(f, q) == (4 * 6 + 3) * 3 + 2

    def test_edge_value_goes_up(self):
        q = QuantizerConfig()
        assert quantize(TensorFeatures(0.0, 0.02, 0.0), q) == 3

    def test_index_range(self, rng):
        q = QuantizerConfig()
        for o, s, c in zip(rng.uniform(0, math.pi, 200), rng.uniform(0, 2, 200), rng.uniform(0, 1, 200)):
            assert 0 <= quantize(TensorFeatures(o, s, c), q) < q.bucket_count

    def test_unsorted_edges(self):
        with pytest.raises(ConfigError):
            QuantizerConfig(strength_edges=(0.1, 0.05))
