import math

import numpy as np
import pytest

from tdc import decomp, metrics


class TestWeightErrors:
    def test_identical_tensors(self, rng):
        w = rng.standard_normal((3, 3, 3, 3))
        assert metrics.weight_errors(w, w.copy()) == (0.0, 0.0, 0.0)

    def test_single_element(self):
        assert metrics.weight_errors(np.array([3.0]), np.array([1.5])) == (1.5, 0.5, 1.5)

    def test_matches_elementwise_oracle(self, rng):
        w = rng.standard_normal((4, 3, 3, 5))
        w_hat = rng.standard_normal((4, 3, 3, 5))
        absolute, relative, scaled = metrics.weight_errors(w, w_hat)
        diff = math.sqrt(sum((a - b) ** 2 for a, b in zip(w.ravel(), w_hat.ravel())))
        norm = math.sqrt(sum(v * v for v in w.ravel()))
        assert absolute == pytest.approx(diff, rel=1e-12)
        assert relative == pytest.approx(diff / norm, rel=1e-12)
        assert scaled == pytest.approx(diff / w.size, rel=1e-12)

    def test_scaled_shares_float_path_with_absolute(self, rng):
        w = rng.standard_normal((4, 4))
        w_hat = rng.standard_normal((4, 4))
        absolute, _, scaled = metrics.weight_errors(w, w_hat)
        assert scaled == absolute / w.size

    def test_relative_scale_invariance(self, rng):
        w = rng.standard_normal((3, 3, 3, 3))
        w_hat = rng.standard_normal((3, 3, 3, 3))
        _, rel1, _ = metrics.weight_errors(w, w_hat)
        _, rel2, _ = metrics.weight_errors(7.5 * w, 7.5 * w_hat)
        assert rel2 == pytest.approx(rel1, rel=1e-12)

    def test_shape_mismatch(self, rng):
        with pytest.raises(ValueError):
            metrics.weight_errors(rng.standard_normal((2, 2)), rng.standard_normal((2, 3)))

    def test_zero_reference_rejected(self):
        with pytest.raises(ValueError):
            metrics.weight_errors(np.zeros((2, 2)), np.ones((2, 2)))


class TestFeatureErrors:
    def test_identical_weights_zero_errors(self, rng):
        w = rng.standard_normal((3, 3, 3, 4))
        batch = rng.standard_normal((5, 3, 6, 6))
        fa, fr, fs, _ = metrics.feature_errors(w, w.copy(), batch, stride=1, padding=1)
        assert (fa, fr, fs) == (0.0, 0.0, 0.0)

    def test_hand_convolution_constant_input(self):
        w = np.full((1, 1, 1, 1), 2.0)
        w_hat = np.full((1, 1, 1, 1), 1.0)
        ones = np.ones((1, 1, 4, 4))
        fa, fr, fs, n_f = metrics.feature_errors(w, w_hat, ones)
        assert fa == pytest.approx(4.0)
        assert fr == pytest.approx(0.5)
        assert fs == pytest.approx(4.0 / 16.0)
        assert n_f == 16

    def test_batch_duplication_invariance(self, rng):
        w = rng.standard_normal((2, 3, 3, 3))
        w_hat = w + 0.1 * rng.standard_normal(w.shape)
        batch = rng.standard_normal((4, 2, 5, 5))
        a = metrics.feature_errors(w, w_hat, batch, padding=1)
        b = metrics.feature_errors(w, w_hat, np.concatenate([batch, batch]), padding=1)
        for va, vb in zip(a[:3], b[:3]):
            assert vb == pytest.approx(va, rel=1e-12, abs=1e-15)

    def test_full_rank_factorization_feature_error_tiny(self, rng):
        w = rng.standard_normal((4, 3, 3, 4))
        f = decomp.tucker_hosvd(w, (4, 3, 3, 4))
        batch = rng.standard_normal((3, 4, 6, 6))
        fa, _, _, _ = metrics.feature_errors(w, decomp.reconstruct(f), batch, padding=1)
        assert fa <= 1e-6

    def test_empty_batch_rejected(self, rng):
        w = rng.standard_normal((2, 3, 3, 2))
        with pytest.raises(ValueError):
            metrics.feature_errors(w, w, np.zeros((0, 2, 5, 5)))

    def test_zero_feature_sample_rejected(self, rng):
        w = rng.standard_normal((1, 1, 1, 2))
        with pytest.raises(ValueError):
            metrics.feature_errors(w, 0.5 * w, np.zeros((1, 1, 3, 3)))


class TestErrorReport:
    def test_weight_only(self, rng):
        w = rng.standard_normal((3, 3, 3, 3))
        rep = metrics.error_report(w, 0.9 * w)
        assert rep.feature_absolute is None and rep.n_f is None
        assert rep.n_w == w.size
        d = rep.to_dict()
        assert set(d) >= set(metrics.ERROR_KEYS)

    def test_with_features(self, rng):
        w = rng.standard_normal((2, 3, 3, 3))
        batch = rng.standard_normal((4, 2, 6, 6))
        rep = metrics.error_report(w, 0.9 * w, batch, stride=1, padding=1)
        assert rep.batch_size == 4
        assert rep.feature_relative is not None and rep.feature_relative >= 0


class TestCheckpointChange:
    def test_no_change_sentinel(self, rng):
        w = rng.standard_normal((3, 3))
        [c] = metrics.checkpoint_change([w], [w.copy()])
        assert c == metrics.NO_CHANGE

    def test_doubling_gives_zero(self, rng):
        w = rng.standard_normal((4, 4))
        [c] = metrics.checkpoint_change([w], [2.0 * w])
        assert c == pytest.approx(0.0, abs=1e-12)

    def test_constructed_perturbation(self, rng):
        w = rng.standard_normal((5, 5))
        delta = rng.standard_normal((5, 5))
        [c] = metrics.checkpoint_change([w], [w + delta])
        expected = math.log10(np.linalg.norm(delta) / np.linalg.norm(w))
        assert c == pytest.approx(expected, rel=1e-12)

    def test_factorized_layers_expanded(self, rng):
        w = rng.standard_normal((4, 3, 3, 4))
        f = decomp.tucker_hosvd(w, (4, 3, 3, 4))
        [c] = metrics.checkpoint_change([f], [w])  # expansion is lossless at full rank
        assert c < -8  # tiny relative change

    def test_mismatched_lists(self, rng):
        with pytest.raises(ValueError):
            metrics.checkpoint_change([rng.standard_normal((2, 2))], [])

    def test_zero_reference_rejected(self):
        with pytest.raises(ValueError):
            metrics.checkpoint_change([np.zeros((2, 2))], [np.ones((2, 2))])
