"""Oracle predictor tests: corruption pipeline and attention gradients.

The corruption pipeline applies, in order: Gaussian coordinate noise at
valid pixels, Bernoulli pixel dropout, a rectangular occluder, and an
optional 8-bit quantization round trip. Everything is driven by a single
seed, so identical configs give bit-identical maps.

The attention block is checked against a hand-computed 1x2 softmax case
and against central finite differences for every gradient it returns.
"""

from __future__ import annotations

import numpy as np
import pytest

from rocpose import (
    CorruptionConfig,
    PairSpec,
    RocMap,
    ScaleTransform,
    attention_backward,
    corrupt_roc,
    cross_attention,
    make_object,
    make_pair,
    oracle_predict,
)
from rocpose.errors import RocPoseError
from rocpose.roc import build_query_roc
from rocpose.scenes import default_intrinsics


def _toy_map(h=12, w=10, seed=0):
    """Small ROC map with an invalid border and in-range random coords."""
    rng = np.random.default_rng(seed)
    coords = rng.uniform(-0.45, 0.45, size=(h, w, 3))
    valid = np.ones((h, w), dtype=np.uint8)
    valid[0, :] = 0
    valid[:, -1] = 0
    return RocMap(coords=coords, valid=valid)


class TestCorruptRoc:
    def test_zero_config_is_a_bitwise_copy(self):
        m = _toy_map()
        out = corrupt_roc(m, CorruptionConfig())
        np.testing.assert_array_equal(out.coords, m.coords)
        np.testing.assert_array_equal(out.valid, m.valid)
        assert out.coords is not m.coords  # never aliases the input

    def test_noise_only_touches_valid_pixels(self):
        m = _toy_map()
        out = corrupt_roc(m, CorruptionConfig(coord_noise_sigma=0.02, seed=1))
        np.testing.assert_array_equal(out.valid, m.valid)
        sel = m.valid > 0
        assert np.all(out.coords[sel] != m.coords[sel])
        np.testing.assert_array_equal(out.coords[~sel], 0.0)

    def test_noise_magnitude_matches_sigma(self):
        m = _toy_map(h=60, w=60)
        sigma = 0.01
        out = corrupt_roc(m, CorruptionConfig(coord_noise_sigma=sigma, seed=2))
        delta = (out.coords - m.coords)[m.valid > 0].ravel()
        # ~10k samples: the empirical std sits within 5 standard errors.
        assert abs(delta.std() - sigma) < 5.0 * sigma / np.sqrt(len(delta))

    def test_dropout_rate(self):
        m = _toy_map(h=60, w=60)
        n = int(m.valid.sum())
        rate = 0.3
        out = corrupt_roc(m, CorruptionConfig(pixel_dropout=rate, seed=3))
        kept = int(out.valid.sum())
        # Binomial(n, 1-rate) within 5 standard deviations.
        assert abs(kept - (1.0 - rate) * n) < 5.0 * np.sqrt(n * rate * (1.0 - rate))
        # Dropout only ever clears bits, and cleared pixels lose coords.
        assert not np.any((out.valid > 0) & (m.valid == 0))
        np.testing.assert_array_equal(out.coords[out.valid == 0], 0.0)

    def test_occluder_rectangle_exact(self):
        m = _toy_map()
        out = corrupt_roc(m, CorruptionConfig(occluder=(2, 3, 4, 5)))
        expected = m.valid.copy()
        expected[3:8, 2:6] = 0  # (u0, v0, w, h) -> rows v0:v0+h, cols u0:u0+w
        np.testing.assert_array_equal(out.valid, expected)

    def test_occluder_clipped_at_image_edge(self):
        m = _toy_map()
        out = corrupt_roc(m, CorruptionConfig(occluder=(-5, -5, 7, 7)))
        expected = m.valid.copy()
        expected[0:2, 0:2] = 0
        np.testing.assert_array_equal(out.valid, expected)

    def test_quantization_snaps_to_the_8bit_grid(self):
        m = _toy_map()
        out = corrupt_roc(m, CorruptionConfig(quantize_8bit=True))
        sel = out.valid > 0
        err = np.abs(out.coords[sel] - m.coords[sel]).max()
        assert err <= 0.5 / 255.0 + 1e-12
        # Idempotent: the values already sit on the grid.
        again = corrupt_roc(out, CorruptionConfig(quantize_8bit=True))
        np.testing.assert_array_equal(again.coords, out.coords)

    def test_full_pipeline_reproducible(self):
        m = _toy_map()
        cfg = CorruptionConfig(
            coord_noise_sigma=0.01,
            pixel_dropout=0.2,
            occluder=(1, 1, 3, 3),
            quantize_8bit=True,
            seed=7,
        )
        a = corrupt_roc(m, cfg)
        b = corrupt_roc(m, cfg)
        np.testing.assert_array_equal(a.coords, b.coords)
        np.testing.assert_array_equal(a.valid, b.valid)
        c = corrupt_roc(m, CorruptionConfig(
            coord_noise_sigma=0.01, pixel_dropout=0.2,
            occluder=(1, 1, 3, 3), quantize_8bit=True, seed=8,
        ))
        assert not np.array_equal(a.coords, c.coords)

    def test_invalid_parameters_rejected(self):
        m = _toy_map()
        with pytest.raises(RocPoseError):
            corrupt_roc(m, CorruptionConfig(coord_noise_sigma=-0.1))
        with pytest.raises(RocPoseError):
            corrupt_roc(m, CorruptionConfig(pixel_dropout=1.0))
        with pytest.raises(RocPoseError):
            corrupt_roc(m, CorruptionConfig(occluder=(0, 0, -1, 2)))

    def test_to_dict_serializes_occluder(self):
        d = CorruptionConfig(occluder=(1, 2, 3, 4)).to_dict()
        assert d["occluder"] == [1, 2, 3, 4]
        assert CorruptionConfig().to_dict()["occluder"] is None


class TestOraclePredict:
    def test_equals_corrupted_ground_truth(self):
        model = make_object("box", seed=0)
        spec = PairSpec(seed=4, intrinsics=default_intrinsics(96, 96, 120.0))
        _, query, rel = make_pair(model, spec)
        s = ScaleTransform(2.0, (0.1, -0.2, 0.3))
        cfg = CorruptionConfig(
            coord_noise_sigma=0.01, pixel_dropout=0.1, quantize_8bit=True, seed=5
        )
        got = oracle_predict(query, rel, s, cfg)
        want = corrupt_roc(build_query_roc(query, rel, s), cfg)
        np.testing.assert_array_equal(got.coords, want.coords)
        np.testing.assert_array_equal(got.valid, want.valid)


class TestCrossAttention:
    def test_hand_computed_two_token_case(self):
        # q = [[1]], k = [[1], [2]], v = [[10], [20]], d_k = 1:
        # scores = [1, 2], attn = [1, e] / (1 + e),
        # out = (10 + 20 e) / (1 + e).
        out, attn = cross_attention(
            fq=np.array([[1.0]]),
            fa=np.array([[1.0], [2.0]]),
            wq=np.array([[1.0]]),
            wk=np.array([[1.0]]),
            wv=np.array([[10.0]]),
        )
        e = np.exp(1.0)
        np.testing.assert_allclose(attn, [[1.0 / (1 + e), e / (1 + e)]], atol=1e-12)
        np.testing.assert_allclose(out, [[(10.0 + 20.0 * e) / (1 + e)]], atol=1e-12)

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(6)
        out, attn = cross_attention(
            fq=rng.normal(size=(7, 4)),
            fa=rng.normal(size=(9, 5)),
            wq=rng.normal(size=(4, 3)),
            wk=rng.normal(size=(5, 3)),
            wv=rng.normal(size=(5, 2)),
        )
        assert out.shape == (7, 2) and attn.shape == (7, 9)
        np.testing.assert_allclose(attn.sum(axis=1), np.ones(7), atol=1e-12)
        assert np.all(attn >= 0)

    def test_softmax_stable_for_large_scores(self):
        out, attn = cross_attention(
            fq=np.array([[1000.0]]),
            fa=np.array([[1.0], [1.001]]),
            wq=np.array([[1.0]]),
            wk=np.array([[1.0]]),
            wv=np.array([[1.0]]),
        )
        assert np.isfinite(out).all() and np.isfinite(attn).all()

    def test_key_width_mismatch_rejected(self):
        rng = np.random.default_rng(0)
        with pytest.raises(RocPoseError, match="key width"):
            cross_attention(
                fq=rng.normal(size=(2, 3)),
                fa=rng.normal(size=(4, 3)),
                wq=rng.normal(size=(3, 2)),
                wk=rng.normal(size=(3, 5)),
                wv=rng.normal(size=(3, 2)),
            )


class TestAttentionBackward:
    @staticmethod
    def _numeric_grad(params, name, grad_out, h=1e-6):
        """Central finite differences of sum(out * grad_out) w.r.t. one input."""
        base = params[name]
        grad = np.zeros_like(base)
        for idx in np.ndindex(base.shape):
            for sign in (+1.0, -1.0):
                p = dict(params)
                bumped = base.copy()
                bumped[idx] += sign * h
                p[name] = bumped
                out, _ = cross_attention(**p)
                grad[idx] += sign * float((out * grad_out).sum())
        return grad / (2.0 * h)

    @pytest.mark.parametrize("name", ["fq", "fa", "wq", "wk", "wv"])
    def test_matches_finite_differences(self, name):
        rng = np.random.default_rng(10)
        params = {
            "fq": rng.normal(size=(3, 4)),
            "fa": rng.normal(size=(5, 6)),
            "wq": rng.normal(size=(4, 2)),
            "wk": rng.normal(size=(6, 2)),
            "wv": rng.normal(size=(6, 3)),
        }
        grad_out = rng.normal(size=(3, 3))
        analytic = attention_backward(**params, grad_out=grad_out)[name]
        numeric = self._numeric_grad(params, name, grad_out)
        np.testing.assert_allclose(analytic, numeric, rtol=1e-6, atol=1e-8)

    def test_gradients_cover_every_input(self):
        rng = np.random.default_rng(11)
        params = {
            "fq": rng.normal(size=(2, 3)),
            "fa": rng.normal(size=(4, 3)),
            "wq": rng.normal(size=(3, 2)),
            "wk": rng.normal(size=(3, 2)),
            "wv": rng.normal(size=(3, 2)),
        }
        grads = attention_backward(**params, grad_out=np.ones((2, 2)))
        assert set(grads) == {"fq", "fa", "wq", "wk", "wv"}
        for key, g in grads.items():
            assert g.shape == params[key].shape, key
