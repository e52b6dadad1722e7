import math

import numpy as np
import pytest

from tracklearn import selection
from tracklearn.features import FeatureStack


def hist64(pairs):
    h = np.zeros(64)
    for idx, val in pairs:
        h[idx] = val
    return h


class TestResponseBins:
    def test_edges(self):
        maps = np.array([[0.0, 0.5, 1.0, 0.999]])
        idx = selection.response_bins(maps)
        assert list(idx[0]) == [0, 32, 63, 63]


class TestClassHistograms:
    def test_delta_mask_single_bin(self):
        fmap = np.full((6, 6), 0.5)
        mask = np.zeros((6, 6))
        mask[2, 3] = 1.0
        f, b = selection.class_histograms(fmap, mask, (0, 6, 0, 6))
        assert f[32] == 1.0 and f.sum() == 1.0

    def test_constant_zero_map(self):
        fmap = np.zeros((6, 6))
        mask = np.zeros((6, 6))
        mask[1, 1] = 1.0
        f, _ = selection.class_histograms(fmap, mask, (0, 6, 0, 6))
        assert f[0] == 1.0

    def test_empty_histogram_falls_back_to_uniform(self):
        fmap = np.zeros((4, 4))
        mask = np.zeros((4, 4))  # zero object weight everywhere
        f, b = selection.class_histograms(fmap, mask, (0, 4, 0, 4))
        assert np.allclose(f, 1.0 / 64)
        assert b[0] == 1.0  # background histogram is real

    def test_weighted_count_oracle(self):
        rng = np.random.default_rng(0)
        fmap = rng.random((10, 10))
        mask = rng.random((10, 10)) * 0.01
        patch = (2, 9, 1, 8)
        f, b = selection.class_histograms(fmap, mask, patch)
        fo = np.zeros(64)
        bo = np.zeros(64)
        for r in range(2, 9):
            for c in range(1, 8):
                u = min(int(fmap[r, c] * 64), 63)
                fo[u] += mask[r, c]
                bo[u] += 1.0 - mask[r, c]
        assert np.allclose(f, fo / fo.sum(), atol=1e-12)
        assert np.allclose(b, bo / bo.sum(), atol=1e-12)


class TestLikelihoodMap:
    def test_equal_histograms_normalize_to_ones(self):
        rng = np.random.default_rng(1)
        fmap = rng.random((8, 8))
        h = np.full(64, 1.0 / 64)
        out = selection.likelihood_map(h, h, fmap)
        assert np.allclose(out, 1.0)

    def test_delta_vs_uniform(self):
        fmap = np.array([[0.5, 0.1], [0.9, 0.5]])
        f = hist64([(32, 1.0)])
        b = np.full(64, 1.0 / 64)
        out = selection.likelihood_map(f, b, fmap)
        assert out[0, 0] == 1.0 and out[1, 1] == 1.0
        assert out[0, 1] < 1e-3 and out[1, 0] < 1e-3

    def test_loop_oracle(self):
        rng = np.random.default_rng(2)
        fmap = rng.random((9, 9))
        f = rng.random(64)
        f /= f.sum()
        b = rng.random(64)
        b /= b.sum()
        out = selection.likelihood_map(f, b, fmap)
        ratio = f / (b + 1e-6)
        want = np.zeros_like(fmap)
        for r in range(9):
            for c in range(9):
                want[r, c] = ratio[min(int(fmap[r, c] * 64), 63)]
        want /= want.max()
        assert np.allclose(out, want, atol=1e-12)


class TestMmdScore:
    def test_identical_distributions_zero(self):
        h = np.full(64, 1.0 / 64)
        assert selection.mmd_score(h, h, 0.3) == 0.0

    def test_disjoint_equal_prior_is_one_bit(self):
        f = hist64([(0, 0.5), (1, 0.5)])
        b = hist64([(10, 0.5), (11, 0.5)])
        assert selection.mmd_score(f, b, 0.5) == pytest.approx(1.0, abs=1e-12)

    def test_partial_overlap_brute_force(self):
        f = hist64([(0, 0.5), (1, 0.5)])
        b = hist64([(1, 0.5), (2, 0.5)])
        prior = 0.5
        p = prior * f + (1 - prior) * b
        want = 0.0
        for u in range(64):
            if f[u] > 0:
                want += prior * f[u] * math.log2(f[u] / p[u])
            if b[u] > 0:
                want += (1 - prior) * b[u] * math.log2(b[u] / p[u])
        got = selection.mmd_score(f, b, prior)
        assert got == pytest.approx(want, abs=1e-12)
        assert got > 0.0

    def test_nonnegative_random(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            f = rng.random(64)
            f /= f.sum()
            b = rng.random(64)
            b /= b.sum()
            assert selection.mmd_score(f, b, rng.uniform(0.01, 0.99)) >= 0.0


class TestBhattacharyya:
    def test_identical_is_one(self):
        rng = np.random.default_rng(4)
        p = rng.random(64)
        p /= p.sum()
        assert selection.bhattacharyya(p, p) == pytest.approx(1.0, abs=1e-12)

    def test_disjoint_is_zero(self):
        p = hist64([(0, 1.0)])
        q = hist64([(5, 1.0)])
        assert selection.bhattacharyya(p, q) == 0.0

    def test_hand_value(self):
        p = hist64([(0, 0.5), (1, 0.5)])
        q = hist64([(0, 0.9), (1, 0.1)])
        want = math.sqrt(0.45) + math.sqrt(0.05)
        assert selection.bhattacharyya(p, q) == pytest.approx(want, abs=1e-12)

    def test_symmetry(self):
        rng = np.random.default_rng(5)
        p = rng.random(64)
        p /= p.sum()
        q = rng.random(64)
        q /= q.sum()
        assert selection.bhattacharyya(p, q) == selection.bhattacharyya(q, p)


class TestUpdateFeaturePosterior:
    def test_uniform_prior_returns_measurement(self):
        rng = np.random.default_rng(6)
        meas = rng.random(64)
        meas /= meas.sum()
        prior = np.full(64, 1.0 / 64)
        out = selection.update_feature_posterior(prior, meas)
        assert np.allclose(out, meas, atol=1e-12)

    def test_disjoint_retains_previous(self):
        prev = hist64([(0, 1.0)])
        meas = hist64([(5, 1.0)])
        out = selection.update_feature_posterior(prev, meas)
        assert out is prev

    def test_pointwise_product_oracle(self):
        rng = np.random.default_rng(7)
        a = np.exp(-0.5 * ((np.arange(64) - 20) / 4.0) ** 2)
        a /= a.sum()
        b = np.exp(-0.5 * ((np.arange(64) - 24) / 6.0) ** 2)
        b /= b.sum()
        out = selection.update_feature_posterior(a, b)
        want = a * b / (a * b).sum()
        assert np.allclose(out, want, atol=1e-12)

    def test_repeated_updates_concentrate(self):
        meas = np.full(64, 1e-6)
        meas[10] = 0.6
        meas[11] = 0.4
        meas /= meas.sum()
        post = np.full(64, 1.0 / 64)
        supports = []
        for _ in range(30):
            post = selection.update_feature_posterior(post, meas)
            supports.append(int((post > 1e-9).sum()))
        assert supports[0] >= supports[-1]
        assert np.argmax(post) == 10


class TestSelectAndFuse:
    def _stack(self, maps):
        maps = np.asarray(maps)
        return FeatureStack(maps=maps, ids=np.arange(1, maps.shape[0] + 1))

    def test_single_discriminative_feature_wins(self):
        uniform = np.full(64, 1.0 / 64)
        good_f = hist64([(0, 1.0)])
        good_b = hist64([(40, 1.0)])
        hists = [(uniform, uniform), (good_f, good_b), (uniform, uniform)]
        learned = [uniform, good_f, uniform]
        maps = np.zeros((3, 4, 4))
        stack = self._stack(maps)
        res = selection.select_and_fuse(stack, hists, learned, 2, 0.5)
        assert res.chosen[0] == 2  # 1-based feature id
        assert res.weights[0] > 0.0
        assert np.all(res.weights[1:] == 0.0)

    def test_all_zero_weights_give_zero_map(self):
        uniform = np.full(64, 1.0 / 64)
        hists = [(uniform, uniform)] * 3
        learned = [uniform] * 3
        stack = self._stack(np.random.default_rng(8).random((3, 5, 5)))
        res = selection.select_and_fuse(stack, hists, learned, 3, 0.5)
        assert np.all(res.fused == 0.0)

    def test_ranking_matches_brute_force(self):
        rng = np.random.default_rng(9)
        hists = []
        for _ in range(8):
            f = rng.random(64)
            f /= f.sum()
            b = rng.random(64)
            b /= b.sum()
            hists.append((f, b))
        learned = [h[0] for h in hists]
        stack = self._stack(rng.random((8, 6, 6)))
        res = selection.select_and_fuse(stack, hists, learned, 4, 0.3)
        scores = [selection.mmd_score(f, b, 0.3) for f, b in hists]
        want = np.argsort([-s for s in scores], kind="stable")[:4] + 1
        assert list(res.chosen) == list(want)

    def test_fused_bounded_by_weight_sum(self):
        rng = np.random.default_rng(10)
        hists = []
        for _ in range(5):
            f = rng.random(64)
            f /= f.sum()
            b = rng.random(64)
            b /= b.sum()
            hists.append((f, b))
        learned = [h[0] for h in hists]
        stack = self._stack(rng.random((5, 7, 7)))
        res = selection.select_and_fuse(stack, hists, learned, 3, 0.4)
        assert res.fused.min() >= 0.0
        assert res.fused.max() <= res.weights.sum() + 1e-12
