import numpy as np
import pytest

from fmd.errors import ConfigError
from fmd.scoring import PredictionVector, fmd_score, top_k


def pv(classes, confs):
    return PredictionVector(tuple(classes), tuple(confs))


class TestTopK:
    def test_uniform_ties_break_by_class_id(self):
        probs = np.full(10, 0.1)
        v = top_k(probs, 5)
        assert v.classes == (0, 1, 2, 3, 4)
        assert v.confidences == (0.1,) * 5

    def test_one_hot_padding_with_zero_ties(self):
        probs = np.zeros(10)
        probs[7] = 1.0
        v = top_k(probs, 5)
        assert v.classes == (7, 0, 1, 2, 3)
        assert v.confidences == (1.0, 0.0, 0.0, 0.0, 0.0)

    def test_full_k_is_sorted_permutation(self):
        rng = np.random.default_rng(0)
        probs = rng.random(10)
        probs /= probs.sum()
        v = top_k(probs, 10)
        assert sorted(v.classes) == list(range(10))
        assert list(v.confidences) == sorted(probs, reverse=True)
        assert sum(v.confidences) == pytest.approx(1.0, abs=1e-12)

    def test_confidences_non_increasing(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            probs = rng.random(10)
            probs /= probs.sum()
            v = top_k(probs, 5)
            assert all(a >= b for a, b in zip(v.confidences, v.confidences[1:]))

    def test_k_out_of_range(self):
        with pytest.raises(ConfigError, match="k out of range"):
            top_k(np.full(10, 0.1), 0)
        with pytest.raises(ConfigError, match="k out of range"):
            top_k(np.full(10, 0.1), 11)


class TestFmdScore:
    def test_identical_vectors_zero(self):
        v = pv((1, 2, 3, 4, 5), (0.5, 0.2, 0.1, 0.1, 0.05))
        assert fmd_score(v, v) == 0.0

    def test_hand_computed_union_example(self):
        a = pv((1, 2, 3, 4, 5), (0.5, 0.2, 0.1, 0.1, 0.05))
        b = pv((1, 2, 3, 4, 6), (0.4, 0.3, 0.1, 0.1, 0.05))
        # union {1..6}: diffs 0.1, 0.1, 0, 0, 0.05, 0.05 -> 0.3 / 5 = 0.06
        assert fmd_score(a, b, "l1") == pytest.approx(0.06, abs=1e-12)

    def test_fully_disjoint_sets(self):
        a = pv((0, 1), (0.6, 0.2))
        b = pv((2, 3), (0.5, 0.3))
        assert fmd_score(a, b, "l1") == pytest.approx((0.8 + 0.8) / 2, abs=1e-12)

    def test_symmetry(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            pa = rng.random(10)
            pa /= pa.sum()
            pb = rng.random(10)
            pb /= pb.sum()
            a, b = top_k(pa, 5), top_k(pb, 5)
            for norm in ("l1", "l2"):
                assert fmd_score(a, b, norm) == fmd_score(b, a, norm)

    def test_triangle_style_bound(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            pa = rng.random(10)
            pa /= pa.sum()
            pb = rng.random(10)
            pb /= pb.sum()
            a, b = top_k(pa, 5), top_k(pb, 5)
            bound = (sum(a.confidences) + sum(b.confidences)) / 5
            assert fmd_score(a, b, "l1") <= bound + 1e-12

    def test_zero_iff_identical(self):
        a = pv((0, 1), (0.5, 0.3))
        b = pv((0, 1), (0.5, 0.2))
        assert fmd_score(a, b) > 0.0
        c = pv((0, 2), (0.5, 0.3))
        assert fmd_score(a, c) > 0.0

    def test_l2_norm(self):
        a = pv((0,), (0.8,))
        b = pv((1,), (0.6,))
        assert fmd_score(a, b, "l2") == pytest.approx(np.hypot(0.8, 0.6), abs=1e-12)

    def test_orig_alignment_ignores_denoised_extras(self):
        a = pv((0, 1), (0.5, 0.3))
        b = pv((0, 9), (0.4, 0.4))
        # only classes {0, 1}: |0.5-0.4| + |0.3-0| = 0.4 -> /2
        assert fmd_score(a, b, "l1", alignment="orig") == pytest.approx(0.2, abs=1e-12)

    def test_mismatched_k_rejected(self):
        with pytest.raises(ConfigError, match="mismatched k"):
            fmd_score(pv((0,), (1.0,)), pv((0, 1), (0.5, 0.5)))

    def test_bad_norm_rejected(self):
        v = pv((0,), (1.0,))
        with pytest.raises(ConfigError):
            fmd_score(v, v, norm="l0")
