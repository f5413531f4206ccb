"""Metrics: rank correlation, clustering agreement, accuracy, boundary scoring."""

import numpy as np
import pytest

from pwhubert.corpusio import SimilarityPair, write_matrix
from pwhubert.errors import EmptyMaskError, ZeroVarianceError
from pwhubert.evaluation import (
    boundary_f1,
    corpus_boundary_f1,
    embed_word,
    masked_accuracy,
    nmi,
    purity,
    similarity_judgement,
    spearman,
)
from pwhubert.masking import MaskSet
from pwhubert.model import Model, ModelConfig
from pwhubert.numerics import RngStream
from pwhubert.quantizer import IGNORE_LABEL


def brute_force_spearman(xs, ys):
    """O(n^2) counting ranks (rank = #less + (#equal + 1)/2) and textbook Pearson."""
    def ranks(vals):
        return [
            sum(1 for other in vals if other < v) + (sum(1 for other in vals if other == v) + 1) / 2
            for v in vals
        ]

    rx, ry = ranks(list(xs)), ranks(list(ys))
    n = len(rx)
    mx, my = sum(rx) / n, sum(ry) / n
    cov = sum((a - mx) * (b - my) for a, b in zip(rx, ry))
    vx = sum((a - mx) ** 2 for a in rx)
    vy = sum((b - my) ** 2 for b in ry)
    return cov / (vx * vy) ** 0.5


class TestSpearman:
    def test_monotone_agreement(self):
        assert spearman([1, 2, 3, 4], [10, 20, 30, 40]) == pytest.approx(1.0)

    def test_monotone_disagreement(self):
        assert spearman([1, 2, 3, 4], [9, 7, 5, 3]) == pytest.approx(-1.0)

    def test_tied_ranks_hand_value(self):
        assert spearman([1, 2, 2, 3], [1, 2, 3, 4]) == pytest.approx(0.9487, abs=1e-4)

    def test_constant_sequence_rejected(self):
        with pytest.raises(ZeroVarianceError):
            spearman([1, 1, 1], [1, 2, 3])
        with pytest.raises(ZeroVarianceError):
            spearman([1, 2, 3], [5, 5, 5])

    def test_bad_shapes(self):
        with pytest.raises(ValueError):
            spearman([1], [2])
        with pytest.raises(ValueError):
            spearman([1, 2], [1, 2, 3])

    def test_matches_brute_force_oracle(self):
        rng = RngStream(0, "spear").generator()
        for _ in range(200):
            n = int(rng.integers(2, 11))
            xs = rng.integers(0, 5, size=n).astype(float)  # small range forces ties
            ys = rng.integers(0, 5, size=n).astype(float)
            if (xs == xs[0]).all() or (ys == ys[0]).all():
                continue
            assert spearman(xs, ys) == pytest.approx(brute_force_spearman(xs, ys), abs=1e-10)


class TestNmiPurity:
    def test_perfect_up_to_relabeling(self):
        pred = [0, 0, 1, 1, 2, 2]
        truth = [5, 5, 3, 3, 9, 9]
        assert nmi(pred, truth) == pytest.approx(1.0)
        assert purity(pred, truth) == pytest.approx(1.0)

    def test_hand_counted_purity(self):
        assert purity([0, 0, 1, 1], ["a", "a", "a", "b"]) == pytest.approx(0.75)

    def test_constant_prediction_has_zero_information(self):
        assert nmi([0, 0, 0, 0], [0, 0, 1, 1]) == 0.0

    def test_both_trivial_labelings_agree(self):
        assert nmi([3, 3, 3], [7, 7, 7]) == 1.0

    def test_relabeling_invariance(self):
        rng = RngStream(1, "nmi").generator()
        pred = rng.integers(0, 4, size=60)
        truth = rng.integers(0, 3, size=60)
        base_nmi, base_purity = nmi(pred, truth), purity(pred, truth)
        relabeled = np.array([10, 7, 99, 2])[pred]
        assert nmi(relabeled, truth) == pytest.approx(base_nmi, abs=1e-12)
        assert purity(relabeled, truth) == pytest.approx(base_purity, abs=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            nmi([1, 2], [1, 2, 3])
        with pytest.raises(ValueError):
            purity([], [])


class TestMaskedAccuracy:
    def test_perfect_logits(self):
        targets = np.array([0, 2, 1], dtype=np.uint32)
        logits = np.eye(3)[targets.astype(int)] * 10
        mask = MaskSet(np.arange(3), 3)
        assert masked_accuracy(logits, targets, mask) == 1.0

    def test_uniform_random_logits_hit_chance_level(self):
        rng = RngStream(2, "acc").generator()
        n, k = 10_000, 50
        logits = rng.normal(size=(n, k))
        targets = rng.integers(0, k, size=n).astype(np.uint32)
        mask = MaskSet(np.arange(n), n)
        assert masked_accuracy(logits, targets, mask) == pytest.approx(0.02, abs=0.005)

    def test_all_ignore_raises(self):
        targets = np.full(4, IGNORE_LABEL, dtype=np.uint32)
        with pytest.raises(EmptyMaskError):
            masked_accuracy(np.zeros((4, 3)), targets, MaskSet(np.arange(4), 4))

    def test_always_within_unit_interval(self):
        rng = RngStream(3, "acc").generator()
        for _ in range(20):
            n = int(rng.integers(2, 30))
            logits = rng.normal(size=(n, 4))
            targets = rng.integers(0, 4, size=n).astype(np.uint32)
            acc = masked_accuracy(logits, targets, MaskSet(np.arange(n), n))
            assert 0.0 <= acc <= 1.0


class TestBoundaryF1:
    def test_hand_matched_point_sets_with_tolerance(self):
        from pwhubert.evaluation import _match_boundaries

        # boundary sets {2, 6, 10} vs {2, 7, 12}: 2-2 and 6-7 match at tol 1
        assert _match_boundaries([2, 6, 10], [2, 7, 12], tol=1) == 2
        assert 2 / 3 == pytest.approx(_match_boundaries([2, 6, 10], [2, 7, 12], 1) / 3)

    def test_zero_tolerance_on_the_same_point_sets(self):
        from pwhubert.evaluation import _match_boundaries

        assert _match_boundaries([2, 6, 10], [2, 7, 12], tol=0) == 1  # precision 1/3

    def test_hand_matched_segments(self):
        hyp = [(2, 6), (7, 10)]  # boundary points {2, 6, 7, 10}
        ref = [(2, 7), (8, 12)]  # boundary points {2, 7, 8, 12}
        p, r, f1 = boundary_f1(hyp, ref, tol=1)
        assert (p, r, f1) == pytest.approx((3 / 4, 3 / 4, 3 / 4))
        p0, _, _ = boundary_f1(hyp, ref, tol=0)
        assert p0 == pytest.approx(2 / 4)  # only 2 and 7 coincide exactly

    def test_identity_is_perfect(self):
        segs = [(0, 4), (5, 9)]
        assert boundary_f1(segs, segs, tol=0) == (1.0, 1.0, 1.0)

    def test_empty_conventions(self):
        assert boundary_f1([], [], 0) == (1.0, 1.0, 1.0)
        assert boundary_f1([(0, 1)], [], 0) == (0.0, 0.0, 0.0)
        assert boundary_f1([], [(0, 1)], 0) == (0.0, 0.0, 0.0)

    def test_symmetry_swaps_precision_and_recall(self):
        rng = RngStream(4, "bf1").generator()
        for _ in range(50):
            def random_segs():
                segs, cursor = [], 0
                for _ in range(int(rng.integers(1, 5))):
                    s = cursor + int(rng.integers(0, 3))
                    e = s + int(rng.integers(0, 4))
                    segs.append((s, e))
                    cursor = e + 1 + int(rng.integers(0, 2))
                return segs

            a, b = random_segs(), random_segs()
            pa, ra, fa = boundary_f1(a, b, tol=1)
            pb, rb, fb = boundary_f1(b, a, tol=1)
            assert (pa, ra) == pytest.approx((rb, pb))
            assert fa == pytest.approx(fb)

    def test_corpus_pooling(self):
        hyp = {"u1": [(0, 4), (5, 9)], "u2": [(0, 3)]}
        ref = {"u1": [(0, 4), (5, 9)], "u2": [(0, 5)]}
        p, r, f1 = corpus_boundary_f1(hyp, ref, tol=0)
        # u1 matches 4/4 boundaries, u2 matches only position 0
        assert p == pytest.approx(5 / 6)
        assert r == pytest.approx(5 / 6)
        with pytest.raises(ValueError):
            corpus_boundary_f1({"u1": []}, ref, tol=0)


def _word_model():
    cfg = ModelConfig(
        input_dim=4, model_dim=8, n_heads=2, backbone_layers=2, extra_layers=1,
        frame_head_layer=2, pw_head_layer=3, k_frame=3, k_pw=3, variant="hierarchical",
    )
    return Model(cfg, seed=0)


class TestSimilarityJudgement:
    def test_identical_files_rank_first(self, tmp_path):
        rng = RngStream(5, "sim").generator()
        a = rng.normal(size=(6, 4)).astype(np.float32)
        b = rng.normal(size=(5, 4)).astype(np.float32)
        write_matrix(tmp_path / "a.pwf", a)
        write_matrix(tmp_path / "b.pwf", b)
        pairs = [
            SimilarityPair("a.pwf", "a.pwf", 6.0),  # same file: cosine exactly 1
            SimilarityPair("a.pwf", "b.pwf", 1.0),
        ]
        rho = similarity_judgement(_word_model(), pairs, layer=0, base_dir=tmp_path)
        assert rho == pytest.approx(1.0)

    def test_needs_two_pairs(self, tmp_path):
        with pytest.raises(ValueError):
            similarity_judgement(_word_model(), [SimilarityPair("a", "a", 1.0)], 0, tmp_path)

    def test_empty_feature_file_rejected(self, tmp_path):
        write_matrix(tmp_path / "e.pwf", np.zeros((0, 4), dtype=np.float32))
        model = _word_model()
        with pytest.raises(ValueError, match="empty"):
            embed_word(model, np.zeros((0, 4), dtype=np.float32), 0)

    def test_layer_out_of_range(self):
        model = _word_model()
        with pytest.raises(ValueError, match="layer"):
            embed_word(model, np.ones((3, 4), dtype=np.float32), 9)
