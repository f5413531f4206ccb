"""Span mask sampling: goldens, clipping, coverage statistics, stream independence."""

import numpy as np
import pytest

from pwhubert.masking import MaskingConfig, MaskSet, independent_masks, sample_mask, spans_to_mask
from pwhubert.numerics import RngStream


class TestSpansToMask:
    def test_span_clipped_at_utterance_end(self):
        m = spans_to_mask(np.array([8]), 10, 10)
        assert m.indices.tolist() == [8, 9]

    def test_overlapping_spans_merge(self):
        m = spans_to_mask(np.array([0, 2]), 4, 10)
        assert m.indices.tolist() == [0, 1, 2, 3, 4, 5]

    def test_no_starts(self):
        assert len(spans_to_mask(np.array([], dtype=np.int64), 4, 10)) == 0


class TestSampleMask:
    def test_zero_prob_is_empty(self):
        m = sample_mask(100, 0.0, 10, RngStream(0, "m"))
        assert len(m) == 0

    def test_prob_one_span_one_is_everything(self):
        m = sample_mask(17, 1.0, 1, RngStream(0, "m"))
        assert m.indices.tolist() == list(range(17))

    def test_fixed_seed_golden(self):
        m = sample_mask(50, 0.08, 4, RngStream(42, "pw"))
        assert m.indices.tolist() == [8, 9, 10, 11]

    def test_pure_function_of_stream(self):
        a = sample_mask(200, 0.08, 10, RngStream(5, "m", 3))
        b = sample_mask(200, 0.08, 10, RngStream(5, "m", 3))
        assert (a.indices == b.indices).all()

    def test_invalid_args(self):
        with pytest.raises(ValueError):
            sample_mask(0, 0.1, 4, RngStream(0, "m"))
        with pytest.raises(ValueError):
            sample_mask(10, -0.1, 4, RngStream(0, "m"))
        with pytest.raises(ValueError):
            sample_mask(10, 0.1, 0, RngStream(0, "m"))

    def test_empirical_coverage_matches_expected_rate(self):
        # per-frame coverage probability is ~ 1 - (1 - p)^L away from edges
        prob, span = 0.08, 10
        expected = 1.0 - (1.0 - prob) ** span
        covered = frames = 0
        for i in range(10_000):
            m = sample_mask(100, prob, span, RngStream(99, "cov", i))
            covered += len(m)
            frames += 100
        rate = covered / frames
        # edge frames are covered less often; allow the stated +-10% band
        assert abs(rate - expected) <= 0.1 * expected

    def test_changing_tag_changes_the_set(self):
        differing = sum(
            1
            for seed in range(100)
            if sample_mask(50, 0.08, 4, RngStream(seed, "a")).indices.tolist()
            != sample_mask(50, 0.08, 4, RngStream(seed, "b")).indices.tolist()
        )
        assert differing >= 99


class TestIndependentMasks:
    def test_zero_prob_both_empty(self):
        mf, mp = independent_masks(30, MaskingConfig(0.0, 10), 0)
        assert len(mf) == 0 and len(mp) == 0

    def test_saturation_both_full(self):
        mf, mp = independent_masks(30, MaskingConfig(1.0, 1), 0)
        assert mf.indices.tolist() == mp.indices.tolist() == list(range(30))

    def test_fixed_seed_masks_differ_as_sets(self):
        mf, mp = independent_masks(200, MaskingConfig(0.08, 10), 7)
        assert mf.indices.tolist() != mp.indices.tolist()
        assert (len(mf), len(mp)) == (123, 112)  # frozen from the fixed seed


class TestMaskSet:
    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            MaskSet(np.array([5]), 5)

    def test_rejects_unsorted_or_duplicates(self):
        with pytest.raises(ValueError):
            MaskSet(np.array([3, 2]), 5)
        with pytest.raises(ValueError):
            MaskSet(np.array([2, 2]), 5)

    def test_as_bool(self):
        m = MaskSet(np.array([0, 3]), 4)
        assert m.as_bool().tolist() == [True, False, False, True]
