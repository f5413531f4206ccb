"""Span mask sampling for masked prediction training.

Every frame is independently a span start with probability `mask_prob`; each
start masks `span_len` consecutive frames (clipped at the utterance end) and
overlapping spans merge by set union. Dual-stream sampling draws the
frame-level and word-level masks from separate tagged streams of the same
seed, so the two corruptions of one utterance are independent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import RngStream


@dataclass(frozen=True)
class MaskingConfig:
    mask_prob: float = 0.08
    span_len: int = 10


@dataclass(frozen=True, eq=False)
class MaskSet:
    """Sorted, duplicate-free masked frame indices for a length-T utterance."""

    indices: np.ndarray
    T: int

    def __post_init__(self) -> None:
        idx = np.asarray(self.indices, dtype=np.int64)
        object.__setattr__(self, "indices", idx)
        if idx.size and (idx[0] < 0 or idx[-1] >= self.T):
            raise ValueError(f"mask indices must lie in [0, {self.T - 1}]")
        if idx.size and (np.diff(idx) <= 0).any():
            raise ValueError("mask indices must be sorted and duplicate-free")

    def __len__(self) -> int:
        return int(self.indices.size)

    def as_bool(self) -> np.ndarray:
        out = np.zeros(self.T, dtype=bool)
        out[self.indices] = True
        return out


def spans_to_mask(starts: np.ndarray, span_len: int, total_frames: int) -> MaskSet:
    """Union of [s, s + span_len - 1] for every start, clipped to the utterance."""
    starts = np.asarray(starts, dtype=np.int64)
    delta = np.zeros(total_frames + 1, dtype=np.int64)
    delta[starts] += 1
    np.add.at(delta, np.minimum(starts + span_len, total_frames), -1)
    covered = np.cumsum(delta[:total_frames]) > 0
    return MaskSet(np.flatnonzero(covered), total_frames)


def sample_mask(total_frames: int, mask_prob: float, span_len: int, rng: RngStream) -> MaskSet:
    """Draw one span mask; a pure function of (total_frames, config, rng)."""
    if total_frames < 1:
        raise ValueError("total_frames must be >= 1")
    if span_len < 1:
        raise ValueError("span_len must be >= 1")
    if not (0.0 <= mask_prob <= 1.0):
        raise ValueError(f"mask_prob must lie in [0, 1], got {mask_prob}")
    u = rng.generator().random(total_frames)
    starts = np.flatnonzero(u < mask_prob)
    return spans_to_mask(starts, span_len, total_frames)


def independent_masks(
    total_frames: int, cfg: MaskingConfig, seed: int, counter: int = 0
) -> tuple[MaskSet, MaskSet]:
    """(frame mask, word mask) from the "mask-frame" / "mask-pw" streams of `seed`."""
    mask_frame = sample_mask(
        total_frames, cfg.mask_prob, cfg.span_len, RngStream(seed, "mask-frame", counter)
    )
    mask_pw = sample_mask(
        total_frames, cfg.mask_prob, cfg.span_len, RngStream(seed, "mask-pw", counter)
    )
    return mask_frame, mask_pw
