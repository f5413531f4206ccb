"""Word-segment extraction from per-frame attention profiles.

A segment list is an ordered list of (start, end) frame intervals, inclusive
on both ends, strictly increasing and non-overlapping. The pipeline is:
threshold the attention profile into maximal runs (these tend to sit inside
the true words), widen each run to the midpoint between its neighbours, then
stretch the first/last segment so the list tiles the whole utterance.
"""

from __future__ import annotations

import numpy as np

Segment = tuple[int, int]


def validate_segments(segs: list[Segment]) -> None:
    """Raise ValueError unless `segs` is ordered, non-overlapping and in-range."""
    prev_end = -1
    for i, (s, e) in enumerate(segs):
        if not (0 <= s <= e):
            raise ValueError(f"segment {i} = ({s}, {e}) is not a valid inclusive interval")
        if s <= prev_end:
            raise ValueError(f"segment {i} = ({s}, {e}) overlaps or precedes its neighbour")
        prev_end = e


def detect_segments(attn: np.ndarray, threshold: float = 0.8) -> list[Segment]:
    """Maximal runs of frames whose attention value exceeds `threshold`.

    `attn` is a length-T profile with values in [0, 1] (a (T, 1) matrix is
    accepted and flattened). Returns a possibly empty segment list.
    """
    if not (0.0 <= threshold <= 1.0):
        raise ValueError(f"threshold must lie in [0, 1], got {threshold}")
    attn = np.asarray(attn, dtype=np.float64).reshape(-1)
    if attn.size == 0:
        raise ValueError("attention profile is empty")
    if attn.min() < 0.0 or attn.max() > 1.0:
        raise ValueError("attention values must lie in [0, 1]")
    above = attn > threshold
    edges = np.flatnonzero(np.diff(np.concatenate(([False], above, [False])).astype(np.int8)))
    starts, stops = edges[0::2], edges[1::2]
    return [(int(s), int(t - 1)) for s, t in zip(starts, stops)]


def midpoint_adjust(segs: list[Segment]) -> list[Segment]:
    """Widen segments to the midpoints between adjacent boundaries.

    For each adjacent pair, the split frame is m = floor((end_prev + start_next) / 2);
    the previous segment ends at m and the next starts at m + 1, so the floor
    assigns the shared midpoint frame to the earlier segment. The very first
    start and the very last end are kept. The result tiles [start_1, end_u]
    with no gaps.
    """
    if not segs:
        raise ValueError("cannot midpoint-adjust an empty segment list")
    validate_segments(segs)
    starts = [s for s, _ in segs]
    ends = [e for _, e in segs]
    for i in range(1, len(segs)):
        m = (ends[i - 1] + starts[i]) // 2
        ends[i - 1] = m
        starts[i] = m + 1
    return list(zip(starts, ends))


def extend_coverage(segs: list[Segment], total_frames: int) -> list[Segment]:
    """Stretch the first segment to frame 0 and the last to frame T-1.

    Interior boundaries are untouched; an empty list passes through empty.
    Input segments must already be contiguous (e.g. midpoint_adjust output).
    """
    if not segs:
        return []
    validate_segments(segs)
    if segs[-1][1] >= total_frames:
        raise ValueError(
            f"segments end at frame {segs[-1][1]} but the utterance has only {total_frames} frames"
        )
    out = list(segs)
    out[0] = (0, out[0][1])
    out[-1] = (out[-1][0], total_frames - 1)
    return out
