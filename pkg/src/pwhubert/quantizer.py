"""Segment pooling, seeded k-means, and frame-duplicated target sequences.

Targets are uint32 label sequences, one label per frame, with the reserved
value IGNORE_LABEL (2^32 - 1) marking frames that carry no target (only the
zero-segment fallback produces it). K-means is k-means++ initialized from
RngStream(seed, "kmeans-init", restart), Lloyd-iterated in float64 with
fixed-chunk parallel assignment so results are independent of the worker
count, and repaired by moving empty clusters onto the points farthest from
their centroids.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import workers
from .numerics import RngStream
from .segmentation import Segment, detect_segments, extend_coverage, midpoint_adjust, validate_segments

IGNORE_LABEL = np.uint32(0xFFFFFFFF)

TARGET_MODES = ("attention", "oracle_boundary", "oracle_id")


@dataclass
class Codebook:
    """K centroids plus the training inertia (sum of squared point-to-centroid distances)."""

    centroids: np.ndarray  # (k, dim) float32
    inertia: float
    seed: int | None = None
    inertia_history: tuple[float, ...] = field(default=(), repr=False)

    @property
    def k(self) -> int:
        return int(self.centroids.shape[0])

    @property
    def dim(self) -> int:
        return int(self.centroids.shape[1])


def pool_segments(feats: np.ndarray, segs: list[Segment]) -> np.ndarray:
    """Mean of the feature rows inside each segment; one output row per segment."""
    feats = np.asarray(feats)
    validate_segments(segs)
    if segs and segs[-1][1] >= feats.shape[0]:
        raise ValueError(
            f"segment ends at frame {segs[-1][1]} but features have {feats.shape[0]} rows"
        )
    out = np.empty((len(segs), feats.shape[1]), dtype=feats.dtype)
    for i, (s, e) in enumerate(segs):
        out[i] = feats[s : e + 1].mean(axis=0)
    return out


def _nearest_chunked(points: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-point nearest centroid (lowest index on ties) and squared distance.

    Chunk boundaries are fixed, so labels, distances and their sums do not
    depend on the worker count.
    """
    cent_sq = (centroids**2).sum(axis=1)

    def one_chunk(span: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
        a, b = span
        x = points[a:b]
        d2 = (x**2).sum(axis=1)[:, None] - 2.0 * (x @ centroids.T) + cent_sq[None, :]
        np.maximum(d2, 0.0, out=d2)
        labels = d2.argmin(axis=1)
        return labels, d2[np.arange(b - a), labels]

    parts = workers.map_ordered(one_chunk, workers.chunk_spans(points.shape[0]))
    labels = np.concatenate([p[0] for p in parts]) if parts else np.empty(0, dtype=np.int64)
    dist2 = np.concatenate([p[1] for p in parts]) if parts else np.empty(0, dtype=np.float64)
    return labels.astype(np.int64), dist2


def _cluster_sums(points: np.ndarray, labels: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-cluster coordinate sums and counts, combined in ascending chunk order."""

    def one_chunk(span: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
        a, b = span
        sums = np.zeros((k, points.shape[1]), dtype=np.float64)
        np.add.at(sums, labels[a:b], points[a:b])
        counts = np.bincount(labels[a:b], minlength=k)
        return sums, counts

    parts = workers.map_ordered(one_chunk, workers.chunk_spans(points.shape[0]))
    sums = np.zeros((k, points.shape[1]), dtype=np.float64)
    counts = np.zeros(k, dtype=np.int64)
    for part_sums, part_counts in parts:
        sums += part_sums
        counts += part_counts
    return sums, counts


def _plusplus_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: subsequent centers drawn with probability ~ nearest distance^2."""
    n = points.shape[0]
    centroids = np.empty((k, points.shape[1]), dtype=np.float64)
    centroids[0] = points[int(rng.integers(n))]
    d2 = ((points - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            idx = int(rng.integers(n))
        else:
            r = rng.random() * total
            idx = min(int(np.searchsorted(np.cumsum(d2), r, side="right")), n - 1)
        centroids[j] = points[idx]
        np.minimum(d2, ((points - centroids[j]) ** 2).sum(axis=1), out=d2)
    return centroids


def kmeans_fit(
    points: np.ndarray,
    k: int,
    seed: int,
    max_iter: int = 100,
    tol: float = 1e-4,
    restarts: int = 10,
) -> Codebook:
    """Multi-restart Lloyd k-means; the restart with the lowest inertia wins.

    Restart r initializes from RngStream(seed, "kmeans-init", r). Iteration
    stops when the largest centroid shift drops below `tol`. Empty clusters
    are re-seeded onto the point currently farthest from its centroid. The
    stored inertia is recomputed against the final float32 centroids;
    `inertia_history` keeps the per-iteration float64 values of the winning
    restart (non-increasing by construction).
    """
    points = np.ascontiguousarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] < 1:
        raise ValueError("points must be a (n, dim) matrix with dim >= 1")
    n = points.shape[0]
    if k < 1:
        raise ValueError("k must be >= 1")
    if n < k:
        raise ValueError(f"need at least k={k} points, got {n}")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    if restarts < 1:
        raise ValueError("restarts must be >= 1")

    best: tuple[float, np.ndarray, tuple[float, ...]] | None = None
    for restart in range(restarts):
        rng = RngStream(seed, "kmeans-init", restart).generator()
        centroids = _plusplus_init(points, k, rng)
        history: list[float] = []
        for _ in range(max_iter):
            labels, dist2 = _nearest_chunked(points, centroids)
            history.append(float(dist2.sum()))
            sums, counts = _cluster_sums(points, labels, k)
            new_centroids = np.where(counts[:, None] > 0, sums / np.maximum(counts, 1)[:, None], centroids)
            empty = np.flatnonzero(counts == 0)
            if empty.size:
                d2 = dist2.copy()
                for j in empty:
                    farthest = int(np.argmax(d2))
                    new_centroids[j] = points[farthest]
                    d2[farthest] = -1.0
            shift = np.sqrt(((new_centroids - centroids) ** 2).sum(axis=1)).max()
            centroids = new_centroids
            if shift < tol:
                break
        _, dist2 = _nearest_chunked(points, centroids)
        final_inertia = float(dist2.sum())
        history.append(final_inertia)
        if best is None or final_inertia < best[0]:
            best = (final_inertia, centroids, tuple(history))

    assert best is not None
    centroids32 = best[1].astype(np.float32)
    cb = Codebook(centroids=centroids32, inertia=0.0, seed=seed, inertia_history=best[2])
    cb.inertia = codebook_inertia(cb, points)
    return cb


def codebook_inertia(cb: Codebook, points: np.ndarray) -> float:
    """Sum of squared distances of `points` to their nearest stored centroid."""
    points = np.ascontiguousarray(points, dtype=np.float64)
    _, dist2 = _nearest_chunked(points, cb.centroids.astype(np.float64))
    return float(dist2.sum())


def assign(cb: Codebook, points: np.ndarray) -> np.ndarray:
    """Nearest-centroid label for each point; ties go to the lowest centroid index."""
    points = np.asarray(points)
    if points.ndim != 2 or points.shape[1] != cb.dim:
        raise ValueError(f"points of shape {points.shape} do not match codebook dim {cb.dim}")
    labels, _ = _nearest_chunked(
        np.ascontiguousarray(points, dtype=np.float64), cb.centroids.astype(np.float64)
    )
    return labels


def build_targets(ids: np.ndarray, segs: list[Segment], total_frames: int) -> np.ndarray:
    """Duplicate each segment's label across the segment's frames.

    `segs` must tile [0, total_frames - 1] exactly; with no segments at all
    every frame gets IGNORE_LABEL.
    """
    ids = np.asarray(ids)
    if len(ids) != len(segs):
        raise ValueError(f"{len(ids)} ids for {len(segs)} segments")
    if not segs:
        return np.full(total_frames, IGNORE_LABEL, dtype=np.uint32)
    validate_segments(segs)
    if segs[0][0] != 0 or segs[-1][1] != total_frames - 1:
        raise ValueError(f"segments must cover [0, {total_frames - 1}] exactly")
    for (_, e_prev), (s_next, _) in zip(segs, segs[1:]):
        if s_next != e_prev + 1:
            raise ValueError(f"gap between frame {e_prev} and frame {s_next}")
    if (ids.astype(np.int64) < 0).any() or (ids.astype(np.int64) >= int(IGNORE_LABEL)).any():
        raise ValueError("segment ids must lie in [0, 2^32 - 2]")
    out = np.empty(total_frames, dtype=np.uint32)
    for label, (s, e) in zip(ids, segs):
        out[s : e + 1] = np.uint32(label)
    return out


def generate_targets(
    feats: np.ndarray,
    mode: str,
    *,
    attn: np.ndarray | None = None,
    oracle_segs: list[Segment] | None = None,
    oracle_ids: np.ndarray | None = None,
    codebook: Codebook | None = None,
    threshold: float = 0.8,
) -> np.ndarray:
    """Full target pipeline for one utterance.

    attention       detect(threshold) -> midpoint widen -> coverage extend -> pool -> assign
    oracle_boundary supplied segments  ->                  coverage extend -> pool -> assign
    oracle_id       supplied segments + supplied ids       (no pooling, no codebook)

    An utterance with no segments (possible only in attention mode) yields an
    all-IGNORE sequence.
    """
    feats = np.asarray(feats)
    total_frames = feats.shape[0]
    if mode not in TARGET_MODES:
        raise ValueError(f"unknown target mode {mode!r}; expected one of {TARGET_MODES}")

    if mode == "attention":
        if attn is None or codebook is None:
            raise ValueError("attention mode needs an attention profile and a codebook")
        detected = detect_segments(attn, threshold)
        if not detected:
            return np.full(total_frames, IGNORE_LABEL, dtype=np.uint32)
        segs = extend_coverage(midpoint_adjust(detected), total_frames)
    else:
        if oracle_segs is None:
            raise ValueError(f"{mode} mode needs supplied segments")
        segs = extend_coverage(oracle_segs, total_frames)
        if not segs:
            return np.full(total_frames, IGNORE_LABEL, dtype=np.uint32)

    if mode == "oracle_id":
        if oracle_ids is None:
            raise ValueError("oracle_id mode needs supplied ids")
        ids = np.asarray(oracle_ids)
    else:
        if codebook is None:
            raise ValueError(f"{mode} mode needs a codebook")
        ids = assign(codebook, pool_segments(feats, segs))
    return build_targets(ids, segs, total_frames)


def frame_targets(feats: np.ndarray, k_frame: int, seed: int, **kmeans_kwargs) -> np.ndarray:
    """Per-frame labels from clustering the raw frames of `feats` (no IGNORE)."""
    feats = np.asarray(feats)
    cb = kmeans_fit(feats, k_frame, seed, **kmeans_kwargs)
    return assign(cb, feats).astype(np.uint32)
