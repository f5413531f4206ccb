"""Desk-scale metrics: rank correlation, clustering agreement, masked accuracy,
boundary scoring, and the word-pair similarity protocol.

The similarity protocol embeds each word file as the mean over frames of a
chosen representation depth, scores each pair by cosine similarity, and
reports the Spearman correlation against the human scores.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from . import workers
from .corpusio import SimilarityPair, read_matrix
from .errors import EmptyMaskError, ZeroVarianceError
from .masking import MaskSet
from .model import Model
from .quantizer import IGNORE_LABEL
from .segmentation import Segment, validate_segments


def _tie_ranks(xs: np.ndarray) -> np.ndarray:
    """1-based ranks; tied values share the average of their rank block."""
    order = np.argsort(xs, kind="stable")
    ranks = np.empty(xs.size, dtype=np.float64)
    i = 0
    while i < xs.size:
        j = i
        while j + 1 < xs.size and xs[order[j + 1]] == xs[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(xs, ys) -> float:
    """Pearson correlation of tie-averaged ranks."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.shape != ys.shape or xs.ndim != 1 or xs.size < 2:
        raise ValueError("need two equal-length sequences of at least 2 values")
    if (xs == xs[0]).all() or (ys == ys[0]).all():
        raise ZeroVarianceError("rank correlation is undefined for a constant sequence")
    rx = _tie_ranks(xs)
    ry = _tie_ranks(ys)
    rx -= rx.mean()
    ry -= ry.mean()
    return float((rx * ry).sum() / np.sqrt((rx * rx).sum() * (ry * ry).sum()))


def _contingency(pred, truth) -> np.ndarray:
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape or pred.ndim != 1 or pred.size < 1:
        raise ValueError("pred and truth must be equal-length non-empty label sequences")
    _, pi = np.unique(pred, return_inverse=True)
    _, ti = np.unique(truth, return_inverse=True)
    table = np.zeros((pi.max() + 1, ti.max() + 1), dtype=np.int64)
    np.add.at(table, (pi, ti), 1)
    return table


def nmi(pred, truth) -> float:
    """Normalized mutual information with arithmetic-mean normalization.

    Two trivial single-cluster labelings agree perfectly (1.0); one trivial
    labeling against a non-trivial one carries no information (0.0).
    """
    table = _contingency(pred, truth)
    n = table.sum()
    pxy = table / n
    px = pxy.sum(axis=1)
    py = pxy.sum(axis=0)
    hx = float(-(px[px > 0] * np.log(px[px > 0])).sum())
    hy = float(-(py[py > 0] * np.log(py[py > 0])).sum())
    if hx == 0.0 and hy == 0.0:
        return 1.0
    nz = pxy > 0
    mutual = float((pxy[nz] * np.log(pxy[nz] / np.outer(px, py)[nz])).sum())
    value = mutual / (0.5 * (hx + hy))
    return float(min(max(value, 0.0), 1.0))


def purity(pred, truth) -> float:
    """Fraction of items whose predicted cluster's majority class matches them."""
    table = _contingency(pred, truth)
    return float(table.max(axis=1).sum() / table.sum())


def masked_accuracy(logits: np.ndarray, targets: np.ndarray, mask: MaskSet) -> float:
    """Fraction of masked, non-ignore frames where argmax(logits) hits the target."""
    logits = np.asarray(logits)
    targets = np.asarray(targets)
    if logits.shape[0] != targets.shape[0] or targets.shape[0] != mask.T:
        raise ValueError(
            f"{logits.shape[0]} logit rows, {targets.shape[0]} targets, mask over {mask.T} frames"
        )
    idx = mask.indices[targets[mask.indices] != IGNORE_LABEL]
    if idx.size == 0:
        raise EmptyMaskError("no masked frame carries a non-ignore target")
    hits = logits[idx].argmax(axis=1) == targets[idx].astype(np.int64)
    return float(hits.mean())


def _boundary_points(segs: list[Segment]) -> list[int]:
    points = {s for s, _ in segs} | {e for _, e in segs}
    return sorted(points)


def boundary_f1(
    hyp: list[Segment], ref: list[Segment], tol: int = 0
) -> tuple[float, float, float]:
    """Greedy one-to-one boundary matching within +-tol frames.

    Boundary positions are the deduplicated segment starts and ends. Both
    lists empty scores 1/1/1; exactly one empty scores 0/0/0.
    """
    validate_segments(hyp)
    validate_segments(ref)
    hb = _boundary_points(hyp)
    rb = _boundary_points(ref)
    if not hb and not rb:
        return 1.0, 1.0, 1.0
    if not hb or not rb:
        return 0.0, 0.0, 0.0
    matches = _match_boundaries(hb, rb, tol)
    precision = matches / len(hb)
    recall = matches / len(rb)
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return precision, recall, f1


def _match_boundaries(hb: list[int], rb: list[int], tol: int) -> int:
    i = j = matches = 0
    while i < len(hb) and j < len(rb):
        if abs(hb[i] - rb[j]) <= tol:
            matches += 1
            i += 1
            j += 1
        elif hb[i] < rb[j]:
            i += 1
        else:
            j += 1
    return matches


def corpus_boundary_f1(
    hyp: dict[str, list[Segment]], ref: dict[str, list[Segment]], tol: int = 0
) -> tuple[float, float, float]:
    """Boundary P/R/F1 with match and boundary counts pooled over utterances."""
    missing = sorted(set(ref) - set(hyp))
    if missing:
        raise ValueError(f"hypothesis is missing utterances: {missing[:5]}")
    matches = n_hyp = n_ref = 0
    for utt_id in ref:
        validate_segments(hyp[utt_id])
        validate_segments(ref[utt_id])
        hb = _boundary_points(hyp[utt_id])
        rb = _boundary_points(ref[utt_id])
        matches += _match_boundaries(hb, rb, tol)
        n_hyp += len(hb)
        n_ref += len(rb)
    if n_hyp == 0 and n_ref == 0:
        return 1.0, 1.0, 1.0
    precision = matches / n_hyp if n_hyp else 0.0
    recall = matches / n_ref if n_ref else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return precision, recall, f1


def embed_word(model: Model, feats: np.ndarray, layer: int) -> np.ndarray:
    """Mean over frames of the representation at `layer` (no masking)."""
    feats = np.asarray(feats)
    if feats.shape[0] == 0:
        raise ValueError("cannot embed an empty feature matrix")
    states = model.hidden_states(feats)
    if not (0 <= layer < len(states)):
        raise ValueError(f"layer {layer} outside [0, {len(states) - 1}]")
    return states[layer].mean(axis=0)


def similarity_judgement(
    model: Model, pairs: list[SimilarityPair], layer: int, base_dir: Path | str = "."
) -> float:
    """Spearman correlation between cosine pair similarities and human scores."""
    if len(pairs) < 2:
        raise ValueError("need at least 2 pairs")
    base = Path(base_dir)
    names = sorted({p.utt_a for p in pairs} | {p.utt_b for p in pairs})

    def embed_file(name: str) -> np.ndarray:
        return embed_word(model, read_matrix(base / name), layer)

    vectors = dict(zip(names, workers.map_ordered(embed_file, names)))
    sims = []
    for p in pairs:
        a, b = vectors[p.utt_a], vectors[p.utt_b]
        denom = float(np.linalg.norm(a) * np.linalg.norm(b))
        if denom == 0.0:
            raise ValueError(f"zero-norm embedding in pair ({p.utt_a}, {p.utt_b})")
        sims.append(float(a @ b) / denom)
    return spearman(sims, [p.human_score for p in pairs])
