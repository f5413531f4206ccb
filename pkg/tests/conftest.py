"""Shared fixtures: a small synthetic corpus with oracle-boundary targets."""

from types import SimpleNamespace

import numpy as np
import pytest

from pwhubert.corpusio import (
    SynthConfig,
    read_manifest,
    read_matrix,
    read_segments,
    read_targets,
    synth_generate,
    write_targets,
)
from pwhubert.quantizer import assign, generate_targets, kmeans_fit, pool_segments
from pwhubert.segmentation import extend_coverage


@pytest.fixture(scope="session")
def tiny_corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("tiny_corpus")
    cfg = SynthConfig(
        vocab_size=6,
        word_len_range=(4, 7),
        words_per_utt_range=(3, 5),
        feature_dim=8,
        noise_sigma=0.05,
        n_utterances=12,
        seed=11,
    )
    manifest_path = synth_generate(cfg, root)
    entries = read_manifest(manifest_path)
    segments = read_segments(root / "segments.jsonl")
    feats = {e.utt_id: read_matrix(root / e.features) for e in entries}
    return SimpleNamespace(
        root=root, cfg=cfg, manifest=manifest_path, entries=entries, segments=segments, feats=feats
    )


@pytest.fixture(scope="session")
def tiny_targets(tiny_corpus):
    """Oracle-boundary word targets (k=6) and frame targets (k=8) for tiny_corpus."""
    c = tiny_corpus
    pooled = [
        pool_segments(c.feats[e.utt_id], extend_coverage(c.segments[e.utt_id], c.feats[e.utt_id].shape[0]))
        for e in c.entries
    ]
    codebook = kmeans_fit(np.concatenate(pooled, axis=0), 6, seed=3)
    pw_dir = c.root / "pw_targets"
    pw_dir.mkdir()
    for e in c.entries:
        targets = generate_targets(
            c.feats[e.utt_id], "oracle_boundary", oracle_segs=c.segments[e.utt_id], codebook=codebook
        )
        write_targets(pw_dir / f"{e.utt_id}.pwt", targets)

    stacked = np.concatenate([c.feats[e.utt_id] for e in c.entries], axis=0)
    frame_cb = kmeans_fit(stacked, 8, seed=4)
    frame_dir = c.root / "frame_targets"
    frame_dir.mkdir()
    for e in c.entries:
        write_targets(frame_dir / f"{e.utt_id}.pwt", assign(frame_cb, c.feats[e.utt_id]).astype(np.uint32))

    pw = {e.utt_id: read_targets(pw_dir / f"{e.utt_id}.pwt") for e in c.entries}
    frame = {e.utt_id: read_targets(frame_dir / f"{e.utt_id}.pwt") for e in c.entries}
    return SimpleNamespace(
        pw_dir=pw_dir, frame_dir=frame_dir, codebook=codebook, pw=pw, frame=frame
    )
