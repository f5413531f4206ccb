"""Bit-exact file formats and synthetic corpus generation.

All binary formats are little-endian and fixed-layout, so files written on
one platform verify on any other:

  PWF1  feature matrix   magic 'PWF1', u32 rows, u32 cols, rows*cols f32 row-major
  PWT1  label sequence   magic 'PWT1', u32 length, length u32 labels (IGNORE = 0xFFFFFFFF)
  PWC1  codebook         magic 'PWC1', u32 k, u32 dim, k*dim f32 row-major, f64 inertia

Segment files are JSON lines ({"utt": ..., "segments": [[start, end], ...]}),
the corpus manifest is a JSON array with paths relative to the manifest's
directory, and similarity pairs are a CSV with header utt_a,utt_b,human_score.

The synthetic corpus plants word structure: a fixed prototype frame sequence
per vocabulary word, utterances as noisy concatenations of sampled words, a
0/1 attention profile lit on the middle 60% of each word (so detected runs
sit strictly inside the true words), plus oracle boundaries and word ids.
"""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import workers
from .errors import BadMagic, DimOverflow, Truncated
from .numerics import RngStream
from .quantizer import Codebook
from .segmentation import Segment, validate_segments

MAGIC_MATRIX = b"PWF1"
MAGIC_TARGETS = b"PWT1"
MAGIC_CODEBOOK = b"PWC1"

_U32_MAX = 0xFFFFFFFF


def _read_exact(f, n: int, what: str) -> bytes:
    offset = f.tell()
    data = f.read(n)
    if len(data) != n:
        raise Truncated(f"{what}: needed {n} bytes at offset {offset}, got {len(data)}")
    return data


def _check_magic(f, magic: bytes) -> None:
    got = _read_exact(f, len(magic), "magic")
    if got != magic:
        raise BadMagic(f"expected magic {magic!r} at offset 0, found {got!r}")


def _check_dim(value: int, what: str) -> int:
    if not (0 <= value <= _U32_MAX):
        raise DimOverflow(f"{what} = {value} does not fit an unsigned 32-bit field")
    return value


def write_matrix(path: Path | str, m: np.ndarray) -> None:
    m = np.asarray(m)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {m.shape}")
    rows = _check_dim(m.shape[0], "rows")
    cols = _check_dim(m.shape[1], "cols")
    with open(path, "wb") as f:
        f.write(MAGIC_MATRIX)
        f.write(struct.pack("<II", rows, cols))
        f.write(np.ascontiguousarray(m, dtype="<f4").tobytes())


def read_matrix(path: Path | str) -> np.ndarray:
    with open(path, "rb") as f:
        _check_magic(f, MAGIC_MATRIX)
        rows, cols = struct.unpack("<II", _read_exact(f, 8, "matrix header"))
        payload = _read_exact(f, 4 * rows * cols, f"{rows}x{cols} matrix payload")
    m = np.frombuffer(payload, dtype="<f4").reshape(rows, cols).astype(np.float32)
    if m.size and not np.isfinite(m).all():
        raise ValueError(f"{path}: matrix contains non-finite values")
    return m


def write_targets(path: Path | str, labels: np.ndarray) -> None:
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise ValueError(f"expected a 1-D label sequence, got shape {labels.shape}")
    n = _check_dim(labels.shape[0], "length")
    as_int = labels.astype(np.int64)
    if (as_int < 0).any() or (as_int > _U32_MAX).any():
        raise ValueError("labels must fit an unsigned 32-bit field")
    with open(path, "wb") as f:
        f.write(MAGIC_TARGETS)
        f.write(struct.pack("<I", n))
        f.write(labels.astype("<u4").tobytes())


def read_targets(path: Path | str) -> np.ndarray:
    with open(path, "rb") as f:
        _check_magic(f, MAGIC_TARGETS)
        (n,) = struct.unpack("<I", _read_exact(f, 4, "target header"))
        payload = _read_exact(f, 4 * n, f"{n} target labels")
    return np.frombuffer(payload, dtype="<u4").astype(np.uint32)


def write_codebook(path: Path | str, cb: Codebook) -> None:
    k = _check_dim(cb.k, "k")
    dim = _check_dim(cb.dim, "dim")
    with open(path, "wb") as f:
        f.write(MAGIC_CODEBOOK)
        f.write(struct.pack("<II", k, dim))
        f.write(np.ascontiguousarray(cb.centroids, dtype="<f4").tobytes())
        f.write(struct.pack("<d", float(cb.inertia)))


def read_codebook(path: Path | str) -> Codebook:
    with open(path, "rb") as f:
        _check_magic(f, MAGIC_CODEBOOK)
        k, dim = struct.unpack("<II", _read_exact(f, 8, "codebook header"))
        payload = _read_exact(f, 4 * k * dim, f"{k}x{dim} centroid payload")
        (inertia,) = struct.unpack("<d", _read_exact(f, 8, "inertia"))
    centroids = np.frombuffer(payload, dtype="<f4").reshape(k, dim).astype(np.float32)
    if centroids.size and not np.isfinite(centroids).all():
        raise ValueError(f"{path}: codebook contains non-finite centroids")
    return Codebook(centroids=centroids, inertia=float(inertia), seed=None)


def write_segments(path: Path | str, items: list[tuple[str, list[Segment]]]) -> None:
    """One JSON object per line: {"utt": id, "segments": [[start, end], ...]}."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for utt_id, segs in items:
            validate_segments(segs)
            f.write(json.dumps({"utt": utt_id, "segments": [[s, e] for s, e in segs]}))
            f.write("\n")


def read_segments(path: Path | str) -> dict[str, list[Segment]]:
    out: dict[str, list[Segment]] = {}
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                utt_id = obj["utt"]
                segs = [(int(s), int(e)) for s, e in obj["segments"]]
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{line_no}: malformed segment line ({exc})") from None
            validate_segments(segs)
            out[utt_id] = segs
    return out


@dataclass(frozen=True)
class ManifestEntry:
    utt_id: str
    features: str
    oracle_segments: str
    oracle_ids: str
    attention: str


def write_manifest(path: Path | str, entries: list[ManifestEntry]) -> None:
    payload = [
        {
            "utt_id": e.utt_id,
            "features": e.features,
            "oracle_segments": e.oracle_segments,
            "oracle_ids": e.oracle_ids,
            "attention": e.attention,
        }
        for e in entries
    ]
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(payload, f, indent=1)
        f.write("\n")


def read_manifest(path: Path | str, check_files: bool = True) -> list[ManifestEntry]:
    path = Path(path)
    with open(path, "r", encoding="utf-8") as f:
        payload = json.load(f)
    if not isinstance(payload, list):
        raise ValueError(f"{path}: manifest must be a JSON array")
    entries = []
    for obj in payload:
        try:
            entry = ManifestEntry(
                utt_id=obj["utt_id"],
                features=obj["features"],
                oracle_segments=obj["oracle_segments"],
                oracle_ids=obj["oracle_ids"],
                attention=obj["attention"],
            )
        except (KeyError, TypeError) as exc:
            raise ValueError(f"{path}: malformed manifest entry ({exc})") from None
        if check_files:
            for rel in (entry.features, entry.oracle_segments, entry.oracle_ids, entry.attention):
                if not (path.parent / rel).exists():
                    raise ValueError(f"{path}: referenced file {rel} does not exist")
        entries.append(entry)
    return entries


@dataclass(frozen=True)
class SimilarityPair:
    utt_a: str
    utt_b: str
    human_score: float


def write_pairs(path: Path | str, pairs: list[SimilarityPair]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["utt_a", "utt_b", "human_score"])
        for p in pairs:
            writer.writerow([p.utt_a, p.utt_b, repr(float(p.human_score))])


def read_pairs(path: Path | str) -> list[SimilarityPair]:
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != ["utt_a", "utt_b", "human_score"]:
            raise ValueError(f"{path}: expected header utt_a,utt_b,human_score, got {header}")
        pairs = []
        for row in reader:
            if not row:
                continue
            if len(row) != 3:
                raise ValueError(f"{path}: malformed pair row {row}")
            pairs.append(SimilarityPair(row[0], row[1], float(row[2])))
    return pairs


@dataclass(frozen=True)
class SynthConfig:
    vocab_size: int = 20
    word_len_range: tuple[int, int] = (4, 9)
    words_per_utt_range: tuple[int, int] = (3, 8)
    feature_dim: int = 16
    noise_sigma: float = 0.05
    n_utterances: int = 200
    seed: int = 0

    def validate(self) -> None:
        if self.vocab_size < 2:
            raise ValueError("vocab_size must be >= 2")
        lo, hi = self.word_len_range
        if not (3 <= lo <= hi):
            raise ValueError("word_len_range must satisfy 3 <= min <= max (the attention core needs room)")
        wlo, whi = self.words_per_utt_range
        if not (1 <= wlo <= whi):
            raise ValueError("words_per_utt_range must satisfy 1 <= min <= max")
        if self.feature_dim < 1 or self.n_utterances < 1:
            raise ValueError("feature_dim and n_utterances must be >= 1")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")


def _prototypes(cfg: SynthConfig) -> list[np.ndarray]:
    """One fixed unit-norm frame sequence per vocabulary word."""
    rng = RngStream(cfg.seed, "prototypes").generator()
    lo, hi = cfg.word_len_range
    lengths = rng.integers(lo, hi + 1, size=cfg.vocab_size)
    protos = []
    for length in lengths:
        rows = rng.normal(size=(int(length), cfg.feature_dim))
        rows /= np.linalg.norm(rows, axis=1, keepdims=True)
        protos.append(rows.astype(np.float32))
    return protos


def _attention_profile(segs: list[Segment], total_frames: int) -> np.ndarray:
    """1.0 on the middle 60% of each word, 0.0 elsewhere (cores never touch)."""
    attn = np.zeros((total_frames, 1), dtype=np.float32)
    for s, e in segs:
        length = e - s + 1
        core = max(1, int(0.6 * length))
        lead = (length - core) // 2
        attn[s + lead : s + lead + core, 0] = 1.0
    return attn


def _render_utterance(cfg: SynthConfig, protos: list[np.ndarray], index: int):
    utt_id = f"utt_{index:05d}"
    rng = RngStream(cfg.seed, utt_id).generator()
    wlo, whi = cfg.words_per_utt_range
    n_words = int(rng.integers(wlo, whi + 1))
    word_ids = rng.integers(0, cfg.vocab_size, size=n_words)
    pieces, segs, cursor = [], [], 0
    for w in word_ids:
        proto = protos[int(w)]
        pieces.append(proto)
        segs.append((cursor, cursor + proto.shape[0] - 1))
        cursor += proto.shape[0]
    feats = np.concatenate(pieces, axis=0).astype(np.float64)
    if cfg.noise_sigma > 0:
        feats = feats + cfg.noise_sigma * rng.normal(size=feats.shape)
    return utt_id, feats.astype(np.float32), segs, word_ids.astype(np.uint32)


def synth_generate(cfg: SynthConfig, out_dir: Path | str) -> Path:
    """Write the corpus under `out_dir`; returns the manifest path.

    Per utterance: <id>.pwf features, <id>.attn.pwf attention, <id>.ids.pwt
    word ids (one per word). Oracle boundaries for every utterance go into a
    single segments.jsonl that each manifest entry references.
    """
    cfg.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    protos = _prototypes(cfg)
    rendered = workers.map_ordered(
        lambda i: _render_utterance(cfg, protos, i), range(cfg.n_utterances)
    )
    entries, seg_items = [], []
    for utt_id, feats, segs, word_ids in rendered:
        write_matrix(out_dir / f"{utt_id}.pwf", feats)
        write_matrix(out_dir / f"{utt_id}.attn.pwf", _attention_profile(segs, feats.shape[0]))
        write_targets(out_dir / f"{utt_id}.ids.pwt", word_ids)
        seg_items.append((utt_id, segs))
        entries.append(
            ManifestEntry(
                utt_id=utt_id,
                features=f"{utt_id}.pwf",
                oracle_segments="segments.jsonl",
                oracle_ids=f"{utt_id}.ids.pwt",
                attention=f"{utt_id}.attn.pwf",
            )
        )
    write_segments(out_dir / "segments.jsonl", seg_items)
    manifest_path = out_dir / "manifest.json"
    write_manifest(manifest_path, entries)
    return manifest_path


def synth_pairs(
    cfg: SynthConfig, out_dir: Path | str, n_pairs: int, seed: int | None = None
) -> Path:
    """Write 2*n_pairs single-word similarity pairs; returns the CSV path.

    Half the pairs are two noisy instances of the same word (human score in
    [4.5, 6.5]), half are instances of two different words (score in
    [0.5, 2.5]). Word prototypes are the corpus prototypes of `cfg`.
    """
    cfg.validate()
    if n_pairs < 1:
        raise ValueError("n_pairs must be >= 1")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    protos = _prototypes(cfg)
    rng = RngStream(cfg.seed if seed is None else seed, "pairs").generator()

    def instance(name: str, word: int) -> str:
        feats = protos[word].astype(np.float64)
        if cfg.noise_sigma > 0:
            feats = feats + cfg.noise_sigma * rng.normal(size=feats.shape)
        write_matrix(out_dir / name, feats.astype(np.float32))
        return name

    pairs = []
    for p in range(n_pairs):
        w = int(rng.integers(cfg.vocab_size))
        a = instance(f"pair_{p:04d}_same_a.pwf", w)
        b = instance(f"pair_{p:04d}_same_b.pwf", w)
        pairs.append(SimilarityPair(a, b, 4.5 + 2.0 * rng.random()))
        w1 = int(rng.integers(cfg.vocab_size))
        w2 = int(rng.integers(cfg.vocab_size - 1))
        w2 = w2 + 1 if w2 >= w1 else w2
        a = instance(f"pair_{p:04d}_diff_a.pwf", w1)
        b = instance(f"pair_{p:04d}_diff_b.pwf", w2)
        pairs.append(SimilarityPair(a, b, 0.5 + 2.0 * rng.random()))
    pairs_path = out_dir / "pairs.csv"
    write_pairs(pairs_path, pairs)
    return pairs_path
