"""Single `pwhubert` executable exposing the pipeline as subcommands.

Exit codes: 0 success, 1 usage error (message on stderr), 2 data or format
error. Every subcommand is deterministic for fixed flags and seed; the
PWHUBERT_WORKERS environment variable sizes internal worker pools without
ever changing results. Metric subcommands print one JSON object to stdout.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import corpusio, evaluation, quantizer, segmentation
from .errors import EmptyMaskError, FormatError, ZeroVarianceError
from .masking import MaskingConfig
from .model import Model, ModelConfig, gradcheck, load_checkpoint, make_gradcheck_batch
from .quantizer import IGNORE_LABEL
from .trainer import RunConfig, train

GRADCHECK_THRESHOLD = 1e-4


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits 2; usage errors must exit 1
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _emit(obj: dict) -> None:
    print(json.dumps(obj))


def _segment_mode(mode_flag: str) -> str:
    return mode_flag.replace("-", "_")


def _pipeline_segments(attn: np.ndarray, threshold: float) -> list[segmentation.Segment]:
    detected = segmentation.detect_segments(attn, threshold)
    if not detected:
        return []
    return segmentation.extend_coverage(segmentation.midpoint_adjust(detected), attn.shape[0])


def _oracle_segments(manifest_path: Path, entries) -> dict[str, list[segmentation.Segment]]:
    cache: dict[Path, dict[str, list[segmentation.Segment]]] = {}
    out = {}
    for e in entries:
        seg_path = (manifest_path.parent / e.oracle_segments).resolve()
        if seg_path not in cache:
            cache[seg_path] = corpusio.read_segments(seg_path)
        if e.utt_id not in cache[seg_path]:
            raise ValueError(f"{seg_path} has no segments for {e.utt_id}")
        out[e.utt_id] = cache[seg_path][e.utt_id]
    return out


def cmd_synth(args) -> int:
    cfg = corpusio.SynthConfig(
        vocab_size=args.vocab,
        word_len_range=(args.word_len[0], args.word_len[1]),
        words_per_utt_range=(args.words_per_utt[0], args.words_per_utt[1]),
        feature_dim=args.feature_dim,
        noise_sigma=args.noise_sigma,
        n_utterances=args.utterances,
        seed=args.seed,
    )
    manifest = corpusio.synth_generate(cfg, args.out)
    result = {"manifest": str(manifest), "utterances": cfg.n_utterances}
    if args.pairs:
        pairs_path = corpusio.synth_pairs(cfg, args.out, args.pairs)
        result["pairs"] = str(pairs_path)
    _emit(result)
    return 0


def cmd_segment(args) -> int:
    items = []
    if args.attn is not None:
        attn = corpusio.read_matrix(args.attn)
        items.append((Path(args.attn).stem, _pipeline_segments(attn, args.threshold)))
    else:
        manifest_path = Path(args.manifest)
        for e in corpusio.read_manifest(manifest_path):
            attn = corpusio.read_matrix(manifest_path.parent / e.attention)
            items.append((e.utt_id, _pipeline_segments(attn, args.threshold)))
    corpusio.write_segments(args.out, items)
    _emit({"out": str(args.out), "utterances": len(items)})
    return 0


def _pooled_rows(args, entries, manifest_path: Path) -> np.ndarray:
    oracle = _oracle_segments(manifest_path, entries) if args.boundary == "oracle" else None
    pooled = []
    for e in entries:
        feats = corpusio.read_matrix(manifest_path.parent / e.features)
        if args.boundary == "attention":
            attn = corpusio.read_matrix(manifest_path.parent / e.attention)
            segs = _pipeline_segments(attn, args.threshold)
        else:
            segs = segmentation.extend_coverage(oracle[e.utt_id], feats.shape[0])
        if segs:
            pooled.append(quantizer.pool_segments(feats, segs))
    if not pooled:
        raise ValueError("no segments found in the whole corpus; nothing to cluster")
    return np.concatenate(pooled, axis=0)


def cmd_fit_codebook(args) -> int:
    manifest_path = Path(args.manifest)
    entries = corpusio.read_manifest(manifest_path)
    points = _pooled_rows(args, entries, manifest_path)
    cb = quantizer.kmeans_fit(
        points, args.clusters, args.seed, max_iter=args.max_iter, tol=args.tol, restarts=args.restarts
    )
    corpusio.write_codebook(args.out, cb)
    _emit({"out": str(args.out), "k": cb.k, "dim": cb.dim, "points": int(points.shape[0]), "inertia": cb.inertia})
    return 0


def cmd_targets(args) -> int:
    mode = _segment_mode(args.mode)
    manifest_path = Path(args.manifest)
    entries = corpusio.read_manifest(manifest_path)
    codebook = None
    if mode != "oracle_id":
        if args.codebook is None:
            raise ValueError(f"--codebook is required for mode {args.mode}")
        codebook = corpusio.read_codebook(args.codebook)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    oracle = _oracle_segments(manifest_path, entries) if mode != "attention" else None
    for e in entries:
        feats = corpusio.read_matrix(manifest_path.parent / e.features)
        kwargs = {"codebook": codebook, "threshold": args.threshold}
        if mode == "attention":
            kwargs["attn"] = corpusio.read_matrix(manifest_path.parent / e.attention)
        else:
            kwargs["oracle_segs"] = oracle[e.utt_id]
            if mode == "oracle_id":
                kwargs["oracle_ids"] = corpusio.read_targets(manifest_path.parent / e.oracle_ids)
        targets = quantizer.generate_targets(feats, mode, **kwargs)
        corpusio.write_targets(out_dir / f"{e.utt_id}.pwt", targets)
    _emit({"out": str(out_dir), "mode": args.mode, "utterances": len(entries)})
    return 0


def cmd_frame_targets(args) -> int:
    manifest_path = Path(args.manifest)
    entries = corpusio.read_manifest(manifest_path)
    feats = [corpusio.read_matrix(manifest_path.parent / e.features) for e in entries]
    stacked = np.concatenate(feats, axis=0)
    cb = quantizer.kmeans_fit(
        stacked, args.clusters, args.seed, max_iter=args.max_iter, tol=args.tol, restarts=args.restarts
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for e, x in zip(entries, feats):
        labels = quantizer.assign(cb, x).astype(np.uint32)
        corpusio.write_targets(out_dir / f"{e.utt_id}.pwt", labels)
    if args.codebook_out:
        corpusio.write_codebook(args.codebook_out, cb)
    _emit({"out": str(out_dir), "k": cb.k, "frames": int(stacked.shape[0]), "inertia": cb.inertia})
    return 0


def cmd_train(args) -> int:
    run_cfg = RunConfig.load(args.config) if args.config else RunConfig()
    if args.variant:
        run_cfg.model.variant = args.variant
        run_cfg.model.validate()
    if args.steps is not None:
        run_cfg.trainer.steps = args.steps
        run_cfg.trainer.validate()
    result = train(
        run_cfg,
        args.manifest,
        args.pw_targets,
        args.out,
        frame_targets_dir=args.frame_targets,
        seed=args.seed,
    )
    _emit(
        {
            "checkpoint": str(result.checkpoint),
            "metrics": str(result.metrics),
            "final_loss_pw": result.final_report.loss_pw,
            "final_total": result.final_report.total,
        }
    )
    return 0


def _toy_config(variant: str) -> ModelConfig:
    return ModelConfig(
        input_dim=8,
        model_dim=16,
        n_heads=2,
        backbone_layers=2,
        extra_layers=1,
        frame_head_layer=2,
        pw_head_layer=3,
        k_frame=5,
        k_pw=6,
        variant=variant,
        lam=0.7,
    )


def cmd_gradcheck(args) -> int:
    variants = ["single", "hierarchical"] if args.variant == "both" else [args.variant]
    report: dict = {"threshold": GRADCHECK_THRESHOLD}
    ok = True
    for variant in variants:
        cfg = _toy_config(variant)
        model = Model(cfg, seed=args.seed, dtype=np.float64)
        batch = make_gradcheck_batch(cfg, args.seed, total_frames=10)
        err = gradcheck(model, batch)
        report[variant] = err
        ok = ok and err < GRADCHECK_THRESHOLD
    report["pass"] = ok
    _emit(report)
    return 0 if ok else 2


def cmd_eval_sem(args) -> int:
    model, _ = load_checkpoint(args.checkpoint)
    pairs = corpusio.read_pairs(args.pairs)
    layer = args.layer if args.layer >= 0 else model.cfg.n_layers
    rho = evaluation.similarity_judgement(model, pairs, layer, Path(args.pairs).parent)
    _emit({"spearman": rho, "pairs": len(pairs), "layer": layer})
    return 0


def cmd_eval_cluster(args) -> int:
    manifest_path = Path(args.manifest)
    entries = corpusio.read_manifest(manifest_path)
    oracle = _oracle_segments(manifest_path, entries)
    pred_all, truth_all = [], []
    for e in entries:
        pred = corpusio.read_targets(Path(args.targets) / f"{e.utt_id}.pwt")
        total_frames = pred.shape[0]
        ids = corpusio.read_targets(manifest_path.parent / e.oracle_ids)
        segs = segmentation.extend_coverage(oracle[e.utt_id], total_frames)
        truth = quantizer.build_targets(ids, segs, total_frames)
        keep = (pred != IGNORE_LABEL) & (truth != IGNORE_LABEL)
        pred_all.append(pred[keep])
        truth_all.append(truth[keep])
    pred_cat = np.concatenate(pred_all)
    truth_cat = np.concatenate(truth_all)
    _emit(
        {
            "nmi": evaluation.nmi(pred_cat, truth_cat),
            "purity": evaluation.purity(pred_cat, truth_cat),
            "frames": int(pred_cat.shape[0]),
        }
    )
    return 0


def cmd_eval_boundary(args) -> int:
    hyp = corpusio.read_segments(args.hyp)
    ref = corpusio.read_segments(args.ref)
    precision, recall, f1 = evaluation.corpus_boundary_f1(hyp, ref, args.tol)
    _emit({"precision": precision, "recall": recall, "f1": f1, "tol": args.tol})
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="pwhubert", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic corpus with planted word structure")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--utterances", type=int, default=200)
    p.add_argument("--vocab", type=int, default=20)
    p.add_argument("--feature-dim", type=int, default=16)
    p.add_argument("--noise-sigma", type=float, default=0.05)
    p.add_argument("--word-len", type=int, nargs=2, default=[4, 9], metavar=("MIN", "MAX"))
    p.add_argument("--words-per-utt", type=int, nargs=2, default=[3, 8], metavar=("MIN", "MAX"))
    p.add_argument("--pairs", type=int, default=0, help="also emit N same-word + N cross-word similarity pairs")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("segment", help="attention profiles -> widened word segments (JSON lines)")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--attn", help="single attention matrix (one column)")
    src.add_argument("--manifest", help="corpus manifest; segments every utterance")
    p.add_argument("--threshold", type=float, default=0.8)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("fit-codebook", help="k-means over pooled segment features")
    p.add_argument("--manifest", required=True)
    p.add_argument("--boundary", choices=["attention", "oracle"], default="attention")
    p.add_argument("--threshold", type=float, default=0.8)
    p.add_argument("--clusters", type=int, default=50)
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--max-iter", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit_codebook)

    p = sub.add_parser("targets", help="emit per-utterance word-level target files")
    p.add_argument("--manifest", required=True)
    p.add_argument("--mode", choices=["attention", "oracle-boundary", "oracle-id"], default="attention")
    p.add_argument("--codebook", help="PWC1 codebook (not needed for oracle-id)")
    p.add_argument("--threshold", type=float, default=0.8)
    p.add_argument("--out", required=True, help="output directory for <utt>.pwt files")
    p.set_defaults(func=cmd_targets)

    p = sub.add_parser("frame-targets", help="frame-level targets from clustering raw frames")
    p.add_argument("--manifest", required=True)
    p.add_argument("--clusters", type=int, default=50)
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--max-iter", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--codebook-out", help="also write the frame codebook (PWC1)")
    p.set_defaults(func=cmd_frame_targets)

    p = sub.add_parser("train", help="masked-prediction training run")
    p.add_argument("--config", help="JSON run config (model/trainer/masking groups)")
    p.add_argument("--manifest", required=True)
    p.add_argument("--pw-targets", required=True, help="directory of word-level .pwt files")
    p.add_argument("--frame-targets", help="directory of frame-level .pwt files (hierarchical)")
    p.add_argument("--out", required=True)
    p.add_argument("--variant", choices=["single", "hierarchical"])
    p.add_argument("--steps", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("gradcheck", help="analytic vs finite-difference gradients on toy configs")
    p.add_argument("--variant", choices=["single", "hierarchical", "both"], default="both")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("eval-sem", help="word-pair similarity vs human scores (Spearman)")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--pairs", required=True, help="CSV utt_a,utt_b,human_score")
    p.add_argument("--layer", type=int, default=-1, help="representation depth (-1 = last)")
    p.set_defaults(func=cmd_eval_sem)

    p = sub.add_parser("eval-cluster", help="NMI/purity of target files vs oracle word ids")
    p.add_argument("--manifest", required=True)
    p.add_argument("--targets", required=True, help="directory of predicted .pwt files")
    p.set_defaults(func=cmd_eval_cluster)

    p = sub.add_parser("eval-boundary", help="boundary precision/recall/F1 between segment files")
    p.add_argument("--hyp", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--tol", type=int, default=0)
    p.set_defaults(func=cmd_eval_boundary)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not hasattr(args, "func"):
        parser.error("a subcommand is required")
    try:
        return args.func(args)
    except (FormatError, EmptyMaskError, ZeroVarianceError, ValueError, OSError) as exc:
        print(f"pwhubert: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
