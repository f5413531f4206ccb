"""Masked cross-entropy losses, the optimizer, and the training loop.

The word-level loss is the mean over masked, non-ignore frames of the
negative log-probability of the target label; frames outside the mask never
touch the computation, so perturbing them cannot change the loss. The
combined objective is loss_pw + lambda * loss_frame. Training is fully
deterministic for a fixed seed: utterance choice, mask draws and parameter
updates all derive from tagged counter streams, and the metrics log plus
checkpoints are byte-identical across reruns and worker counts.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpusio import read_manifest, read_matrix, read_targets
from .errors import EmptyMaskError
from .masking import MaskingConfig, MaskSet, sample_mask
from .model import Model, ModelConfig, save_checkpoint
from .numerics import RngStream
from .quantizer import IGNORE_LABEL

# Retry offset for redrawing a mask that covers no usable target; keeps every
# (step, attempt) pair on its own counter.
_RETRY_STRIDE = 1 << 48
_MAX_MASK_RETRIES = 64


@dataclass
class LossReport:
    loss_pw: float
    loss_frame: float
    total: float
    masked_pw_count: int
    masked_frame_count: int


def masked_ce(logits: np.ndarray, targets: np.ndarray, mask: MaskSet) -> float:
    """Mean negative log-probability of the target over masked, non-ignore frames."""
    loss, _, _ = masked_ce_with_grad(logits, targets, mask, need_grad=False)
    return loss


def masked_ce_with_grad(
    logits: np.ndarray, targets: np.ndarray, mask: MaskSet, need_grad: bool = True
) -> tuple[float, np.ndarray, int]:
    """(loss, d_loss/d_logits, masked frame count); the gradient is zero off-mask."""
    logits = np.asarray(logits)
    targets = np.asarray(targets)
    if logits.shape[0] != targets.shape[0] or targets.shape[0] != mask.T:
        raise ValueError(
            f"{logits.shape[0]} logit rows, {targets.shape[0]} targets, mask over {mask.T} frames"
        )
    idx = mask.indices[targets[mask.indices] != IGNORE_LABEL]
    if idx.size == 0:
        raise EmptyMaskError("no masked frame carries a non-ignore target")
    rows = logits[idx].astype(np.float64)
    picked = targets[idx].astype(np.int64)
    if (picked >= logits.shape[1]).any():
        raise ValueError(f"target label >= {logits.shape[1]} classes")
    z = rows - rows.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - logsumexp
    loss = float(-logp[np.arange(idx.size), picked].mean())
    if not need_grad:
        return loss, np.empty(0), int(idx.size)
    drows = np.exp(logp)
    drows[np.arange(idx.size), picked] -= 1.0
    drows /= idx.size
    dlogits = np.zeros(logits.shape, dtype=np.float64)
    dlogits[idx] = drows
    return loss, dlogits, int(idx.size)


def combine_loss(loss_pw: float, loss_frame: float, lam: float) -> float:
    return loss_pw + lam * loss_frame


def lr_at(step: int, warmup: int, total: int, peak: float) -> float:
    """Linear ramp to `peak` over `warmup` steps, then linear decay to 0 at `total`."""
    if not (0 < warmup < total):
        raise ValueError(f"need 0 < warmup < total, got warmup={warmup}, total={total}")
    if not (0 <= step <= total):
        raise ValueError(f"step {step} outside [0, {total}]")
    if step <= warmup:
        return peak * step / warmup
    return peak * (total - step) / (total - warmup)


class Adam:
    """Adam with bias correction; frozen parameter groups are never touched."""

    def __init__(self, params, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = [p for p in params if not p.frozen]
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self, lr: float) -> None:
        self.step_count += 1
        bc1 = 1.0 - self.beta1**self.step_count
        bc2 = 1.0 - self.beta2**self.step_count
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            if not np.isfinite(g).all():
                raise ValueError(f"non-finite gradient in {p.name}")
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.data -= (lr / bc1) * m / (np.sqrt(v / bc2) + self.eps)


@dataclass
class TrainState:
    step: int
    seed: int
    optimizer: Adam


@dataclass
class TrainerConfig:
    steps: int = 2000
    warmup_steps: int = 100
    peak_lr: float = 1e-3
    grad_accum: int = 1
    checkpoint_interval: int = 0  # 0 = final checkpoint only
    seed: int = 0

    def validate(self) -> None:
        if self.steps < 1 or self.grad_accum < 1:
            raise ValueError("steps and grad_accum must be >= 1")
        if not (0 < self.warmup_steps < self.steps):
            raise ValueError("need 0 < warmup_steps < steps")
        if self.peak_lr <= 0:
            raise ValueError("peak_lr must be positive")
        if self.checkpoint_interval < 0:
            raise ValueError("checkpoint_interval must be >= 0")


@dataclass
class RunConfig:
    """One experiment config file: model + trainer + masking (+ quantizer record)."""

    model: ModelConfig = field(default_factory=ModelConfig)
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    masking: MaskingConfig = field(default_factory=MaskingConfig)
    quantizer: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        cfg = cls(
            model=ModelConfig.from_dict(d.get("model", {})),
            trainer=TrainerConfig(**d.get("trainer", {})),
            masking=MaskingConfig(**d.get("masking", {})),
            quantizer=dict(d.get("quantizer", {})),
        )
        cfg.trainer.validate()
        return cfg

    @classmethod
    def load(cls, path: Path | str) -> "RunConfig":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_dict(json.load(f))

    def to_dict(self) -> dict:
        return {
            "model": self.model.to_dict(),
            "trainer": vars(self.trainer).copy(),
            "masking": vars(self.masking).copy(),
            "quantizer": dict(self.quantizer),
        }


def usable_mask(
    total_frames: int,
    mcfg: MaskingConfig,
    seed: int,
    tag: str,
    counter: int,
    targets: np.ndarray,
) -> MaskSet:
    """Draw a mask covering at least one non-ignore target, redrawing deterministically.

    Attempt a uses counter + a * 2^48, so attempt 0 equals the plain
    independent_masks draw and reruns redraw identically.
    """
    for attempt in range(_MAX_MASK_RETRIES):
        mask = sample_mask(
            total_frames, mcfg.mask_prob, mcfg.span_len, RngStream(seed, tag, counter + attempt * _RETRY_STRIDE)
        )
        if len(mask) and (targets[mask.indices] != IGNORE_LABEL).any():
            return mask
    raise EmptyMaskError(
        f"no usable {tag} mask after {_MAX_MASK_RETRIES} redraws (are all targets ignore?)"
    )


@dataclass
class TrainResult:
    checkpoint: Path
    metrics: Path
    final_report: LossReport


def train(
    run_cfg: RunConfig,
    manifest_path: Path | str,
    pw_targets_dir: Path | str,
    out_dir: Path | str,
    frame_targets_dir: Path | str | None = None,
    seed: int | None = None,
) -> TrainResult:
    """Run the loop; writes metrics.jsonl and PWM1 checkpoints under `out_dir`.

    Per optimizer step: pick an utterance from the "data" stream, draw the
    mask(s) for step counter s, forward, masked cross-entropy per head,
    combine, Adam with the warmup/decay schedule. Metrics lines carry
    step/lr/loss_pw/loss_frame/total in that order.
    """
    cfg = run_cfg.model
    tcfg = run_cfg.trainer
    mcfg = run_cfg.masking
    cfg.validate()
    tcfg.validate()
    if seed is None:
        seed = tcfg.seed
    hierarchical = cfg.variant == "hierarchical"
    if hierarchical and frame_targets_dir is None:
        raise ValueError("hierarchical training needs a frame-targets directory")

    manifest_path = Path(manifest_path)
    pw_targets_dir = Path(pw_targets_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = read_manifest(manifest_path)
    if not entries:
        raise ValueError(f"{manifest_path}: empty manifest")

    feats: dict[str, np.ndarray] = {}
    pw_targets: dict[str, np.ndarray] = {}
    frame_targets: dict[str, np.ndarray] = {}
    for e in entries:
        x = read_matrix(manifest_path.parent / e.features)
        feats[e.utt_id] = x
        t = _load_targets(pw_targets_dir / f"{e.utt_id}.pwt", e.utt_id, x.shape[0], cfg.k_pw)
        pw_targets[e.utt_id] = t
        if hierarchical:
            frame_targets[e.utt_id] = _load_targets(
                Path(frame_targets_dir) / f"{e.utt_id}.pwt", e.utt_id, x.shape[0], cfg.k_frame
            )

    model = Model(cfg, seed=seed)
    optimizer = Adam(model.trainable_params())
    state = TrainState(step=0, seed=seed, optimizer=optimizer)
    utt_ids = [e.utt_id for e in entries]

    metrics_path = out_dir / "metrics.jsonl"
    report = None
    with open(metrics_path, "w", encoding="utf-8", newline="\n") as log:
        for step in range(1, tcfg.steps + 1):
            state.step = step
            model.zero_grads()
            sum_pw = sum_frame = 0.0
            n_pw = n_frame = 0
            for micro in range(tcfg.grad_accum):
                counter = (step - 1) * tcfg.grad_accum + micro + 1
                pick = RngStream(seed, "data", counter).generator()
                utt = utt_ids[int(pick.integers(len(utt_ids)))]
                x = feats[utt]
                total_frames = x.shape[0]
                targets_pw = pw_targets[utt]
                scale = 1.0 / tcfg.grad_accum
                if hierarchical:
                    targets_frame = frame_targets[utt]
                    mask_frame = usable_mask(total_frames, mcfg, seed, "mask-frame", counter, targets_frame)
                    mask_pw = usable_mask(total_frames, mcfg, seed, "mask-pw", counter, targets_pw)
                    run = model.forward_hierarchical(x, mask_frame, mask_pw)
                    loss_pw, dpw, count_pw = masked_ce_with_grad(run.logits_pw, targets_pw, mask_pw)
                    loss_frame, dframe, count_frame = masked_ce_with_grad(
                        run.logits_frame, targets_frame, mask_frame
                    )
                    model.backward_hierarchical(
                        run,
                        (cfg.lam * scale) * dframe if cfg.lam != 0.0 else None,
                        scale * dpw,
                    )
                    sum_frame += loss_frame
                    n_frame += count_frame
                else:
                    mask_pw = usable_mask(total_frames, mcfg, seed, "mask-pw", counter, targets_pw)
                    run = model.forward_single(x, mask_pw)
                    loss_pw, dpw, count_pw = masked_ce_with_grad(run.logits_pw, targets_pw, mask_pw)
                    model.backward_single(run, scale * dpw)
                    loss_frame = 0.0
                sum_pw += loss_pw
                n_pw += count_pw
            loss_pw = sum_pw / tcfg.grad_accum
            loss_frame = sum_frame / tcfg.grad_accum if hierarchical else 0.0
            total = combine_loss(loss_pw, loss_frame, cfg.lam)
            if not math.isfinite(total):
                raise ValueError(f"non-finite loss at step {step}: {total}")
            lr = lr_at(step, tcfg.warmup_steps, tcfg.steps, tcfg.peak_lr)
            optimizer.step(lr)
            report = LossReport(loss_pw, loss_frame, total, n_pw, n_frame)
            log.write(
                json.dumps(
                    {
                        "step": step,
                        "lr": lr,
                        "loss_pw": loss_pw,
                        "loss_frame": loss_frame,
                        "total": total,
                    }
                )
            )
            log.write("\n")
            if tcfg.checkpoint_interval and step % tcfg.checkpoint_interval == 0:
                save_checkpoint(out_dir / f"checkpoint_{step:07d}.pwm", model, step)

    final_path = out_dir / "final.pwm"
    save_checkpoint(final_path, model, tcfg.steps)
    assert report is not None
    return TrainResult(checkpoint=final_path, metrics=metrics_path, final_report=report)


def _load_targets(path: Path, utt_id: str, total_frames: int, n_classes: int) -> np.ndarray:
    if not path.exists():
        raise ValueError(f"missing target file for {utt_id}: {path}")
    t = read_targets(path)
    if t.shape[0] != total_frames:
        raise ValueError(f"{path}: {t.shape[0]} targets for {total_frames} frames of {utt_id}")
    valid = t[t != IGNORE_LABEL]
    if valid.size and int(valid.max()) >= n_classes:
        raise ValueError(f"{path}: target label {int(valid.max())} >= {n_classes} classes")
    return t
