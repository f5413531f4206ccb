"""Masked-prediction transformer encoders with hand-written backpropagation.

Two variants share the same block stack:

  single        frozen backbone (input projection + first `backbone_layers`
                blocks), a learnable softmax-weighted sum over the backbone
                hidden states (input included as layer 0), `extra_layers`
                trainable blocks on top, and a word-level prediction head.
  hierarchical  everything trainable, no weighted sum; a frame-level head
                reads the stack at depth `frame_head_layer` and a word-level
                head at depth `pw_head_layer`, each from its own forward pass
                with its own mask.

Blocks are post-norm: x -> LN(x + attention(x)) -> LN(. + ffn(.)) with a
4x GELU feed-forward and sinusoidal positions added after the mask embedding
is swapped in. Forward passes record caches; `backward_*` replays them in
reverse, accumulating into Param.grad. Everything runs in the dtype the
model was built with (float32 for training, float64 for gradient checks).
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpusio import _check_dim, _check_magic, _read_exact
from .errors import FormatError
from .masking import MaskSet
from .numerics import (
    RngStream,
    gelu,
    gelu_bwd,
    layer_norm_rows,
    layer_norm_rows_bwd,
    linear,
    linear_bwd,
    softmax_rows,
    softmax_rows_bwd,
)

MAGIC_CHECKPOINT = b"PWM1"

VARIANTS = ("single", "hierarchical")

_INIT_STD = 0.02
_LN_EPS = 1e-5


@dataclass
class ModelConfig:
    input_dim: int = 16
    model_dim: int = 32
    n_heads: int = 4
    backbone_layers: int = 4
    extra_layers: int = 2
    frame_head_layer: int = 4
    pw_head_layer: int = 6
    k_frame: int = 50
    k_pw: int = 50
    variant: str = "single"
    lam: float = 1.0

    @property
    def n_layers(self) -> int:
        return self.backbone_layers + self.extra_layers

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if min(self.input_dim, self.model_dim, self.n_heads, self.backbone_layers) < 1:
            raise ValueError("input_dim, model_dim, n_heads, backbone_layers must be >= 1")
        if self.extra_layers < 1:
            raise ValueError("extra_layers must be >= 1")
        if self.model_dim % self.n_heads != 0:
            raise ValueError(f"model_dim {self.model_dim} not divisible by n_heads {self.n_heads}")
        if self.model_dim % 2 != 0:
            raise ValueError("model_dim must be even (sinusoidal positions)")
        if not (1 <= self.frame_head_layer < self.pw_head_layer <= self.n_layers):
            raise ValueError(
                f"need 1 <= frame_head_layer < pw_head_layer <= {self.n_layers}, "
                f"got {self.frame_head_layer} / {self.pw_head_layer}"
            )
        if self.k_frame < 1 or self.k_pw < 1:
            raise ValueError("k_frame and k_pw must be >= 1")

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "model_dim": self.model_dim,
            "n_heads": self.n_heads,
            "backbone_layers": self.backbone_layers,
            "extra_layers": self.extra_layers,
            "frame_head_layer": self.frame_head_layer,
            "pw_head_layer": self.pw_head_layer,
            "k_frame": self.k_frame,
            "k_pw": self.k_pw,
            "variant": self.variant,
            "lambda": self.lam,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        if "lambda" in d:
            d["lam"] = d.pop("lambda")
        cfg = cls(**d)
        cfg.validate()
        return cfg


class Param:
    """A named tensor with an accumulated gradient and a frozen flag."""

    __slots__ = ("name", "data", "grad", "frozen")

    def __init__(self, name: str, data: np.ndarray, frozen: bool = False):
        self.name = name
        self.data = data
        self.grad = np.zeros_like(data)
        self.frozen = frozen


class _Linear:
    def __init__(self, name: str, d_in: int, d_out: int, rng: np.random.Generator, dtype):
        self.weight = Param(f"{name}.weight", rng.normal(0.0, _INIT_STD, (d_in, d_out)).astype(dtype))
        self.bias = Param(f"{name}.bias", np.zeros(d_out, dtype=dtype))

    def params(self) -> list[Param]:
        return [self.weight, self.bias]

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return linear(x, self.weight.data, self.bias.data), x

    def backward(self, x: np.ndarray, dy: np.ndarray) -> np.ndarray:
        dx, dw, db = linear_bwd(x, self.weight.data, dy)
        self.weight.grad += dw
        self.bias.grad += db
        return dx


class _LayerNorm:
    def __init__(self, name: str, dim: int, dtype):
        self.gain = Param(f"{name}.gain", np.ones(dim, dtype=dtype))
        self.bias = Param(f"{name}.bias", np.zeros(dim, dtype=dtype))

    def params(self) -> list[Param]:
        return [self.gain, self.bias]

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return layer_norm_rows(x, self.gain.data, self.bias.data, _LN_EPS), x

    def backward(self, x: np.ndarray, dy: np.ndarray) -> np.ndarray:
        dx, dg, db = layer_norm_rows_bwd(x, self.gain.data, _LN_EPS, dy)
        self.gain.grad += dg
        self.bias.grad += db
        return dx


class _SelfAttention:
    def __init__(self, name: str, dim: int, n_heads: int, rng: np.random.Generator, dtype):
        self.n_heads = n_heads
        self.d_head = dim // n_heads
        self.q = _Linear(f"{name}.q", dim, dim, rng, dtype)
        self.k = _Linear(f"{name}.k", dim, dim, rng, dtype)
        self.v = _Linear(f"{name}.v", dim, dim, rng, dtype)
        self.out = _Linear(f"{name}.out", dim, dim, rng, dtype)

    def params(self) -> list[Param]:
        return self.q.params() + self.k.params() + self.v.params() + self.out.params()

    def _split(self, m: np.ndarray) -> np.ndarray:
        T, d = m.shape
        return m.reshape(T, self.n_heads, self.d_head).transpose(1, 0, 2)

    def _merge(self, m: np.ndarray) -> np.ndarray:
        H, T, dh = m.shape
        return m.transpose(1, 0, 2).reshape(T, H * dh)

    def forward(self, x: np.ndarray):
        q, cq = self.q.forward(x)
        k, ck = self.k.forward(x)
        v, cv = self.v.forward(x)
        qh, kh, vh = self._split(q), self._split(k), self._split(v)
        scale = 1.0 / math.sqrt(self.d_head)
        probs = softmax_rows((qh @ kh.transpose(0, 2, 1)) * scale)
        merged = self._merge(probs @ vh)
        y, cout = self.out.forward(merged)
        return y, (cq, ck, cv, qh, kh, vh, probs, cout, scale)

    def backward(self, cache, dy: np.ndarray) -> np.ndarray:
        cq, ck, cv, qh, kh, vh, probs, cout, scale = cache
        dmerged = self.out.backward(cout, dy)
        dctx = self._split(dmerged)
        dprobs = dctx @ vh.transpose(0, 2, 1)
        dvh = probs.transpose(0, 2, 1) @ dctx
        dscores = softmax_rows_bwd(probs, dprobs) * scale
        dqh = dscores @ kh
        dkh = dscores.transpose(0, 2, 1) @ qh
        dx = self.q.backward(cq, self._merge(dqh))
        dx += self.k.backward(ck, self._merge(dkh))
        dx += self.v.backward(cv, self._merge(dvh))
        return dx


class _Block:
    """Post-norm transformer block: LN(x + attn(x)) then LN(. + ffn(.))."""

    def __init__(self, name: str, dim: int, n_heads: int, rng: np.random.Generator, dtype):
        self.attn = _SelfAttention(f"{name}.attn", dim, n_heads, rng, dtype)
        self.ln1 = _LayerNorm(f"{name}.ln1", dim, dtype)
        self.ffn1 = _Linear(f"{name}.ffn1", dim, 4 * dim, rng, dtype)
        self.ffn2 = _Linear(f"{name}.ffn2", 4 * dim, dim, rng, dtype)
        self.ln2 = _LayerNorm(f"{name}.ln2", dim, dtype)

    def params(self) -> list[Param]:
        return (
            self.attn.params()
            + self.ln1.params()
            + self.ffn1.params()
            + self.ffn2.params()
            + self.ln2.params()
        )

    def forward(self, x: np.ndarray):
        a, ca = self.attn.forward(x)
        h1, c1 = self.ln1.forward(x + a)
        f1, cf1 = self.ffn1.forward(h1)
        f2, cf2 = self.ffn2.forward(gelu(f1))
        y, c2 = self.ln2.forward(h1 + f2)
        return y, (ca, c1, cf1, f1, cf2, c2)

    def backward(self, cache, dy: np.ndarray) -> np.ndarray:
        ca, c1, cf1, f1, cf2, c2 = cache
        dr2 = self.ln2.backward(c2, dy)
        dg = self.ffn2.backward(cf2, dr2)
        dh1 = dr2 + self.ffn1.backward(cf1, gelu_bwd(f1, dg))
        dr1 = self.ln1.backward(c1, dh1)
        return dr1 + self.attn.backward(ca, dr1)


def positional_encoding(total_frames: int, dim: int, dtype) -> np.ndarray:
    """Sinusoidal positions: sin on even columns, cos on odd, shared frequencies."""
    pos = np.arange(total_frames, dtype=np.float64)[:, None]
    freqs = np.power(10000.0, -np.arange(0, dim, 2, dtype=np.float64) / dim)[None, :]
    angles = pos * freqs
    pe = np.empty((total_frames, dim), dtype=np.float64)
    pe[:, 0::2] = np.sin(angles)
    pe[:, 1::2] = np.cos(angles)
    return pe.astype(dtype)


def apply_mask(feats: np.ndarray, mask: MaskSet, mask_embedding: np.ndarray) -> np.ndarray:
    """Replace the rows at masked indices with the mask embedding."""
    feats = np.asarray(feats)
    mask_embedding = np.asarray(mask_embedding)
    if feats.shape[1] != mask_embedding.shape[0]:
        raise ValueError(
            f"features have {feats.shape[1]} columns but the mask embedding has {mask_embedding.shape[0]}"
        )
    if mask.T != feats.shape[0]:
        raise ValueError(f"mask covers {mask.T} frames but features have {feats.shape[0]} rows")
    out = feats.copy()
    out[mask.indices] = mask_embedding
    return out


def weighted_sum(hidden: Sequence[np.ndarray], layer_weights: np.ndarray) -> np.ndarray:
    """Softmax-normalized scalar mixture of same-shape layer outputs."""
    layer_weights = np.asarray(layer_weights)
    if len(hidden) != layer_weights.shape[0]:
        raise ValueError(f"{len(hidden)} layers but {layer_weights.shape[0]} weights")
    shapes = {h.shape for h in hidden}
    if len(shapes) != 1:
        raise ValueError(f"layer outputs disagree in shape: {sorted(shapes)}")
    w = softmax_rows(layer_weights)
    stacked = np.stack(hidden, axis=0)
    return np.tensordot(w, stacked, axes=1)


@dataclass
class SingleRun:
    logits_pw: np.ndarray
    mask: MaskSet
    _proj_cache: np.ndarray
    _block_caches: list
    _hiddens: list
    _mix_weights: np.ndarray
    _extra_caches: list
    _head_cache: np.ndarray


@dataclass
class BranchRun:
    mask: MaskSet
    hiddens: list
    _proj_cache: np.ndarray
    _block_caches: list


@dataclass
class HierRun:
    logits_frame: np.ndarray
    logits_pw: np.ndarray
    frame_branch: BranchRun
    pw_branch: BranchRun
    _frame_head_cache: np.ndarray
    _pw_head_cache: np.ndarray


class Model:
    """Parameter container plus forward/backward for both variants."""

    def __init__(self, cfg: ModelConfig, seed: int = 0, dtype=np.float32):
        cfg.validate()
        self.cfg = cfg
        self.dtype = np.dtype(dtype)
        rng = RngStream(seed, "init").generator()
        d = cfg.model_dim
        self.proj = _Linear("proj", cfg.input_dim, d, rng, self.dtype)
        self.mask_embedding = Param(
            "mask_embedding", rng.normal(0.0, _INIT_STD, d).astype(self.dtype)
        )
        self.blocks = [
            _Block(f"blocks.{i}", d, cfg.n_heads, rng, self.dtype) for i in range(cfg.n_layers)
        ]
        if cfg.variant == "single":
            self.layer_weights = Param(
                "layer_weights", np.zeros(cfg.backbone_layers + 1, dtype=self.dtype)
            )
            self.frame_head = None
        else:
            self.layer_weights = None
            self.frame_head = _Linear("frame_head", d, cfg.k_frame, rng, self.dtype)
        self.pw_head = _Linear("pw_head", d, cfg.k_pw, rng, self.dtype)
        if cfg.variant == "single":
            for p in self.proj.params():
                p.frozen = True
            for block in self.blocks[: cfg.backbone_layers]:
                for p in block.params():
                    p.frozen = True

    def params(self) -> list[Param]:
        out = self.proj.params() + [self.mask_embedding]
        for block in self.blocks:
            out += block.params()
        if self.layer_weights is not None:
            out.append(self.layer_weights)
        if self.frame_head is not None:
            out += self.frame_head.params()
        out += self.pw_head.params()
        return out

    def trainable_params(self) -> list[Param]:
        return [p for p in self.params() if not p.frozen]

    def zero_grads(self) -> None:
        for p in self.params():
            p.grad[...] = 0

    def _embed(self, feats: np.ndarray, mask: MaskSet):
        """Project, swap in the mask embedding, add positions."""
        feats = np.asarray(feats, dtype=self.dtype)
        x, proj_cache = self.proj.forward(feats)
        xm = apply_mask(x, mask, self.mask_embedding.data)
        xp = xm + positional_encoding(feats.shape[0], self.cfg.model_dim, self.dtype)
        return xp, proj_cache

    def _embed_backward(self, gradient: np.ndarray, mask: MaskSet, proj_cache: np.ndarray) -> None:
        self.mask_embedding.grad += gradient[mask.indices].sum(axis=0)
        gx = gradient.copy()
        gx[mask.indices] = 0
        self.proj.backward(proj_cache, gx)

    def forward_single(self, feats: np.ndarray, mask: MaskSet) -> SingleRun:
        if self.cfg.variant != "single":
            raise ValueError("forward_single requires a single-variant model")
        assert self.layer_weights is not None
        h, proj_cache = self._embed(feats, mask)
        hiddens, block_caches = [h], []
        for block in self.blocks[: self.cfg.backbone_layers]:
            h, cache = block.forward(h)
            block_caches.append(cache)
            hiddens.append(h)
        mix_weights = softmax_rows(self.layer_weights.data)
        y = np.tensordot(mix_weights, np.stack(hiddens, axis=0), axes=1)
        extra_caches = []
        for block in self.blocks[self.cfg.backbone_layers :]:
            y, cache = block.forward(y)
            extra_caches.append(cache)
        logits, head_cache = self.pw_head.forward(y)
        return SingleRun(logits, mask, proj_cache, block_caches, hiddens, mix_weights, extra_caches, head_cache)

    def backward_single(self, run: SingleRun, dlogits: np.ndarray) -> None:
        assert self.layer_weights is not None
        dy = self.pw_head.backward(run._head_cache, np.asarray(dlogits, dtype=self.dtype))
        extras = self.blocks[self.cfg.backbone_layers :]
        for block, cache in zip(reversed(extras), reversed(run._extra_caches)):
            dy = block.backward(cache, dy)
        w = run._mix_weights
        dmix = np.array([(dy * h).sum() for h in run._hiddens], dtype=self.dtype)
        self.layer_weights.grad += softmax_rows_bwd(w, dmix)
        g = w[self.cfg.backbone_layers] * dy
        for i in reversed(range(self.cfg.backbone_layers)):
            g = self.blocks[i].backward(run._block_caches[i], g) + w[i] * dy
        self._embed_backward(g, run.mask, run._proj_cache)

    def _forward_branch(self, feats: np.ndarray, mask: MaskSet, depth: int) -> BranchRun:
        h, proj_cache = self._embed(feats, mask)
        hiddens, block_caches = [h], []
        for block in self.blocks[:depth]:
            h, cache = block.forward(h)
            block_caches.append(cache)
            hiddens.append(h)
        return BranchRun(mask, hiddens, proj_cache, block_caches)

    def _backward_branch(self, branch: BranchRun, gradient: np.ndarray) -> None:
        g = gradient
        for block, cache in zip(
            reversed(self.blocks[: len(branch._block_caches)]), reversed(branch._block_caches)
        ):
            g = block.backward(cache, g)
        self._embed_backward(g, branch.mask, branch._proj_cache)

    def forward_hierarchical(
        self, feats: np.ndarray, mask_frame: MaskSet, mask_pw: MaskSet
    ) -> HierRun:
        if self.cfg.variant != "hierarchical":
            raise ValueError("forward_hierarchical requires a hierarchical-variant model")
        assert self.frame_head is not None
        frame_branch = self._forward_branch(feats, mask_frame, self.cfg.frame_head_layer)
        pw_branch = self._forward_branch(feats, mask_pw, self.cfg.pw_head_layer)
        logits_frame, frame_cache = self.frame_head.forward(frame_branch.hiddens[-1])
        logits_pw, pw_cache = self.pw_head.forward(pw_branch.hiddens[-1])
        return HierRun(logits_frame, logits_pw, frame_branch, pw_branch, frame_cache, pw_cache)

    def backward_hierarchical(
        self, run: HierRun, dlogits_frame: np.ndarray | None, dlogits_pw: np.ndarray | None
    ) -> None:
        """Accumulate both branches; pass None to skip a branch (e.g. lambda = 0)."""
        assert self.frame_head is not None
        if dlogits_pw is not None:
            g = self.pw_head.backward(run._pw_head_cache, np.asarray(dlogits_pw, dtype=self.dtype))
            self._backward_branch(run.pw_branch, g)
        if dlogits_frame is not None:
            g = self.frame_head.backward(
                run._frame_head_cache, np.asarray(dlogits_frame, dtype=self.dtype)
            )
            self._backward_branch(run.frame_branch, g)

    def hidden_states(self, feats: np.ndarray) -> list[np.ndarray]:
        """Unmasked per-depth representations, index 0 .. n_layers.

        Index 0 is the projected input (positions added); in the single
        variant the extra layers run on the weighted sum of indices
        0..backbone_layers.
        """
        empty = MaskSet(np.empty(0, dtype=np.int64), np.asarray(feats).shape[0])
        if self.cfg.variant == "hierarchical":
            return self._forward_branch(feats, empty, self.cfg.n_layers).hiddens
        run = self.forward_single(feats, empty)
        states = list(run._hiddens)
        y = np.tensordot(run._mix_weights, np.stack(run._hiddens, axis=0), axes=1)
        for block in self.blocks[self.cfg.backbone_layers :]:
            y, _ = block.forward(y)
            states.append(y)
        return states


@dataclass
class GradcheckBatch:
    feats: np.ndarray
    pw_targets: np.ndarray
    mask_pw: MaskSet
    frame_targets: np.ndarray | None = None
    mask_frame: MaskSet | None = None
    lam: float = 1.0


def make_gradcheck_batch(cfg: ModelConfig, seed: int, total_frames: int = 10) -> GradcheckBatch:
    """A small random batch with valid targets under both masks."""
    rng = RngStream(seed, "gradcheck").generator()
    feats = rng.normal(size=(total_frames, cfg.input_dim))
    pw_targets = rng.integers(0, cfg.k_pw, size=total_frames).astype(np.uint32)
    half = np.sort(rng.choice(total_frames, size=max(1, total_frames // 2), replace=False))
    mask_pw = MaskSet(half.astype(np.int64), total_frames)
    if cfg.variant == "single":
        return GradcheckBatch(feats, pw_targets, mask_pw, lam=cfg.lam)
    frame_targets = rng.integers(0, cfg.k_frame, size=total_frames).astype(np.uint32)
    other = np.sort(rng.choice(total_frames, size=max(1, total_frames // 3), replace=False))
    mask_frame = MaskSet(other.astype(np.int64), total_frames)
    return GradcheckBatch(feats, pw_targets, mask_pw, frame_targets, mask_frame, cfg.lam)


def _batch_loss(model: Model, batch: GradcheckBatch) -> float:
    from .trainer import combine_loss, masked_ce

    if model.cfg.variant == "single":
        run = model.forward_single(batch.feats, batch.mask_pw)
        return masked_ce(run.logits_pw, batch.pw_targets, batch.mask_pw)
    assert batch.frame_targets is not None and batch.mask_frame is not None
    run = model.forward_hierarchical(batch.feats, batch.mask_frame, batch.mask_pw)
    loss_pw = masked_ce(run.logits_pw, batch.pw_targets, batch.mask_pw)
    loss_frame = masked_ce(run.logits_frame, batch.frame_targets, batch.mask_frame)
    return combine_loss(loss_pw, loss_frame, batch.lam)


def gradcheck(model: Model, batch: GradcheckBatch, eps: float = 1e-5) -> float:
    """Worst relative error between analytic and central-difference gradients.

    Checks every trainable scalar. The relative error uses a floor of 1e-3 in
    the denominator, so an absolute disagreement below 1e-7 passes a 1e-4
    threshold even where the gradient is essentially zero.
    """
    from .trainer import masked_ce_with_grad

    if model.dtype != np.float64:
        raise ValueError("gradcheck requires a float64 model")
    model.zero_grads()
    if model.cfg.variant == "single":
        run = model.forward_single(batch.feats, batch.mask_pw)
        loss, dlogits, _ = masked_ce_with_grad(run.logits_pw, batch.pw_targets, batch.mask_pw)
        model.backward_single(run, dlogits)
    else:
        assert batch.frame_targets is not None and batch.mask_frame is not None
        run = model.forward_hierarchical(batch.feats, batch.mask_frame, batch.mask_pw)
        _, dpw, _ = masked_ce_with_grad(run.logits_pw, batch.pw_targets, batch.mask_pw)
        _, dframe, _ = masked_ce_with_grad(run.logits_frame, batch.frame_targets, batch.mask_frame)
        model.backward_hierarchical(run, batch.lam * dframe, dpw)
    loss0 = _batch_loss(model, batch)
    if not math.isfinite(loss0):
        raise ValueError(f"loss is not finite: {loss0}")

    worst = 0.0
    for p in model.trainable_params():
        flat = p.data.reshape(-1)
        grad = p.grad.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + eps
            up = _batch_loss(model, batch)
            flat[i] = keep - eps
            down = _batch_loss(model, batch)
            flat[i] = keep
            fd = (up - down) / (2.0 * eps)
            rel = abs(grad[i] - fd) / max(abs(grad[i]), abs(fd), 1e-3)
            worst = max(worst, float(rel))
    return worst


def save_checkpoint(path: Path | str, model: Model, step: int) -> None:
    """PWM1: magic, u32 tensor count, (u16 name len, name, u8 rank, u32 dims,
    f32 data) per tensor, then a u32-length-prefixed JSON footer with the
    model config and the training step. Everything little-endian."""
    params = model.params()
    with open(path, "wb") as f:
        f.write(MAGIC_CHECKPOINT)
        f.write(struct.pack("<I", len(params)))
        for p in params:
            name = p.name.encode("utf-8")
            dims = p.data.shape
            f.write(struct.pack("<H", len(name)))
            f.write(name)
            f.write(struct.pack("<B", len(dims)))
            for d in dims:
                f.write(struct.pack("<I", _check_dim(d, f"{p.name} dim")))
            f.write(np.ascontiguousarray(p.data, dtype="<f4").tobytes())
        footer = json.dumps({"config": model.cfg.to_dict(), "step": int(step)}).encode("utf-8")
        f.write(struct.pack("<I", len(footer)))
        f.write(footer)


def load_checkpoint(path: Path | str) -> tuple[Model, int]:
    tensors: dict[str, np.ndarray] = {}
    with open(path, "rb") as f:
        _check_magic(f, MAGIC_CHECKPOINT)
        (count,) = struct.unpack("<I", _read_exact(f, 4, "tensor count"))
        for _ in range(count):
            (name_len,) = struct.unpack("<H", _read_exact(f, 2, "name length"))
            name = _read_exact(f, name_len, "tensor name").decode("utf-8")
            (rank,) = struct.unpack("<B", _read_exact(f, 1, "tensor rank"))
            dims = struct.unpack(f"<{rank}I", _read_exact(f, 4 * rank, "tensor dims"))
            n_values = int(np.prod(dims, dtype=np.int64)) if rank else 1
            payload = _read_exact(f, 4 * n_values, f"tensor {name} payload")
            tensors[name] = np.frombuffer(payload, dtype="<f4").reshape(dims).astype(np.float32)
        (footer_len,) = struct.unpack("<I", _read_exact(f, 4, "footer length"))
        footer = json.loads(_read_exact(f, footer_len, "footer").decode("utf-8"))
    cfg = ModelConfig.from_dict(footer["config"])
    step = int(footer["step"])
    model = Model(cfg, seed=0, dtype=np.float32)
    expected = {p.name for p in model.params()}
    if expected != set(tensors):
        missing = sorted(expected - set(tensors))
        extra = sorted(set(tensors) - expected)
        raise FormatError(f"checkpoint tensors mismatch: missing {missing}, unexpected {extra}")
    for p in model.params():
        stored = tensors[p.name]
        if stored.shape != p.data.shape:
            raise FormatError(f"tensor {p.name}: shape {stored.shape} != expected {p.data.shape}")
        p.data = stored.astype(model.dtype)
        p.grad = np.zeros_like(p.data)
    return model, step
