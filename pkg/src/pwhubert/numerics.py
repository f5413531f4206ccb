"""Dense numeric kernels and reproducible random streams.

Matrices are plain 2-D numpy arrays, row-major, float32 for storage and
float64 when gradients are being verified; every kernel runs in the dtype of
its input. Each parameterized forward kernel has a `*_bwd` reverse-mode
companion, and the pairs are held to a central-finite-difference contract
(step 1e-5 in float64, relative error < 1e-4) by the test suite.

All functions are pure: no global RNG, no in-place mutation of arguments,
bit-identical results on repeated calls.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_A = 0.044715


@dataclass(frozen=True)
class RngStream:
    """Counter-based random stream addressed by (seed, tag, counter).

    The triple is hashed into a Philox key, so every distinct triple is an
    independent stream and the same triple replays the same draws on any
    platform. There is no shared mutable state: each `generator()` call
    starts a fresh generator at the beginning of the stream.
    """

    seed: int
    tag: str
    counter: int = 0

    def generator(self) -> np.random.Generator:
        msg = repr((int(self.seed), self.tag, int(self.counter))).encode("utf-8")
        digest = hashlib.sha256(msg).digest()
        key = np.frombuffer(digest[:16], dtype="<u8").astype(np.uint64)
        return np.random.Generator(np.random.Philox(key=key))


def softmax_rows(m: np.ndarray) -> np.ndarray:
    """Softmax over the last axis, max-subtracted so huge logits cannot overflow."""
    m = np.asarray(m)
    if m.size == 0:
        return m.astype(m.dtype, copy=True)
    z = m - m.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_rows_bwd(probs: np.ndarray, dprobs: np.ndarray) -> np.ndarray:
    """Gradient through softmax_rows given its output `probs`."""
    inner = (dprobs * probs).sum(axis=-1, keepdims=True)
    return probs * (dprobs - inner)


def layer_norm_rows(m: np.ndarray, gain: np.ndarray, bias: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Per-row normalization to zero mean / unit variance, then affine (gain, bias)."""
    m = np.asarray(m)
    gain = np.asarray(gain)
    bias = np.asarray(bias)
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if gain.shape != (m.shape[-1],) or bias.shape != (m.shape[-1],):
        raise ValueError(
            f"gain/bias of shape {gain.shape}/{bias.shape} do not match {m.shape[-1]} columns"
        )
    mu = m.mean(axis=-1, keepdims=True)
    var = m.var(axis=-1, keepdims=True)
    xhat = (m - mu) / np.sqrt(var + eps)
    return xhat * gain + bias


def layer_norm_rows_bwd(
    m: np.ndarray, gain: np.ndarray, eps: float, dy: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of layer_norm_rows: returns (d_input, d_gain, d_bias)."""
    mu = m.mean(axis=-1, keepdims=True)
    var = m.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (m - mu) * inv
    dgain = (dy * xhat).sum(axis=0)
    dbias = dy.sum(axis=0)
    dxhat = dy * gain
    dm = inv * (
        dxhat
        - dxhat.mean(axis=-1, keepdims=True)
        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
    )
    return dm, dgain, dbias


def linear(m: np.ndarray, weight: np.ndarray, bias: np.ndarray | None = None) -> np.ndarray:
    """Affine map rows -> rows @ weight + bias."""
    m = np.asarray(m)
    weight = np.asarray(weight)
    if m.shape[-1] != weight.shape[0]:
        raise ValueError(f"cannot multiply {m.shape} by {weight.shape}")
    y = m @ weight
    if bias is not None:
        bias = np.asarray(bias)
        if bias.shape != (weight.shape[1],):
            raise ValueError(f"bias shape {bias.shape} does not match {weight.shape[1]} outputs")
        y = y + bias
    return y


def linear_bwd(
    m: np.ndarray, weight: np.ndarray, dy: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of linear: returns (d_input, d_weight, d_bias)."""
    return dy @ weight.T, m.T @ dy, dy.sum(axis=0)


def gelu(x: np.ndarray) -> np.ndarray:
    """GELU activation, tanh approximation."""
    return 0.5 * x * (1.0 + np.tanh(_GELU_C * (x + _GELU_A * x**3)))


def gelu_bwd(x: np.ndarray, dy: np.ndarray) -> np.ndarray:
    """Gradient through gelu at input `x`."""
    t = np.tanh(_GELU_C * (x + _GELU_A * x**3))
    dt = (1.0 - t * t) * _GELU_C * (1.0 + 3.0 * _GELU_A * x * x)
    return dy * (0.5 * (1.0 + t) + 0.5 * x * dt)
