"""Pseudo-word masked-prediction pretraining at desk scale.

Pipeline: threshold attention profiles into word segments, widen them to the
midpoints between neighbours, mean-pool features per segment, cluster the
pooled vectors with seeded k-means, duplicate each cluster id across its
segment's frames, and train single (frozen backbone + weighted sum) or
hierarchical (dual-head, dual-mask) transformer encoders against those
targets — with every algorithmic step verified against independent oracles.
"""

from .errors import (
    BadMagic,
    DimOverflow,
    EmptyMaskError,
    FormatError,
    Truncated,
    ZeroVarianceError,
)
from .masking import MaskingConfig, MaskSet, independent_masks, sample_mask
from .model import Model, ModelConfig, apply_mask, gradcheck, load_checkpoint, save_checkpoint, weighted_sum
from .numerics import RngStream, gelu, layer_norm_rows, linear, softmax_rows
from .quantizer import (
    IGNORE_LABEL,
    Codebook,
    assign,
    build_targets,
    frame_targets,
    generate_targets,
    kmeans_fit,
    pool_segments,
)
from .segmentation import detect_segments, extend_coverage, midpoint_adjust
from .trainer import Adam, LossReport, RunConfig, combine_loss, lr_at, masked_ce, train

__version__ = "0.1.0"
