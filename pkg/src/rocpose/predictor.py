"""Pluggable ROC prediction.

The shipped predictor is a geometric oracle: it builds the ground-truth
query ROC map and then degrades it with configurable corruptions, applied
in a fixed order (coordinate noise, pixel dropout, rectangular occluder,
8-bit quantization). That gives the rest of the pipeline a controllable
stand-in for a learned network, with known failure characteristics.

The learned predictor's core computational block, scaled dot-product
cross-attention between query and reference feature tokens, is implemented
here with exact reverse-mode gradients so that a training loop can be
attached later; no training apparatus is included.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import RocPoseError
from .geometry import Pose
from .roc import (
    RocMap,
    ScaleTransform,
    build_query_roc,
    decode_roc_image,
    encode_roc_image,
)
from .scenes import SceneFrame


@dataclass
class CorruptionConfig:
    """Degradations applied to the oracle map, in declaration order.

    occluder is (u0, v0, width, height) in pixels, clipped to the image.
    The same seed and config always produce the identical map.
    """

    coord_noise_sigma: float = 0.0
    pixel_dropout: float = 0.0
    occluder: tuple | None = None
    quantize_8bit: bool = False
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "coord_noise_sigma": self.coord_noise_sigma,
            "pixel_dropout": self.pixel_dropout,
            "occluder": list(self.occluder) if self.occluder else None,
            "quantize_8bit": self.quantize_8bit,
            "seed": self.seed,
        }


def corrupt_roc(m: RocMap, cfg: CorruptionConfig) -> RocMap:
    """Apply the configured corruptions to a copy of ``m``.

    Random draws are consumed in a fixed order (noise first, over valid
    pixels in row-major order, then dropout), so outputs are reproducible
    bit for bit under a fixed seed.
    """
    coords = m.coords.copy()
    valid = m.valid.copy()
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 11]))

    if cfg.coord_noise_sigma < 0 or not 0.0 <= cfg.pixel_dropout < 1.0:
        raise RocPoseError("invalid corruption parameters")

    if cfg.coord_noise_sigma > 0:
        sel = valid > 0
        coords[sel] += rng.normal(0.0, cfg.coord_noise_sigma, size=(int(sel.sum()), 3))

    if cfg.pixel_dropout > 0:
        sel = valid > 0
        drop = rng.uniform(size=int(sel.sum())) < cfg.pixel_dropout
        vv, uu = np.nonzero(sel)
        valid[vv[drop], uu[drop]] = 0

    if cfg.occluder is not None:
        u0, v0, w, h = (int(x) for x in cfg.occluder)
        if w < 0 or h < 0:
            raise RocPoseError("occluder extent must be non-negative")
        valid[max(v0, 0) : v0 + h, max(u0, 0) : u0 + w] = 0

    out = RocMap(coords=coords, valid=valid)  # re-zeros invalidated pixels
    if cfg.quantize_8bit:
        # Round trip through the 8-bit codec; out-of-range values saturate.
        out = decode_roc_image(encode_roc_image(out, "8bit"))
    return out


def oracle_predict(
    query: SceneFrame, gt_relative: Pose, s: ScaleTransform, cfg: CorruptionConfig
) -> RocMap:
    """Ground-truth query ROC map degraded per ``cfg``."""
    return corrupt_roc(build_query_roc(query, gt_relative, s), cfg)


# ---------------------------------------------------------------------------
# Cross-attention with exact gradients


def _softmax_rows(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def cross_attention(
    fq: np.ndarray,
    fa: np.ndarray,
    wq: np.ndarray,
    wk: np.ndarray,
    wv: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Scaled dot-product cross-attention.

    Query tokens attend over reference tokens: q = fq Wq, k = fa Wk,
    v = fa Wv, attn = softmax(q k^T / sqrt(d_k)) and out = attn v.
    Returns (out, attn).
    """
    q = fq @ wq
    k = fa @ wk
    v = fa @ wv
    if wq.shape[1] != wk.shape[1]:
        raise RocPoseError("Wq and Wk must project to the same key width")
    scale = 1.0 / np.sqrt(wk.shape[1])
    attn = _softmax_rows(q @ k.T * scale)
    return attn @ v, attn


def attention_backward(
    fq: np.ndarray,
    fa: np.ndarray,
    wq: np.ndarray,
    wk: np.ndarray,
    wv: np.ndarray,
    grad_out: np.ndarray,
) -> dict:
    """Exact reverse-mode gradients of cross_attention's first output.

    Returns a dict with gradients for fq, fa, wq, wk, wv given the upstream
    gradient on ``out``.
    """
    q = fq @ wq
    k = fa @ wk
    v = fa @ wv
    scale = 1.0 / np.sqrt(wk.shape[1])
    attn = _softmax_rows(q @ k.T * scale)

    d_v = attn.T @ grad_out
    d_attn = grad_out @ v.T
    # Softmax backward, rows independent.
    d_scores = attn * (d_attn - (d_attn * attn).sum(axis=1, keepdims=True))
    d_q = d_scores @ k * scale
    d_k = d_scores.T @ q * scale
    return {
        "fq": d_q @ wq.T,
        "fa": d_k @ wk.T + d_v @ wv.T,
        "wq": fq.T @ d_q,
        "wk": fa.T @ d_k,
        "wv": fa.T @ d_v,
    }
