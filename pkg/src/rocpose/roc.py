"""Reference object coordinate (ROC) maps.

A ROC map stores, per pixel, the 3-D coordinates of the observed surface
expressed in the reference camera frame and normalized by a scale transform
fitted to the reference cloud: subtract the cloud's axis-aligned center,
then divide by 1.1 times the largest axis extent. A cloud the transform was
fitted on therefore lands inside [-0.5/1.1, 0.5/1.1] on every axis, leaving
slack for geometry the query reveals beyond the reference extent.

Invalid pixels carry the sentinel (0, 0, 0) with valid = 0. Query maps may
legitimately exceed the nominal range when the query sees parts of the
object the reference did not; such values are flagged via
``RocMap.out_of_range_count``, never clamped.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateCloud, RocPoseError
from .geometry import Pose, backproject, validate_mask, validate_points
from .netpbm import read_pfm, read_pgm, write_pfm, write_pgm, write_ppm, read_ppm
from .scenes import SceneFrame

# Extent inflation: keeps exact reference coordinates strictly inside the
# half-unit cube (max |coordinate| = 0.5/1.1).
MARGIN = 1.1

# Nominal bound for predicted maps: exact bound plus slack for noise.
NOMINAL_BOUND = 0.55


@dataclass(frozen=True)
class ScaleTransform:
    """Similarity y = scale * x + shift with isotropic positive scale."""

    scale: float
    shift: np.ndarray

    def __post_init__(self):
        if not np.isfinite(self.scale) or self.scale <= 0:
            raise RocPoseError("scale must be positive and finite")
        shift = np.asarray(self.shift, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(shift)):
            raise RocPoseError("shift must be finite")
        object.__setattr__(self, "shift", shift)

    @property
    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[0, 0] = m[1, 1] = m[2, 2] = self.scale
        m[:3, 3] = self.shift
        return m

    def to_dict(self) -> dict:
        return {"scale": float(self.scale), "shift": self.shift.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "ScaleTransform":
        return cls(scale=float(d["scale"]), shift=np.asarray(d["shift"], float))


def fit_scale(cloud: np.ndarray) -> ScaleTransform:
    """Fit the normalizing transform to a reference cloud.

    The largest axis-aligned extent w and center c give
    scale = 1 / (w * MARGIN) and shift = -scale * c, i.e. points are
    centered first, then scaled.
    """
    points = validate_points(cloud)
    if len(points) < 2:
        raise DegenerateCloud("need at least two points to fit a scale")
    lo = points.min(axis=0)
    hi = points.max(axis=0)
    w = float((hi - lo).max())
    if w <= 0.0:
        raise DegenerateCloud("cloud has zero extent on every axis")
    center = (hi + lo) / 2.0
    scale = 1.0 / (w * MARGIN)
    return ScaleTransform(scale=scale, shift=-scale * center)


def apply_scale(s: ScaleTransform, cloud: np.ndarray) -> np.ndarray:
    return validate_points(cloud) * s.scale + s.shift


def invert_scale(s: ScaleTransform) -> ScaleTransform:
    """Transform undoing s; compose with s to get the identity within 1e-12."""
    return ScaleTransform(scale=1.0 / s.scale, shift=-s.shift / s.scale)


@dataclass
class RocMap:
    """Per-pixel normalized reference-frame coordinates plus validity."""

    coords: np.ndarray  # HxWx3 float64
    valid: np.ndarray  # HxW uint8

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=np.float64)
        if c.ndim != 3 or c.shape[2] != 3:
            raise RocPoseError(f"coords must be HxWx3, got {c.shape}")
        v = validate_mask(self.valid)
        if v.shape != c.shape[:2]:
            raise RocPoseError("valid mask shape does not match coords")
        if not np.all(np.isfinite(c[v > 0])):
            raise RocPoseError("valid coordinates must be finite")
        c = np.where(v[:, :, None] > 0, c, 0.0)  # invalid sentinel (0,0,0)
        self.coords = c
        self.valid = v

    @property
    def shape(self) -> tuple:
        return self.valid.shape

    def out_of_range_count(self, bound: float = NOMINAL_BOUND) -> int:
        """Valid pixels with any |coordinate| above the nominal bound."""
        over = np.abs(self.coords).max(axis=2) > bound
        return int(np.count_nonzero(over & (self.valid > 0)))


def _scatter(
    shape: tuple, pixels: np.ndarray, values: np.ndarray
) -> RocMap:
    coords = np.zeros(shape + (3,), dtype=np.float64)
    valid = np.zeros(shape, dtype=np.uint8)
    coords[pixels[:, 1], pixels[:, 0]] = values
    valid[pixels[:, 1], pixels[:, 0]] = 1
    return RocMap(coords=coords, valid=valid)


def build_reference_roc(frame: SceneFrame) -> tuple[RocMap, ScaleTransform]:
    """Normalized self-coordinates of the reference frame.

    Backprojects the masked depth, fits the scale transform on that cloud
    and writes the normalized coordinates back at their source pixels. All
    valid coordinates land within 0.5/MARGIN by construction.
    """
    points, pixels = backproject(frame.depth, frame.intrinsics, frame.mask)
    if len(points) < 2:
        raise DegenerateCloud("reference frame has fewer than two valid pixels")
    s = fit_scale(points)
    return _scatter(frame.depth.shape, pixels, apply_scale(s, points)), s


def build_query_roc(frame: SceneFrame, gt_relative: Pose, s: ScaleTransform) -> RocMap:
    """Ground-truth ROC map of a query frame.

    The query cloud is lifted in the query camera, mapped into the
    reference camera by gt_relative, then normalized with the reference's
    scale transform. Coordinates may exceed the nominal range when the
    query reveals geometry outside the reference extent; they are kept
    as-is.
    """
    points, pixels = backproject(frame.depth, frame.intrinsics, frame.mask)
    if len(points) == 0:
        raise DegenerateCloud("query frame has no valid pixels")
    return _scatter(frame.depth.shape, pixels, apply_scale(s, gt_relative.apply(points)))


def smooth_l1(residual: np.ndarray, beta: float = 0.1) -> np.ndarray:
    """Elementwise smooth-L1: quadratic inside |r| < beta, linear outside.

    Both branches meet at beta with value beta/2 and slope 1, so the
    function is C1 at the knee.
    """
    if beta <= 0:
        raise RocPoseError("beta must be positive")
    r = np.abs(np.asarray(residual, dtype=np.float64))
    return np.where(r < beta, 0.5 * r * r / beta, r - 0.5 * beta)


def roc_loss(
    pred: RocMap | np.ndarray,
    gt: RocMap | np.ndarray,
    mask: np.ndarray,
    beta: float = 0.1,
) -> float:
    """Masked mean of the per-pixel channel-summed smooth-L1 error.

    Accepts RocMaps or raw HxWx3 coordinate arrays (the form a predictor
    emits). The divisor is the number of mask=1 pixels, not the image area.
    """
    pc = pred.coords if isinstance(pred, RocMap) else np.asarray(pred, np.float64)
    gc = gt.coords if isinstance(gt, RocMap) else np.asarray(gt, np.float64)
    m = validate_mask(mask)
    if pc.shape != gc.shape or m.shape != pc.shape[:2]:
        raise RocPoseError("pred, gt and mask shapes must match")
    n = int(m.sum())
    if n == 0:
        raise RocPoseError("loss mask is empty")
    per_pixel = smooth_l1(pc - gc, beta).sum(axis=2)
    return float(per_pixel[m > 0].mean())


# ---------------------------------------------------------------------------
# Image codecs


@dataclass
class RocImage:
    """Encoded ROC map: float (lossless) or 8-bit (quantized) buffer."""

    mode: str  # "float" or "8bit"
    data: np.ndarray  # float64 HxWx3 or uint8 HxWx3
    valid: np.ndarray  # HxW uint8
    clamped: int = 0  # 8bit only: count of out-of-range values clamped


def encode_roc_image(m: RocMap, mode: str = "float") -> RocImage:
    """Encode a map for storage.

    float: verbatim copy, lossless round-trip.
    8bit: v = round((x + 0.5) * 255) clamped to [0, 255]; the clamp count
    is reported on the image. Maximum round-trip error is 0.5/255.
    """
    if mode == "float":
        return RocImage(mode, m.coords.copy(), m.valid.copy())
    if mode == "8bit":
        scaled = (m.coords + 0.5) * 255.0
        quantized = np.rint(scaled)
        clamped = int(
            np.count_nonzero(
                ((quantized < 0) | (quantized > 255)) & (m.valid[:, :, None] > 0)
            )
        )
        data = np.clip(quantized, 0, 255).astype(np.uint8)
        data[m.valid == 0] = 0
        return RocImage(mode, data, m.valid.copy(), clamped)
    raise RocPoseError(f"unknown encode mode {mode!r}")


def decode_roc_image(img: RocImage) -> RocMap:
    if img.mode == "float":
        return RocMap(coords=img.data.copy(), valid=img.valid.copy())
    if img.mode == "8bit":
        coords = img.data.astype(np.float64) / 255.0 - 0.5
        return RocMap(coords=coords, valid=img.valid.copy())
    raise RocPoseError(f"unknown image mode {img.mode!r}")


def _valid_path(map_path):
    p = Path(map_path)
    return p.with_name(p.stem + "_valid.pgm")


def save_roc_image(img: RocImage, map_path) -> None:
    """Write a ROC image plus its validity mask.

    Float maps go to PFM (little-endian, 3-channel, float32 at the file
    boundary), 8-bit maps to binary PPM. The mask is saved next to the map
    as ``<stem>_valid.pgm``.
    """
    p = Path(map_path)
    if img.mode == "float":
        if p.suffix != ".pfm":
            raise RocPoseError("float ROC images are stored as .pfm")
        write_pfm(p, img.data.astype(np.float32))
    elif img.mode == "8bit":
        if p.suffix != ".ppm":
            raise RocPoseError("8-bit ROC images are stored as .ppm")
        write_ppm(p, img.data)
    else:
        raise RocPoseError(f"unknown image mode {img.mode!r}")
    write_pgm(_valid_path(p), (img.valid * 255).astype(np.uint8))


def load_roc_image(map_path) -> RocImage:
    p = Path(map_path)
    valid = (read_pgm(_valid_path(p)) > 127).astype(np.uint8)
    if p.suffix == ".pfm":
        return RocImage("float", read_pfm(p).astype(np.float64), valid)
    if p.suffix == ".ppm":
        return RocImage("8bit", read_ppm(p), valid)
    raise RocPoseError(f"unrecognized ROC image extension {p.suffix!r}")
