"""Pose accuracy metrics: ADD, ADD-S, AUC, recalls, MSSD/MSPD, aggregates.

Distances are meters, angles degrees, pixel errors pixels. Recall-style
metrics use strict ``<`` comparisons: a distance exactly on the threshold
counts as a failure. Missed frames enter as infinite distances, which
contribute zero accuracy at every threshold.
"""

from __future__ import annotations

import csv
import io
import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import RocPoseError
from .geometry import CameraIntrinsics, Pose, rotation_angle_rad, validate_points

# Brute-force pairwise work is chunked to this many rows at a time.
_CHUNK = 256

# Identity check tolerance for the symmetry-set invariant.
_IDENTITY_TOL = 1e-9


def _max_pairwise_distance(points: np.ndarray) -> float:
    best = 0.0
    for i in range(0, len(points), _CHUNK):
        chunk = points[i : i + _CHUNK]
        d = np.linalg.norm(chunk[:, None, :] - points[None, :, :], axis=2)
        best = max(best, float(d.max()))
    return best


@dataclass
class ObjectModel:
    """Sampled object surface with its diameter and symmetry set.

    vertices: Mx3 sampled surface points used by the metrics (M <= 2048 at
    desk scale keeps the brute-force ADD-S affordable).
    diameter: max pairwise vertex distance; validated to 1e-6 if supplied,
    recomputed if None.
    symmetries: (S, 4, 4) rigid transforms mapping the model onto itself;
    must include the identity.
    render_points: optional denser surface cloud for the point-splat
    renderer. Not part of the metric identity and not serialized in scene
    bundles; consumers fall back to ``vertices`` when absent.
    """

    vertices: np.ndarray
    diameter: float | None = None
    symmetries: np.ndarray | None = None
    object_id: str = "object"
    render_points: np.ndarray | None = None

    def __post_init__(self):
        self.vertices = validate_points(self.vertices)
        if len(self.vertices) < 1:
            raise RocPoseError("model needs at least one vertex")
        true_diam = _max_pairwise_distance(self.vertices)
        if self.diameter is None:
            self.diameter = true_diam
        elif abs(self.diameter - true_diam) > 1e-6:
            raise RocPoseError(
                f"stated diameter {self.diameter} differs from computed "
                f"{true_diam} by more than 1e-6"
            )
        if self.diameter <= 0:
            raise RocPoseError("diameter must be positive")
        if self.symmetries is None:
            self.symmetries = np.eye(4)[None]
        self.symmetries = np.asarray(self.symmetries, dtype=np.float64)
        if self.symmetries.ndim != 3 or self.symmetries.shape[1:] != (4, 4):
            raise RocPoseError("symmetries must be Sx4x4")
        has_identity = any(
            np.abs(s - np.eye(4)).max() <= _IDENTITY_TOL for s in self.symmetries
        )
        if not has_identity:
            raise RocPoseError("symmetry set must include the identity")
        if self.render_points is not None:
            self.render_points = validate_points(self.render_points)

    def to_dict(self) -> dict:
        return {
            "object_id": self.object_id,
            "vertices": self.vertices.tolist(),
            "diameter": float(self.diameter),
            "symmetries": self.symmetries.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ObjectModel":
        return cls(
            vertices=np.asarray(d["vertices"], dtype=np.float64),
            diameter=float(d["diameter"]),
            symmetries=np.asarray(d["symmetries"], dtype=np.float64),
            object_id=str(d.get("object_id", "object")),
        )


def _transform(vertices: np.ndarray, pose: Pose) -> np.ndarray:
    return vertices @ pose.r.T + pose.t


def _apply_symmetry(vertices: np.ndarray, sym: np.ndarray) -> np.ndarray:
    return vertices @ sym[:3, :3].T + sym[:3, 3]


def add_distance(model: ObjectModel, est: Pose, gt: Pose) -> float:
    """Mean distance between matched vertices under the two poses."""
    a = _transform(model.vertices, est)
    b = _transform(model.vertices, gt)
    return float(np.linalg.norm(a - b, axis=1).mean())


def adds_distance(model: ObjectModel, est: Pose, gt: Pose) -> float:
    """Mean closest-point distance (symmetric variant of ADD).

    Brute force over all vertex pairs, chunked; fine for M <= 2048.
    """
    a = _transform(model.vertices, est)
    b = _transform(model.vertices, gt)
    total = 0.0
    for i in range(0, len(a), _CHUNK):
        chunk = a[i : i + _CHUNK]
        d = np.linalg.norm(chunk[:, None, :] - b[None, :, :], axis=2)
        total += float(d.min(axis=1).sum())
    return total / len(a)


def auc(
    distances, max_threshold: float = 0.10, bins: int | None = None
) -> float:
    """Area under the accuracy-vs-threshold curve, in percent.

    Default is exact integration of the step function:
    100/(n*T) * sum_i max(0, T - d_i). Pass ``bins`` for the coarser
    fixed-bin approximation some protocols use (accuracy sampled at
    k*T/bins, k = 1..bins).
    """
    d = np.asarray(distances, dtype=np.float64)
    if d.ndim != 1 or len(d) == 0:
        raise RocPoseError("auc needs a non-empty 1-D distance list")
    if max_threshold <= 0:
        raise RocPoseError("max_threshold must be positive")
    d = np.where(np.isnan(d), np.inf, d)
    if bins is None:
        area = np.maximum(0.0, max_threshold - d).sum()
        return float(100.0 * area / (len(d) * max_threshold))
    if bins < 1:
        raise RocPoseError("bins must be >= 1")
    thresholds = max_threshold * np.arange(1, bins + 1) / bins
    acc = (d[None, :] < thresholds[:, None]).mean(axis=1)
    return float(100.0 * acc.mean())


def add_01d_recall(distances, diameter: float) -> float:
    """Percent of frames with distance strictly below 0.1 * diameter."""
    d = np.asarray(distances, dtype=np.float64)
    if d.ndim != 1 or len(d) == 0:
        raise RocPoseError("recall needs a non-empty 1-D distance list")
    if diameter <= 0:
        raise RocPoseError("diameter must be positive")
    return float(100.0 * np.mean(d < 0.1 * diameter))


def deg_cm_recall(rot_deg, trans_m, deg: float = 5.0, cm: float = 5.0) -> float:
    """Percent of frames with rotation < deg AND translation < cm (strict)."""
    r = np.asarray(rot_deg, dtype=np.float64)
    t = np.asarray(trans_m, dtype=np.float64)
    if r.shape != t.shape or r.ndim != 1 or len(r) == 0:
        raise RocPoseError("rotation/translation error lists must match, non-empty")
    return float(100.0 * np.mean((r < deg) & (t < cm / 100.0)))


def mssd(model: ObjectModel, est: Pose, gt: Pose) -> float:
    """Maximum symmetry-aware surface distance, meters.

    min over symmetries of the max vertex displacement between the
    estimated pose and the ground truth composed with the symmetry.
    """
    a = _transform(model.vertices, est)
    best = np.inf
    for sym in model.symmetries:
        b = _transform(_apply_symmetry(model.vertices, sym), gt)
        best = min(best, float(np.linalg.norm(a - b, axis=1).max()))
    return best


def _project_px(points: np.ndarray, k: CameraIntrinsics) -> np.ndarray | None:
    z = points[:, 2]
    if np.any(z <= 1e-9):
        return None  # behind the camera, this candidate does not project
    u = k.fx * points[:, 0] / z + k.cx
    v = k.fy * points[:, 1] / z + k.cy
    return np.column_stack([u, v])


def mspd(model: ObjectModel, est: Pose, gt: Pose, k: CameraIntrinsics) -> float:
    """Maximum symmetry-aware projection distance, pixels.

    Symmetries that put any vertex behind either camera score infinity.
    """
    a = _project_px(_transform(model.vertices, est), k)
    if a is None:
        return np.inf
    best = np.inf
    for sym in model.symmetries:
        b = _project_px(_transform(_apply_symmetry(model.vertices, sym), gt), k)
        if b is None:
            continue
        best = min(best, float(np.linalg.norm(a - b, axis=1).max()))
    return best


def mssd_recall(values, diameter: float) -> float:
    """Mean recall over thresholds 0.05d .. 0.5d in steps of 0.05d."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or len(v) == 0:
        raise RocPoseError("recall needs a non-empty 1-D value list")
    thresholds = diameter * np.arange(1, 11) * 0.05
    return float(100.0 * (v[None, :] < thresholds[:, None]).mean())


def mspd_recall(values, image_width: int) -> float:
    """Mean recall over thresholds 5r .. 50r (r = image_width / 640)."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or len(v) == 0:
        raise RocPoseError("recall needs a non-empty 1-D value list")
    r = image_width / 640.0
    thresholds = r * np.arange(1, 11) * 5.0
    return float(100.0 * (v[None, :] < thresholds[:, None]).mean())


def ar_partial(
    mssd_values, mspd_values, diameter: float, image_width: int
) -> float:
    """Average recall over the MSSD and MSPD threshold grids.

    Partial in the sense that no visible-surface term enters the average;
    only the two symmetry-aware grids above are used.
    """
    return 0.5 * (
        mssd_recall(mssd_values, diameter) + mspd_recall(mspd_values, image_width)
    )


def robustness_std(per_object_errors: dict) -> float:
    """Mean over objects of the population std of that object's errors.

    Groups with fewer than two finite entries are excluded; a warning
    reports how many were dropped. Raises if nothing remains.
    """
    stds = []
    excluded = 0
    for _, errors in sorted(per_object_errors.items()):
        e = np.asarray(errors, dtype=np.float64)
        e = e[np.isfinite(e)]
        if len(e) < 2:
            excluded += 1
            continue
        stds.append(float(e.std()))  # population std (ddof=0)
    if excluded:
        warnings.warn(
            f"robustness_std: excluded {excluded} group(s) with fewer than "
            "two finite errors",
            stacklevel=2,
        )
    if not stds:
        raise RocPoseError("robustness_std: no group had two or more errors")
    return float(np.mean(stds))


def pose_errors_deg_m(est: Pose, gt: Pose) -> tuple[float, float]:
    """(geodesic rotation error in degrees, translation error in meters)."""
    rot = np.degrees(rotation_angle_rad(est.r @ gt.r.T))
    return float(rot), float(np.linalg.norm(est.t - gt.t))


@dataclass
class MetricReport:
    """Per-frame metric values plus suite-level aggregates."""

    per_frame: list = field(default_factory=list)
    aggregates: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        def clean(x):
            if isinstance(x, float) and not np.isfinite(x):
                return None
            return x

        return {
            "per_frame": [
                {key: clean(val) for key, val in row.items()}
                for row in self.per_frame
            ],
            "aggregates": {key: clean(val) for key, val in self.aggregates.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        if not self.per_frame:
            return ""
        out = io.StringIO()
        writer = csv.DictWriter(out, fieldnames=list(self.per_frame[0].keys()))
        writer.writeheader()
        for row in self.per_frame:
            writer.writerow(
                {
                    k: ("" if isinstance(v, float) and not np.isfinite(v) else v)
                    for k, v in row.items()
                }
            )
        return out.getvalue()


def compute_report(
    model: ObjectModel,
    gt_poses: list,
    est_poses: list,
    k: CameraIntrinsics | None = None,
    object_ids: list | None = None,
    max_threshold: float = 0.10,
) -> MetricReport:
    """Run the full metric suite over aligned ground-truth/estimate lists.

    ``est_poses`` entries may be None for missed frames; misses score as
    infinite distances. MSPD is only computed when intrinsics are given.
    """
    if len(gt_poses) != len(est_poses):
        raise RocPoseError("gt/estimate lists must have equal length")
    if object_ids is not None and len(object_ids) != len(gt_poses):
        raise RocPoseError("object_ids must align with the pose lists")

    per_frame = []
    for i, (gt, est) in enumerate(zip(gt_poses, est_poses)):
        if est is None:
            row = {
                "frame": i,
                "miss": True,
                "add": np.inf,
                "adds": np.inf,
                "rot_deg": np.inf,
                "trans_m": np.inf,
                "mssd": np.inf,
                "mspd": np.inf,
            }
        else:
            rot_deg, trans_m = pose_errors_deg_m(est, gt)
            row = {
                "frame": i,
                "miss": False,
                "add": add_distance(model, est, gt),
                "adds": adds_distance(model, est, gt),
                "rot_deg": rot_deg,
                "trans_m": trans_m,
                "mssd": mssd(model, est, gt),
                "mspd": mspd(model, est, gt, k) if k is not None else np.inf,
            }
        if object_ids is not None:
            row["object_id"] = object_ids[i]
        per_frame.append(row)

    adds_vals = np.array([r["adds"] for r in per_frame])
    add_vals = np.array([r["add"] for r in per_frame])
    rot_vals = np.array([r["rot_deg"] for r in per_frame])
    trans_vals = np.array([r["trans_m"] for r in per_frame])
    mssd_vals = np.array([r["mssd"] for r in per_frame])

    aggregates = {
        "frames": len(per_frame),
        "miss_rate_percent": float(
            100.0 * np.mean([r["miss"] for r in per_frame])
        ),
        "add_auc": auc(add_vals, max_threshold),
        "adds_auc": auc(adds_vals, max_threshold),
        "add_01d_recall": add_01d_recall(add_vals, model.diameter),
        "recall_5deg_5cm": deg_cm_recall(rot_vals, trans_vals),
        "mssd_recall": mssd_recall(mssd_vals, model.diameter),
        "max_threshold_m": max_threshold,
    }
    if k is not None:
        mspd_vals = np.array([r["mspd"] for r in per_frame])
        aggregates["mspd_recall"] = mspd_recall(mspd_vals, k.width)
        aggregates["ar_partial"] = ar_partial(
            mssd_vals, mspd_vals, model.diameter, k.width
        )
    if object_ids is not None:
        groups: dict = {}
        for row in per_frame:
            groups.setdefault(row["object_id"], []).append(row["add"])
        try:
            aggregates["robustness_std_add"] = robustness_std(groups)
        except RocPoseError:
            pass  # no group large enough; aggregate simply absent
    return MetricReport(per_frame=per_frame, aggregates=aggregates)
