"""Multi-view candidate selection by silhouette agreement.

Given one query frame and several reference views, each reference view's
relative-pose estimate lifts the query depth into a world-frame cloud.
A good candidate's cloud lands on the object, so its reprojection into
every reference view overlaps that view's mask; a bad candidate's cloud
reprojects somewhere else. Candidates are scored by the mean
intersection-over-union across all reference views and the best one wins.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import RocPoseError
from .geometry import CameraIntrinsics, Pose, backproject, compose, invert
from .metrics import ObjectModel, add_distance
from .scenes import SceneFrame
from .solvers import PoseEstimate


@dataclass
class ReferenceSet:
    """Reference frames and the per-view relative estimates (query -> ref)."""

    frames: list
    estimates: list

    def __post_init__(self):
        if len(self.frames) != len(self.estimates):
            raise RocPoseError("one estimate is required per reference frame")
        if not self.frames:
            raise RocPoseError("reference set is empty")


@dataclass
class VoteResult:
    chosen_index: int
    iou_scores: list
    world_pose: Pose  # the chosen candidate's query camera-from-world pose
    degenerate: bool = False

    def to_dict(self) -> dict:
        return {
            "chosen_index": int(self.chosen_index),
            "iou_scores": [float(s) for s in self.iou_scores],
            "world_pose": self.world_pose.matrix.tolist(),
            "degenerate": bool(self.degenerate),
        }


def candidate_world_pose(estimate: PoseEstimate, ref_world: Pose) -> Pose:
    """Query camera-from-world pose implied by one reference view.

    The estimate maps query-camera points into that reference's camera;
    undoing it after the reference's own world pose gives the query's.
    """
    return compose(invert(estimate.pose), ref_world)


def lift_to_world(query: SceneFrame, est_world: Pose) -> np.ndarray:
    """Backproject the query's masked depth and move it into world frame."""
    points, _ = backproject(query.depth, query.intrinsics, query.mask)
    return invert(est_world).apply(points)


def reproject_mask(
    world_points: np.ndarray, pose: Pose, k: CameraIntrinsics
) -> np.ndarray:
    """Splat world points into a view's pixel grid as a binary mask.

    Nearest-pixel rounding, no z-buffer: the mask marks coverage only.
    """
    cam = pose.apply(world_points)
    z = cam[:, 2]
    ok = z > 1e-9
    mask = np.zeros((k.height, k.width), dtype=np.uint8)
    if not ok.any():
        return mask
    u = np.rint(k.fx * cam[ok, 0] / z[ok] + k.cx).astype(np.int64)
    v = np.rint(k.fy * cam[ok, 1] / z[ok] + k.cy).astype(np.int64)
    inside = (u >= 0) & (u < k.width) & (v >= 0) & (v < k.height)
    mask[v[inside], u[inside]] = 1
    return mask


def miou(a: np.ndarray, b: np.ndarray) -> float:
    """Intersection over union of two binary masks; empty union scores 0."""
    a = np.asarray(a) > 0
    b = np.asarray(b) > 0
    if a.shape != b.shape:
        raise RocPoseError("mask shapes differ")
    union = np.count_nonzero(a | b)
    if union == 0:
        return 0.0
    return float(np.count_nonzero(a & b) / union)


def vote(
    query: SceneFrame, refs: ReferenceSet, k: CameraIntrinsics | None = None
) -> VoteResult:
    """Pick the candidate whose lifted cloud agrees best with all views.

    Each candidate's score is its IoU averaged over every reference view
    (not only the view that produced it). Ties go to the lowest index; if
    every score is zero the result is flagged degenerate and index 0 is
    returned.
    """
    if np.count_nonzero(query.mask) == 0:
        raise RocPoseError("query mask is empty")
    scores = []
    candidates = []
    for frame, est in zip(refs.frames, refs.estimates):
        est_world = candidate_world_pose(est, frame.world_pose)
        candidates.append(est_world)
        cloud = lift_to_world(query, est_world)
        view_ious = [
            miou(
                reproject_mask(cloud, f.world_pose, f.intrinsics),
                f.mask,
            )
            for f in refs.frames
        ]
        scores.append(float(np.mean(view_ious)))
    chosen = int(np.argmax(scores))  # first occurrence wins ties
    degenerate = all(s == 0.0 for s in scores)
    if degenerate:
        chosen = 0
    return VoteResult(
        chosen_index=chosen,
        iou_scores=scores,
        world_pose=candidates[chosen],
        degenerate=degenerate,
    )


def best_view_oracle(
    query: SceneFrame,
    refs: ReferenceSet,
    gt_world: Pose,
    model: ObjectModel,
) -> tuple[int, Pose]:
    """Upper-bound selector: candidate minimizing ADD against ground truth.

    Needs the ground-truth query pose, so it is an oracle for analysis
    only; by construction no vote can beat it on ADD.
    """
    best_idx = 0
    best_add = np.inf
    best_pose = None
    for i, (frame, est) in enumerate(zip(refs.frames, refs.estimates)):
        est_world = candidate_world_pose(est, frame.world_pose)
        d = add_distance(model, est_world, gt_world)
        if d < best_add:
            best_idx, best_add, best_pose = i, d, est_world
    return best_idx, best_pose
