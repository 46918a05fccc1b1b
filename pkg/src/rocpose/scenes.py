"""Procedural RGB-D scene generation and scene-bundle serialization.

Objects live at the world origin; cameras are sampled on a sphere around
them and every world pose is camera-from-world. Rendering is point-splat
with a min-depth z-buffer: no meshes, no hidden-surface subtleties, but
deterministic and fast, which is what the synthetic protocol needs.

Bundle directory layout (all frames share one camera):

    intrinsics.json
    model_points.json
    depth_0000.pfm   mask_0000.pgm   rgb_0000.ppm   pose_0000.json
    depth_0001.pfm   ...

Depth is float32 PFM, masks are 0/255 binary P5, rgb is cosmetic P6, poses
are 4x4 row-major JSON with 17-significant-digit decimals (exact float64
round-trip). Saving a loaded bundle reproduces byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import FormatError, RocPoseError
from .geometry import (
    MIN_PROJECT_DEPTH,
    CameraIntrinsics,
    Pose,
    compose,
    invert,
    relative_pose,
    rotation_from_axis_angle,
    validate_depth,
    validate_mask,
)
from .metrics import ObjectModel
from .netpbm import read_pfm, read_pgm, read_ppm, write_pfm, write_pgm, write_ppm

OBJECT_KINDS = ("box", "cylinder", "lshape", "blob")


def default_intrinsics(width: int = 192, height: int = 192, f: float = 240.0) -> CameraIntrinsics:
    """Square working-resolution camera used by the generators."""
    return CameraIntrinsics(
        fx=f, fy=f, cx=(width - 1) / 2.0, cy=(height - 1) / 2.0,
        width=width, height=height,
    )


@dataclass
class SceneFrame:
    """One RGB-D observation: depth + mask + camera, rgb is cosmetic."""

    depth: np.ndarray
    mask: np.ndarray
    intrinsics: CameraIntrinsics
    world_pose: Pose  # camera-from-world
    rgb: np.ndarray | None = None
    object_id: str = "object"

    def __post_init__(self):
        self.depth = validate_depth(self.depth)
        self.mask = validate_mask(self.mask)
        if self.depth.shape != self.mask.shape:
            raise RocPoseError("depth and mask shapes differ")
        k = self.intrinsics
        if self.depth.shape != (k.height, k.width):
            raise RocPoseError("frame shape does not match intrinsics")
        if self.rgb is not None:
            rgb = np.asarray(self.rgb)
            if rgb.shape != (k.height, k.width, 3) or rgb.dtype != np.uint8:
                raise RocPoseError("rgb must be HxWx3 uint8")
            self.rgb = rgb


@dataclass
class SceneBundle:
    frames: list
    model: ObjectModel


# ---------------------------------------------------------------------------
# Parametric shapes


class _ShapeBase:
    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def distance(self, points: np.ndarray) -> np.ndarray:
        """Unsigned distance to the surface (approximate for blobs)."""
        raise NotImplementedError

    def extremes(self) -> np.ndarray:
        return np.zeros((0, 3))


def _box_sdf(points: np.ndarray, half: np.ndarray) -> np.ndarray:
    q = np.abs(points) - half
    outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
    inside = np.minimum(q.max(axis=1), 0.0)
    return outside + inside


class _Box(_ShapeBase):
    def __init__(self, half: np.ndarray):
        self.half = np.asarray(half, dtype=np.float64)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        hx, hy, hz = self.half
        areas = np.array([hy * hz, hy * hz, hx * hz, hx * hz, hx * hy, hx * hy])
        face = rng.choice(6, size=n, p=areas / areas.sum())
        uv = rng.uniform(-1.0, 1.0, size=(n, 2))
        pts = np.empty((n, 3))
        signs = np.where(face % 2 == 0, 1.0, -1.0)
        axis = face // 2
        for ax in range(3):
            sel = axis == ax
            other = [i for i in range(3) if i != ax]
            pts[sel, ax] = signs[sel] * self.half[ax]
            pts[sel, other[0]] = uv[sel, 0] * self.half[other[0]]
            pts[sel, other[1]] = uv[sel, 1] * self.half[other[1]]
        return pts

    def distance(self, points: np.ndarray) -> np.ndarray:
        return np.abs(_box_sdf(points, self.half))

    def extremes(self) -> np.ndarray:
        corners = np.array(
            [[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)],
            dtype=np.float64,
        )
        return corners * self.half


class _Cylinder(_ShapeBase):
    def __init__(self, radius: float, height: float, rim_points: int = 36):
        self.radius = radius
        self.height = height
        self.rim_points = rim_points

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        r, h = self.radius, self.height
        p_lateral = h / (h + r)  # 2*pi*r*h vs 2*pi*r^2
        lateral = rng.uniform(size=n) < p_lateral
        theta = rng.uniform(0.0, 2.0 * np.pi, size=n)
        pts = np.empty((n, 3))
        z = np.where(
            lateral,
            rng.uniform(-h / 2.0, h / 2.0, size=n),
            np.where(rng.uniform(size=n) < 0.5, h / 2.0, -h / 2.0),
        )
        rho = np.where(lateral, r, r * np.sqrt(rng.uniform(size=n)))
        pts[:, 0] = rho * np.cos(theta)
        pts[:, 1] = rho * np.sin(theta)
        pts[:, 2] = z
        return pts

    def distance(self, points: np.ndarray) -> np.ndarray:
        d_r = np.hypot(points[:, 0], points[:, 1]) - self.radius
        d_z = np.abs(points[:, 2]) - self.height / 2.0
        d = np.column_stack([d_r, d_z])
        outside = np.linalg.norm(np.maximum(d, 0.0), axis=1)
        inside = np.minimum(d.max(axis=1), 0.0)
        return np.abs(outside + inside)

    def extremes(self) -> np.ndarray:
        theta = 2.0 * np.pi * np.arange(self.rim_points) / self.rim_points
        ring = np.column_stack(
            [self.radius * np.cos(theta), self.radius * np.sin(theta)]
        )
        top = np.column_stack([ring, np.full(len(ring), self.height / 2.0)])
        bottom = np.column_stack([ring, np.full(len(ring), -self.height / 2.0)])
        return np.vstack([top, bottom])


class _LShape(_ShapeBase):
    """Union of two axis-aligned arms meeting at a corner, bbox-centered."""

    def __init__(self, arm: float, width: float, thickness: float):
        self.offset = np.array([arm / 2.0, arm / 2.0, thickness / 2.0])
        self.half1 = np.array([arm / 2.0, width / 2.0, thickness / 2.0])
        self.c1 = np.array([arm / 2.0, width / 2.0, thickness / 2.0]) - self.offset
        self.half2 = np.array([width / 2.0, arm / 2.0, thickness / 2.0])
        self.c2 = np.array([width / 2.0, arm / 2.0, thickness / 2.0]) - self.offset

    def _inside_strict(self, pts: np.ndarray, center, half) -> np.ndarray:
        return np.all(np.abs(pts - center) < half - 1e-12, axis=1)

    @staticmethod
    def _area(half: np.ndarray) -> float:
        a, b, c = half
        return float(8.0 * (a * b + b * c + c * a))

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        b1 = _Box(self.half1)
        b2 = _Box(self.half2)
        a1 = self._area(self.half1)
        a2 = self._area(self.half2)
        out = []
        got = 0
        while got < n:
            take = rng.uniform(size=n) < a1 / (a1 + a2)
            batch = np.where(
                take[:, None],
                b1.sample(n, rng) + self.c1,
                b2.sample(n, rng) + self.c2,
            )
            # Keep only true boundary points of the union.
            bad = self._inside_strict(batch, self.c1, self.half1) | (
                self._inside_strict(batch, self.c2, self.half2)
            )
            batch = batch[~bad]
            out.append(batch)
            got += len(batch)
        return np.vstack(out)[:n]

    def distance(self, points: np.ndarray) -> np.ndarray:
        d1 = _box_sdf(points - self.c1, self.half1)
        d2 = _box_sdf(points - self.c2, self.half2)
        return np.abs(np.minimum(d1, d2))

    def extremes(self) -> np.ndarray:
        c = np.vstack(
            [_Box(self.half1).extremes() + self.c1,
             _Box(self.half2).extremes() + self.c2]
        )
        # Shared corners are computed from identical expressions, so exact
        # dedupe is safe and leaves coordinates untouched.
        return np.unique(c, axis=0)


class _Blob(_ShapeBase):
    """Star-shaped radial perturbation of a sphere; smooth and asymmetric."""

    def __init__(self, base_radius: float, coeffs: np.ndarray):
        self.base_radius = base_radius
        self.coeffs = np.asarray(coeffs, dtype=np.float64)

    def _radius(self, dirs: np.ndarray) -> np.ndarray:
        dx, dy, dz = dirs[:, 0], dirs[:, 1], dirs[:, 2]
        basis = np.column_stack(
            [dx * dy, dy * dz, dz * dx, dx * dx - dy * dy, 3.0 * dz * dz - 1.0]
        )
        return self.base_radius * (1.0 + basis @ self.coeffs)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        dirs = rng.normal(size=(n, 3))
        norms = np.linalg.norm(dirs, axis=1)
        # Degenerate draws are astronomically unlikely but cheap to patch.
        norms[norms < 1e-12] = 1.0
        dirs /= norms[:, None]
        return dirs * self._radius(dirs)[:, None]

    def distance(self, points: np.ndarray) -> np.ndarray:
        # Radial gap is an upper bound on the true distance for star shapes;
        # adequate as a near-surface oracle with modest coefficients.
        norms = np.linalg.norm(points, axis=1)
        dirs = points / np.maximum(norms, 1e-12)[:, None]
        return np.abs(norms - self._radius(dirs))


def make_shape(kind: str, size_m: float, seed: int = 0):
    """Parametric shape for ``kind``, sized so the max extent is ~size_m.

    Blob surface coefficients are drawn from the seed; calling again with
    the same arguments reproduces the identical surface, which lets tests
    evaluate surface distance independently of the sampled model.
    """
    if size_m <= 0:
        raise RocPoseError("size_m must be positive")
    if kind == "box":
        return _Box(np.full(3, size_m / 2.0))
    if kind == "cylinder":
        return _Cylinder(radius=0.3 * size_m, height=size_m)
    if kind == "lshape":
        return _LShape(arm=size_m, width=0.4 * size_m, thickness=0.4 * size_m)
    if kind == "blob":
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0]))
        coeffs = rng.uniform(-0.1, 0.1, size=5)
        return _Blob(base_radius=0.35 * size_m, coeffs=coeffs)
    raise RocPoseError(f"unknown object kind {kind!r}; expected one of {OBJECT_KINDS}")


def _z_rotation_symmetries(steps: int) -> np.ndarray:
    out = np.zeros((steps, 4, 4))
    for i in range(steps):
        out[i] = np.eye(4)
        out[i, :3, :3] = rotation_from_axis_angle((0, 0, 1), 2.0 * np.pi * i / steps)
    out[0] = np.eye(4)  # keep the identity exact
    return out


def farthest_point_sample(points: np.ndarray, m: int) -> np.ndarray:
    """Indices of m greedily spread points; starts at the most extreme one."""
    n = len(points)
    if m > n:
        raise RocPoseError(f"cannot sample {m} from {n} points")
    centroid = points.mean(axis=0)
    chosen = np.empty(m, dtype=np.int64)
    chosen[0] = int(np.argmax(np.linalg.norm(points - centroid, axis=1)))
    dist = np.linalg.norm(points - points[chosen[0]], axis=1)
    for i in range(1, m):
        chosen[i] = int(np.argmax(dist))
        dist = np.minimum(dist, np.linalg.norm(points - points[chosen[i]], axis=1))
    return chosen


def make_object(
    kind: str,
    size_m: float = 0.2,
    samples: int = 1024,
    seed: int = 0,
    render_samples: int = 8192,
    symmetry_steps: int = 36,
    flip: bool = False,
    object_id: str | None = None,
) -> ObjectModel:
    """Sample a procedural object of the given kind.

    ``samples`` surface points are picked by farthest-point sampling from a
    denser seeded cloud (kept on the model as ``render_points`` for the
    renderer). Exact extremal points (box corners, cylinder rim rings,
    L-shape corners) are injected into the cloud so the computed diameter
    matches the analytic one.

    Symmetries: box gets 4 z-rotations (plus 180-degree x flips when
    ``flip``), cylinder gets ``symmetry_steps`` discrete z-rotations,
    L-shape and blob get the identity only.
    """
    shape = make_shape(kind, size_m, seed)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    extremes = shape.extremes()
    if render_samples <= len(extremes) + samples:
        raise RocPoseError("render_samples too small for the requested model")
    dense = np.vstack([extremes, shape.sample(render_samples - len(extremes), rng)])
    vertices = dense[farthest_point_sample(dense, samples)]

    if kind == "box":
        syms = _z_rotation_symmetries(4)
        if flip:
            fx = np.eye(4)
            fx[:3, :3] = rotation_from_axis_angle((1, 0, 0), np.pi)
            syms = np.vstack([syms, np.array([fx @ s for s in syms])])
    elif kind == "cylinder":
        syms = _z_rotation_symmetries(symmetry_steps)
    else:
        syms = np.eye(4)[None]

    return ObjectModel(
        vertices=vertices,
        diameter=None,  # recomputed from the sampled vertices
        symmetries=syms,
        object_id=object_id or f"{kind}_{seed}",
        render_points=dense,
    )


# ---------------------------------------------------------------------------
# Rendering


def _object_color(object_id: str) -> np.ndarray:
    digest = hashlib.md5(object_id.encode()).digest()
    return 80.0 + np.frombuffer(digest[:3], dtype=np.uint8) * (150.0 / 255.0)


def render_frame(
    model: ObjectModel,
    camera_pose: Pose,
    k: CameraIntrinsics,
    noise_sigma_depth: float = 0.0,
    seed: int = 0,
    splat_radius: int = 1,
    with_rgb: bool = True,
) -> SceneFrame:
    """Point-splat the model into a depth/mask/rgb frame.

    Each projected point stamps its z-depth on every pixel within
    ``splat_radius``; a min z-buffer keeps the nearest stamp, so the result
    is independent of point order. Depth noise (meters, std dev) is applied
    to valid pixels after the buffer is resolved; the mask is exactly the
    set of pixels with depth > 0.
    """
    points = model.render_points if model.render_points is not None else model.vertices
    cam = camera_pose.apply(points)
    z = cam[:, 2]
    in_front = z > MIN_PROJECT_DEPTH
    if not in_front.any():
        raise RocPoseError("object is fully behind the camera")
    cam = cam[in_front]
    z = z[in_front]
    u = np.rint(k.fx * cam[:, 0] / z + k.cx).astype(np.int64)
    v = np.rint(k.fy * cam[:, 1] / z + k.cy).astype(np.int64)

    buf = np.full((k.height, k.width), np.inf)
    r2 = splat_radius * splat_radius
    for du in range(-splat_radius, splat_radius + 1):
        for dv in range(-splat_radius, splat_radius + 1):
            if du * du + dv * dv > r2:
                continue
            uu, vv = u + du, v + dv
            ok = (uu >= 0) & (uu < k.width) & (vv >= 0) & (vv < k.height)
            np.minimum.at(buf, (vv[ok], uu[ok]), z[ok])

    mask = np.isfinite(buf)
    depth = np.where(mask, buf, 0.0).astype(np.float32)
    if noise_sigma_depth > 0:
        rng = np.random.default_rng(np.random.SeedSequence([seed, 7]))
        noise = rng.normal(0.0, noise_sigma_depth, size=int(mask.sum()))
        vals = depth[mask] + noise.astype(np.float32)
        depth[mask] = np.maximum(vals, np.float32(1e-6))

    rgb = None
    if with_rgb:
        rgb = np.zeros((k.height, k.width, 3), dtype=np.uint8)
        if mask.any():
            zz = depth[mask].astype(np.float64)
            lo, hi = zz.min(), zz.max()
            shade = 1.0 - 0.35 * (zz - lo) / max(hi - lo, 1e-9)
            rgb[mask] = np.clip(
                _object_color(model.object_id)[None, :] * shade[:, None], 0, 255
            ).astype(np.uint8)

    return SceneFrame(
        depth=depth,
        mask=mask.astype(np.uint8),
        intrinsics=k,
        world_pose=camera_pose,
        rgb=rgb,
        object_id=model.object_id,
    )


def look_at(eye, target, up_hint) -> Pose:
    """Camera-from-world pose with +z toward target, +y roughly down."""
    eye = np.asarray(eye, dtype=np.float64)
    fwd = np.asarray(target, dtype=np.float64) - eye
    n = np.linalg.norm(fwd)
    if n < 1e-12:
        raise RocPoseError("look_at: eye coincides with target")
    fwd = fwd / n
    right = np.cross(fwd, np.asarray(up_hint, dtype=np.float64))
    rn = np.linalg.norm(right)
    if rn < 1e-9:
        raise RocPoseError("look_at: up_hint is parallel to the view direction")
    right = right / rn
    down = np.cross(fwd, right)
    r = np.vstack([right, down, fwd])
    return Pose(r, -r @ eye)


def occlude_frame(frame: SceneFrame, fraction: float, seed: int = 0) -> SceneFrame:
    """Carve an edge-anchored rectangle covering ``fraction`` of the mask.

    The strip is grown from a randomly chosen image side until the carved
    masked-pixel count reaches the target, so the removed fraction is exact
    to within one row or column of the object. Depth is left untouched;
    only the mask shrinks.
    """
    if not 0.0 <= fraction < 1.0:
        raise RocPoseError("occlusion fraction must be in [0, 1)")
    mask = frame.mask
    total = int(mask.sum())
    if fraction == 0.0 or total == 0:
        return replace(frame, mask=mask.copy())
    target = fraction * total
    rng = np.random.default_rng(np.random.SeedSequence([seed, 9]))
    side = int(rng.integers(4))  # 0: left, 1: right, 2: top, 3: bottom
    per_col = mask.sum(axis=0)
    per_row = mask.sum(axis=1)
    new_mask = mask.copy()
    if side == 0:
        cut = int(np.searchsorted(np.cumsum(per_col), target)) + 1
        new_mask[:, :cut] = 0
    elif side == 1:
        cut = int(np.searchsorted(np.cumsum(per_col[::-1]), target)) + 1
        new_mask[:, mask.shape[1] - cut :] = 0
    elif side == 2:
        cut = int(np.searchsorted(np.cumsum(per_row), target)) + 1
        new_mask[:cut, :] = 0
    else:
        cut = int(np.searchsorted(np.cumsum(per_row[::-1]), target)) + 1
        new_mask[mask.shape[0] - cut :, :] = 0
    return replace(frame, mask=new_mask)


# ---------------------------------------------------------------------------
# Camera sampling


@dataclass
class PairSpec:
    """Sampling ranges for a reference/query pair (scalars mean fixed)."""

    rotation_gap_deg: tuple | float = (10.0, 40.0)
    translation_gap_m: tuple | float = (0.02, 0.10)
    occlusion: float = 0.0
    depth_noise_m: float = 0.0
    seed: int = 0
    distance_m: float | None = None
    intrinsics: CameraIntrinsics | None = None

    def ranges(self) -> tuple[tuple, tuple]:
        def norm(x):
            if np.isscalar(x):
                return (float(x), float(x))
            lo, hi = x
            if hi < lo:
                raise RocPoseError("range upper bound below lower bound")
            return (float(lo), float(hi))

        return norm(self.rotation_gap_deg), norm(self.translation_gap_m)


def _sample_reference_pose(
    rng: np.random.Generator, distance: float
) -> tuple[Pose, float]:
    direction = rng.normal(size=3)
    direction /= np.linalg.norm(direction)
    radius = distance * rng.uniform(0.9, 1.1)
    eye = direction * radius
    up = rng.normal(size=3)
    up /= np.linalg.norm(up)
    while abs(up @ direction) > 0.99:
        up = rng.normal(size=3)
        up /= np.linalg.norm(up)
    return look_at(eye, (0.0, 0.0, 0.0), up), radius


def _orbit_step(
    pose: Pose, theta: float, baseline: float, rng: np.random.Generator,
    base_radius: float,
) -> Pose:
    """Next camera pose with exact rotation gap theta and exact baseline.

    The rotation gap comes from an orbit about the world origin (the object
    center), which keeps the camera pointed at the object for any gap. The
    orbit axis tilt trades rotation between view-direction change and roll
    so that the requested baseline stays reachable; the camera radius is
    then solved to hit the baseline exactly, choosing the root that stays
    closest to the nominal orbit radius.
    """
    center = invert(pose).t  # camera center in world
    rho = np.linalg.norm(center)
    c_hat = center / rho

    if theta < 1e-12:
        q = np.eye(3)
        new_dir = c_hat
    else:
        # Cap the center separation so the radial solve stays real:
        # baseline >= rho*sin(psi) is guaranteed when 2*sin(psi/2) <= b/rho.
        psi = min(theta, 2.0 * np.arcsin(np.clip(baseline / (2.0 * rho), 0.0, 1.0)))
        cos_eta_sq = (np.cos(psi) - np.cos(theta)) / (1.0 - np.cos(theta))
        cos_eta = np.sqrt(np.clip(cos_eta_sq, 0.0, 1.0))
        sin_eta = np.sqrt(max(0.0, 1.0 - cos_eta_sq))
        # Random azimuth for the perpendicular part of the axis.
        perp = np.cross(c_hat, rng.normal(size=3))
        while np.linalg.norm(perp) < 1e-9:
            perp = np.cross(c_hat, rng.normal(size=3))
        perp /= np.linalg.norm(perp)
        alpha = rng.uniform(0.0, 2.0 * np.pi)
        perp = perp * np.cos(alpha) + np.cross(c_hat, perp) * np.sin(alpha)
        axis = cos_eta * c_hat + sin_eta * perp
        q = rotation_from_axis_angle(axis, theta)
        new_dir = q.T @ c_hat

    cos_psi = float(np.clip(c_hat @ new_dir, -1.0, 1.0))
    disc = max(0.0, (baseline / rho) ** 2 - (1.0 - cos_psi**2))
    roots = np.array([cos_psi + np.sqrt(disc), cos_psi - np.sqrt(disc)])
    radii = roots * rho
    good = radii > 0.2 * base_radius
    if good.any():
        radii = radii[good]
    pick = int(np.argmin(np.abs(radii - base_radius)))
    new_center = radii[pick] * new_dir

    r_new = pose.r @ q
    return Pose(r_new, -r_new @ new_center)


def make_pair(model: ObjectModel, spec: PairSpec) -> tuple[SceneFrame, SceneFrame, Pose]:
    """Render a reference/query pair with exact sampled pose gaps.

    Returns (reference, query, gt_relative) where gt_relative maps
    query-camera coordinates into reference-camera coordinates. The
    geodesic rotation angle of gt_relative equals the sampled rotation gap
    and its translation norm (the camera-center separation) equals the
    sampled translation gap, both to machine precision.
    """
    bundle = make_sequence(model, 2, spec)
    ref, query = bundle.frames
    return ref, query, relative_pose(ref.world_pose, query.world_pose)


def make_sequence(model: ObjectModel, n_frames: int, spec: PairSpec) -> SceneBundle:
    """Chain ``n_frames`` camera poses, each offset from the previous one.

    Frame 0 is the clean reference; occlusion (if any) applies to the later
    frames only. Depth noise applies to every frame. Deterministic under
    spec.seed.
    """
    if n_frames < 1:
        raise RocPoseError("need at least one frame")
    rot_range, trans_range = spec.ranges()
    k = spec.intrinsics or default_intrinsics()
    distance = spec.distance_m or 2.6 * model.diameter
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 2]))

    pose, base_radius = _sample_reference_pose(rng, distance)
    frames = [
        render_frame(
            model, pose, k, noise_sigma_depth=spec.depth_noise_m,
            seed=_frame_seed(spec.seed, 0),
        )
    ]
    for i in range(1, n_frames):
        theta = np.radians(rng.uniform(*rot_range))
        baseline = rng.uniform(*trans_range)
        pose = _orbit_step(pose, theta, baseline, rng, base_radius)
        frame = render_frame(
            model, pose, k, noise_sigma_depth=spec.depth_noise_m,
            seed=_frame_seed(spec.seed, i),
        )
        if spec.occlusion > 0:
            frame = occlude_frame(frame, spec.occlusion, seed=_frame_seed(spec.seed, i))
        frames.append(frame)
    return SceneBundle(frames=frames, model=model)


def _frame_seed(seed: int, index: int) -> int:
    h = hashlib.sha256(f"{seed}:{index}".encode()).digest()
    return int.from_bytes(h[:6], "big")


# ---------------------------------------------------------------------------
# Bundle serialization


def _fmt17(x: float) -> str:
    return f"{float(x):.17g}"


def _pose_to_json(pose: Pose) -> str:
    rows = []
    for row in pose.matrix:
        rows.append("[" + ", ".join(_fmt17(v) for v in row) + "]")
    return "[\n  " + ",\n  ".join(rows) + "\n]\n"


def save_bundle(bundle: SceneBundle, path) -> None:
    """Write the bundle directory; see the module docstring for the layout."""
    if not bundle.frames:
        raise RocPoseError("cannot save an empty bundle")
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    k = bundle.frames[0].intrinsics
    for f in bundle.frames:
        if f.intrinsics != k:
            raise RocPoseError("all frames in a bundle must share intrinsics")
    (root / "intrinsics.json").write_text(
        json.dumps(k.to_dict(), indent=2, sort_keys=True) + "\n"
    )
    (root / "model_points.json").write_text(
        json.dumps(bundle.model.to_dict(), indent=2, sort_keys=True) + "\n"
    )
    for i, f in enumerate(bundle.frames):
        write_pfm(root / f"depth_{i:04d}.pfm", f.depth.astype(np.float32))
        write_pgm(root / f"mask_{i:04d}.pgm", (f.mask * 255).astype(np.uint8))
        if f.rgb is not None:
            write_ppm(root / f"rgb_{i:04d}.ppm", f.rgb)
        (root / f"pose_{i:04d}.json").write_text(_pose_to_json(f.world_pose))


def load_bundle(path) -> SceneBundle:
    """Read a bundle directory back; errors name the offending file."""
    root = Path(path)
    intr_path = root / "intrinsics.json"
    if not intr_path.exists():
        raise FormatError(f"{intr_path}: missing")
    k = CameraIntrinsics.from_dict(json.loads(intr_path.read_text()))
    model_path = root / "model_points.json"
    if not model_path.exists():
        raise FormatError(f"{model_path}: missing")
    model = ObjectModel.from_dict(json.loads(model_path.read_text()))

    pose_files = sorted(root.glob("pose_*.json"))
    if not pose_files:
        raise FormatError(f"{root}: no pose_*.json frames found")
    frames = []
    for i in range(len(pose_files)):
        pose_path = root / f"pose_{i:04d}.json"
        if not pose_path.exists():
            raise FormatError(f"{pose_path}: missing (frame indices must be contiguous)")
        pose = Pose.from_matrix(np.array(json.loads(pose_path.read_text())))
        depth_path = root / f"depth_{i:04d}.pfm"
        if not depth_path.exists():
            raise FormatError(f"{depth_path}: missing")
        depth = read_pfm(depth_path)
        mask_path = root / f"mask_{i:04d}.pgm"
        if not mask_path.exists():
            raise FormatError(f"{mask_path}: missing")
        mask = (read_pgm(mask_path) > 127).astype(np.uint8)
        rgb_path = root / f"rgb_{i:04d}.ppm"
        rgb = read_ppm(rgb_path) if rgb_path.exists() else None
        frames.append(
            SceneFrame(
                depth=depth, mask=mask, intrinsics=k, world_pose=pose,
                rgb=rgb, object_id=model.object_id,
            )
        )
    return SceneBundle(frames=frames, model=model)
