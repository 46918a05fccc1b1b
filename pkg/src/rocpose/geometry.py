"""Camera geometry primitives: poses, intrinsics, projection and backprojection.

Conventions used throughout the toolkit:

* A pose maps world points into camera coordinates: ``x_cam = R @ x_world + t``
  (camera-from-world). Relative poses map one camera frame into another the
  same way.
* Intrinsics are the pinhole 3x3 ``K``; the homogeneous 4x4 form is built on
  demand via :meth:`CameraIntrinsics.matrix4`.
* Depth images store z-depth (distance along the optical axis), not ray
  length. Depth 0 marks an invalid pixel.
* Pixel ``(u, v)`` samples the ray at integer coordinates; ``u`` is the
  column, ``v`` the row.

Images, clouds and pixel lists are plain ndarrays validated at the
boundaries (see ``validate_depth`` / ``validate_mask`` / ``validate_points``)
rather than wrapper classes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import RocPoseError

# Tolerance for rotation orthonormality / unit determinant checks.
ROTATION_TOL = 1e-9

# Points closer to the image plane than this are not projectable.
MIN_PROJECT_DEPTH = 1e-9


def validate_depth(depth: np.ndarray) -> np.ndarray:
    """Return depth as a 2-D float array; values must be finite and >= 0."""
    d = np.asarray(depth)
    if d.ndim != 2:
        raise RocPoseError(f"depth must be HxW, got shape {d.shape}")
    if not np.issubdtype(d.dtype, np.floating):
        d = d.astype(np.float64)
    if not np.all(np.isfinite(d)):
        raise RocPoseError("depth contains non-finite values")
    if np.any(d < 0):
        raise RocPoseError("depth contains negative values")
    return d


def validate_mask(mask: np.ndarray) -> np.ndarray:
    """Return mask as a 2-D uint8 array of {0, 1}."""
    m = np.asarray(mask)
    if m.ndim != 2:
        raise RocPoseError(f"mask must be HxW, got shape {m.shape}")
    if m.dtype == bool:
        return m.astype(np.uint8)
    vals = np.unique(m)
    if not np.all(np.isin(vals, (0, 1))):
        raise RocPoseError("mask values must be 0 or 1")
    return m.astype(np.uint8)


def validate_points(points: np.ndarray) -> np.ndarray:
    """Return points as an Nx3 float64 array of finite coordinates."""
    p = np.asarray(points, dtype=np.float64)
    if p.ndim != 2 or p.shape[1] != 3:
        raise RocPoseError(f"points must be Nx3, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise RocPoseError("points contain non-finite values")
    return p


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole camera: focal lengths and principal point in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise RocPoseError("focal lengths must be positive")
        if self.width <= 0 or self.height <= 0:
            raise RocPoseError("image size must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise RocPoseError("principal point must lie inside the image")

    @property
    def matrix(self) -> np.ndarray:
        """3x3 K."""
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    @property
    def matrix4(self) -> np.ndarray:
        """Homogeneous 4x4 K, identity in the last row/column."""
        k4 = np.eye(4)
        k4[:3, :3] = self.matrix
        return k4

    def to_dict(self) -> dict:
        return {
            "fx": self.fx,
            "fy": self.fy,
            "cx": self.cx,
            "cy": self.cy,
            "width": self.width,
            "height": self.height,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CameraIntrinsics":
        return cls(
            fx=float(d["fx"]),
            fy=float(d["fy"]),
            cx=float(d["cx"]),
            cy=float(d["cy"]),
            width=int(d["width"]),
            height=int(d["height"]),
        )


@dataclass(frozen=True)
class Pose:
    """Rigid transform x -> r @ x + t. Immutable; shareable across workers."""

    r: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.r, dtype=np.float64)
        t = np.asarray(self.t, dtype=np.float64).reshape(-1)
        if r.shape != (3, 3):
            raise RocPoseError(f"rotation must be 3x3, got {r.shape}")
        if t.shape != (3,):
            raise RocPoseError(f"translation must have 3 components, got {t.shape}")
        if not np.all(np.isfinite(r)) or not np.all(np.isfinite(t)):
            raise RocPoseError("pose contains non-finite values")
        err = np.abs(r.T @ r - np.eye(3)).max()
        if err > ROTATION_TOL:
            raise RocPoseError(f"rotation not orthonormal (max residual {err:.3e})")
        det = np.linalg.det(r)
        if abs(det - 1.0) > ROTATION_TOL:
            raise RocPoseError(f"rotation determinant {det} is not +1")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "t", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "Pose":
        m = np.asarray(m, dtype=np.float64)
        if m.shape != (4, 4):
            raise RocPoseError(f"pose matrix must be 4x4, got {m.shape}")
        if np.abs(m[3] - np.array([0.0, 0.0, 0.0, 1.0])).max() > ROTATION_TOL:
            raise RocPoseError("pose matrix last row must be [0, 0, 0, 1]")
        return cls(m[:3, :3], m[:3, 3])

    @classmethod
    def from_axis_angle(cls, axis, angle_rad: float, t=(0.0, 0.0, 0.0)) -> "Pose":
        return cls(rotation_from_axis_angle(axis, angle_rad), np.asarray(t, float))

    @property
    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.r
        m[:3, 3] = self.t
        return m

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform an Nx3 (or 3,) array of points."""
        p = np.asarray(points, dtype=np.float64)
        return p @ self.r.T + self.t


def compose(a: Pose, b: Pose) -> Pose:
    """Pose applying b first, then a: compose(a, b).apply(x) == a.apply(b.apply(x))."""
    return Pose(a.r @ b.r, a.r @ b.t + a.t)


def invert(p: Pose) -> Pose:
    return Pose(p.r.T, -p.r.T @ p.t)


def relative_pose(ref_world: Pose, query_world: Pose) -> Pose:
    """Transform mapping query-camera coordinates into reference-camera coordinates.

    Both inputs are camera-from-world poses.
    """
    return compose(ref_world, invert(query_world))


def rotation_from_axis_angle(axis, angle_rad: float) -> np.ndarray:
    """Rodrigues formula. ``axis`` need not be unit length (but not zero)."""
    a = np.asarray(axis, dtype=np.float64).reshape(3)
    n = np.linalg.norm(a)
    if n == 0:
        raise RocPoseError("axis must be nonzero")
    a = a / n
    kx = np.array(
        [[0.0, -a[2], a[1]], [a[2], 0.0, -a[0]], [-a[1], a[0], 0.0]]
    )
    return np.eye(3) + np.sin(angle_rad) * kx + (1.0 - np.cos(angle_rad)) * (kx @ kx)


def rotation_angle_rad(r: np.ndarray) -> float:
    """Geodesic angle of a rotation matrix, in [0, pi].

    atan2 of (|sin|, cos) rather than acos of the trace: acos loses half
    the significant digits near 0 and pi (a floor of ~1e-8 rad), while the
    skew norm recovers |sin(angle)| = ||r - r.T||_F / (2 sqrt 2) with full
    precision for small angles.
    """
    skew = r - r.T
    s = np.sqrt((skew * skew).sum()) / (2.0 * np.sqrt(2.0))
    c = (np.trace(r) - 1.0) / 2.0
    return float(np.arctan2(s, np.clip(c, -1.0, 1.0)))


def random_rotation(rng: int | np.random.Generator) -> np.ndarray:
    """Uniform random rotation from a normalized Gaussian quaternion.

    Accepts either a Generator or an integer seed (salted so the stream is
    independent of other consumers of the same seed).
    """
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(np.random.SeedSequence([int(rng), 3]))
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def backproject(
    depth: np.ndarray, k: CameraIntrinsics, mask: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Lift valid pixels to camera-frame 3-D points.

    A pixel is valid where depth > 0 and (if given) mask == 1. Returns
    ``(points, pixels)``: Nx3 float64 camera points and the Nx2 integer
    (u, v) source pixels, index-aligned, in row-major scan order.
    """
    d = validate_depth(depth)
    if mask is not None:
        m = validate_mask(mask)
        if m.shape != d.shape:
            raise RocPoseError(
                f"mask shape {m.shape} does not match depth shape {d.shape}"
            )
        valid = (d > 0) & (m > 0)
    else:
        valid = d > 0
    if d.shape != (k.height, k.width):
        raise RocPoseError(
            f"depth shape {d.shape} does not match intrinsics "
            f"{(k.height, k.width)}"
        )
    vv, uu = np.nonzero(valid)  # row-major order
    z = d[vv, uu].astype(np.float64)
    x = (uu - k.cx) * z / k.fx
    y = (vv - k.cy) * z / k.fy
    points = np.column_stack([x, y, z])
    pixels = np.column_stack([uu, vv]).astype(np.int64)
    return points, pixels


def project(
    points: np.ndarray, k: CameraIntrinsics
) -> tuple[np.ndarray, np.ndarray]:
    """Project camera-frame points to pixel coordinates.

    Returns ``(pixels, in_view)``: Nx2 float64 (u, v) and a boolean flag per
    point. Points with z <= 1e-9, or whose nearest pixel falls outside the
    image, are flagged out-of-view rather than dropped, so indices stay
    aligned with the input.
    """
    p = validate_points(points)
    z = p[:, 2]
    ok = z > MIN_PROJECT_DEPTH
    safe_z = np.where(ok, z, 1.0)
    u = k.fx * p[:, 0] / safe_z + k.cx
    v = k.fy * p[:, 1] / safe_z + k.cy
    pixels = np.column_stack([u, v])
    ur = np.rint(u)
    vr = np.rint(v)
    in_view = ok & (ur >= 0) & (ur <= k.width - 1) & (vr >= 0) & (vr <= k.height - 1)
    # Out-of-view pixel values are still reported but not meaningful when
    # z was clamped; callers must honor the flag.
    return pixels, in_view
