"""Pose recovery from ROC maps: correspondence extraction, rigid alignment
(Umeyama), and RANSAC P3P with Gauss-Newton refinement for the RGB-only
path.

Both solvers are deterministic: Umeyama is closed form, and the RANSAC
hypothesis list is generated up front from the config seed with ties broken
by lowest hypothesis index, so results do not depend on scheduling or
worker fan-out.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    DegenerateGeometry,
    InsufficientCorrespondences,
    NoConsensus,
)
from .geometry import (
    CameraIntrinsics,
    Pose,
    invert,
    rotation_angle_rad,
    rotation_from_axis_angle,
)
from .roc import RocMap, ScaleTransform, apply_scale, invert_scale
from .scenes import SceneFrame

# Relative singular-value floor below which the correspondence geometry is
# treated as collinear.
_RANK_TOL = 1e-12


@dataclass
class Correspondences3D:
    """Index-aligned query-camera points and reference-frame points."""

    source: np.ndarray  # Nx3 query-camera metric points
    target: np.ndarray  # Nx3 reference-frame metric points


@dataclass
class Correspondences2D3D:
    """Query pixels paired with reference-frame 3-D points (RGB-only path)."""

    pixels: np.ndarray  # Nx2 float (u, v)
    points: np.ndarray  # Nx3 reference-frame metric points


@dataclass
class PoseEstimate:
    pose: Pose
    inlier_count: int
    residual_rms: float
    method: str
    scale: float = 1.0  # only != 1 when a similarity fit was requested

    def to_dict(self) -> dict:
        return {
            "pose": self.pose.matrix.tolist(),
            "inlier_count": int(self.inlier_count),
            "residual_rms": float(self.residual_rms),
            "method": self.method,
            "scale": float(self.scale),
        }


@dataclass
class RansacConfig:
    iterations: int = 1024
    inlier_px: float = 2.0
    min_inliers: int = 12
    seed: int = 0
    refine: bool = True
    max_refine_iters: int = 50


def extract_correspondences_3d(
    pred: RocMap, query: SceneFrame, s: ScaleTransform
) -> Correspondences3D:
    """Pair query-camera points with denormalized predicted coordinates.

    A pixel contributes exactly when the prediction is valid, the query
    mask is set and the query depth is positive; the pair count equals the
    size of that intersection. No subsampling happens here (see
    ``subsample_3d``).
    """
    combined = (pred.valid > 0) & (query.mask > 0) & (query.depth > 0)
    vv, uu = np.nonzero(combined)
    z = query.depth[vv, uu].astype(np.float64)
    k = query.intrinsics
    source = np.column_stack(
        [(uu - k.cx) * z / k.fx, (vv - k.cy) * z / k.fy, z]
    )
    target = apply_scale(invert_scale(s), pred.coords[vv, uu])
    return Correspondences3D(source=source, target=target)


def extract_correspondences_2d3d(
    pred: RocMap, query: SceneFrame, s: ScaleTransform
) -> Correspondences2D3D:
    """2D-3D pairs for PnP: prediction valid and mask set; depth not needed."""
    combined = (pred.valid > 0) & (query.mask > 0)
    vv, uu = np.nonzero(combined)
    points = apply_scale(invert_scale(s), pred.coords[vv, uu])
    pixels = np.column_stack([uu, vv]).astype(np.float64)
    return Correspondences2D3D(pixels=pixels, points=points)


def subsample_3d(c: Correspondences3D, max_pairs: int = 20000, seed: int = 0):
    """Uniform seeded subsample keeping row-major order; no-op when small."""
    n = len(c.source)
    if n <= max_pairs:
        return c
    rng = np.random.default_rng(np.random.SeedSequence([seed, 13]))
    idx = np.sort(rng.choice(n, size=max_pairs, replace=False))
    return Correspondences3D(source=c.source[idx], target=c.target[idx])


def subsample_2d3d(c: Correspondences2D3D, max_pairs: int = 20000, seed: int = 0):
    n = len(c.points)
    if n <= max_pairs:
        return c
    rng = np.random.default_rng(np.random.SeedSequence([seed, 13]))
    idx = np.sort(rng.choice(n, size=max_pairs, replace=False))
    return Correspondences2D3D(pixels=c.pixels[idx], points=c.points[idx])


def _kabsch(source: np.ndarray, target: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Rotation-only Kabsch on centered clouds; raises on collinear input.

    Returns (rotation, singular_values). The reflection case is folded to a
    proper rotation via the sign of det(V U^T).
    """
    h = source.T @ target  # 3x3 cross-covariance, unnormalized
    u, sv, vt = np.linalg.svd(h)
    if sv[0] <= 0 or sv[1] < _RANK_TOL * sv[0]:
        raise DegenerateGeometry(
            "correspondences are collinear (rank of cross-covariance <= 1)"
        )
    d = np.sign(np.linalg.det(vt.T @ u.T))
    r = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    sv = sv.copy()
    sv[2] *= d
    return r, sv


def umeyama(c: Correspondences3D, allow_scale: bool = False) -> PoseEstimate:
    """Closed-form least-squares alignment source -> target.

    Rigid by default. With ``allow_scale`` the optimal similarity scale is
    solved as well and reported on the estimate; the returned Pose stays a
    rigid [R|t] and the scale is diagnostic (a healthy metric pipeline
    should see scale ~ 1).
    """
    src, tgt = np.asarray(c.source, float), np.asarray(c.target, float)
    if len(src) != len(tgt):
        raise InsufficientCorrespondences("source/target lengths differ")
    n = len(src)
    if n < 3:
        raise InsufficientCorrespondences(f"need >= 3 pairs, got {n}")
    mu_s = src.mean(axis=0)
    mu_t = tgt.mean(axis=0)
    xs = src - mu_s
    xt = tgt - mu_t
    r, sv = _kabsch(xs, xt)
    if allow_scale:
        var_s = (xs * xs).sum()
        scale = float(sv.sum() / var_s)
    else:
        scale = 1.0
    t = mu_t - scale * (r @ mu_s)
    res = scale * (src @ r.T) + t - tgt
    rms = float(np.sqrt((res * res).sum(axis=1).mean()))
    return PoseEstimate(
        pose=Pose(r, t), inlier_count=n, residual_rms=rms,
        method="umeyama", scale=scale,
    )


def pose_error(est: Pose | PoseEstimate, gt: Pose) -> tuple[float, float]:
    """(rotation error degrees, translation error meters)."""
    pose = est.pose if isinstance(est, PoseEstimate) else est
    rot = float(np.degrees(rotation_angle_rad(pose.r @ gt.r.T)))
    return rot, float(np.linalg.norm(pose.t - gt.t))


# ---------------------------------------------------------------------------
# P3P + RANSAC


def _polyval(p: np.ndarray, x: float) -> float:
    return float(np.polyval(p, x))


def _p3p_solutions(
    world: np.ndarray, bearings: np.ndarray
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Minimal three-point pose solutions (camera-from-world).

    Classic law-of-cosines formulation: with ray distances s1, s2, s3 and
    u = s2/s1, v = s3/s1 the three pairwise-distance constraints reduce to
    a quartic in v. The quartic is assembled numerically per instance with
    polynomial arithmetic rather than transcribed closed-form coefficients.
    Returns up to four (R, t) candidates, ordered by ascending v root for
    determinism.
    """
    p1, p2, p3 = world
    f1, f2, f3 = bearings
    c12 = float(f1 @ f2)  # cos gamma
    c13 = float(f1 @ f3)  # cos beta
    c23 = float(f2 @ f3)  # cos alpha
    d12 = float(np.linalg.norm(p1 - p2))  # c
    d13 = float(np.linalg.norm(p1 - p3))  # b
    d23 = float(np.linalg.norm(p2 - p3))  # a
    if min(d12, d13, d23) < 1e-12 or d13 < 1e-12:
        return []

    rb = (d12 / d13) ** 2  # c^2 / b^2
    ra = (d23 / d13) ** 2  # a^2 / b^2
    # g(v): from  (1 + u^2 - 2 u c12) = rb * (1 + v^2 - 2 v c13)
    #   u^2 - 2 c12 u + g(v) = 0
    g = np.array([-rb, 2.0 * c13 * rb, 1.0 - rb])
    # h(v): from  (u^2 + v^2 - 2 u v c23) = ra * (1 + v^2 - 2 v c13)
    #   u^2 - 2 c23 v u + h(v) = 0
    h = np.array([1.0 - ra, 2.0 * c13 * ra, -ra])
    q = h - g  # u * 2*(v c23 - c12) = q(v)  after subtracting the quadratics
    lin = np.array([c23, -c12])  # v c23 - c12
    # polyadd/polysub pad the shorter coefficient vector; plain +/- would not.
    quartic = np.polyadd(
        np.polysub(np.polymul(q, q), 4.0 * c12 * np.polymul(q, lin)),
        4.0 * np.polymul(g, np.polymul(lin, lin)),
    )
    if np.max(np.abs(quartic)) < 1e-15:
        return []
    roots = np.roots(quartic)

    candidates = []
    for root in sorted(roots, key=lambda r: (r.real, r.imag)):
        if abs(root.imag) > 1e-8 * (1.0 + abs(root.real)):
            continue
        v = float(root.real)
        if v <= 0:
            continue
        denom = 1.0 + v * v - 2.0 * v * c13
        if denom <= 1e-15:
            continue
        s1 = d13 / np.sqrt(denom)
        lin_v = _polyval(lin, v)
        if abs(lin_v) > 1e-12:
            us = [_polyval(q, v) / (2.0 * lin_v)]
        else:
            disc = c12 * c12 - _polyval(g, v)
            if disc < 0:
                continue
            us = [c12 + np.sqrt(disc), c12 - np.sqrt(disc)]
        for u in us:
            if u <= 0:
                continue
            s2, s3 = u * s1, v * s1
            # Residual of the pair (2,3) constraint, scale-free.
            resid = abs(s2 * s2 + s3 * s3 - 2.0 * s2 * s3 * c23 - d23 * d23)
            if resid > 1e-6 * (d13 * d13 + s1 * s1):
                continue
            cam = np.vstack([s1 * f1, s2 * f2, s3 * f3])
            try:
                r, _ = _kabsch(world - world.mean(axis=0), cam - cam.mean(axis=0))
            except DegenerateGeometry:
                continue
            t = cam.mean(axis=0) - r @ world.mean(axis=0)
            candidates.append((r, t))
    return candidates


def _reprojection_errors(
    r: np.ndarray, t: np.ndarray, points: np.ndarray, pixels: np.ndarray,
    k: CameraIntrinsics,
) -> np.ndarray:
    cam = points @ r.T + t
    z = cam[:, 2]
    err = np.full(len(points), np.inf)
    ok = z > 1e-9
    if ok.any():
        u = k.fx * cam[ok, 0] / z[ok] + k.cx
        v = k.fy * cam[ok, 1] / z[ok] + k.cy
        err[ok] = np.hypot(u - pixels[ok, 0], v - pixels[ok, 1])
    return err


def _gauss_newton_pnp(
    r: np.ndarray, t: np.ndarray, points: np.ndarray, pixels: np.ndarray,
    k: CameraIntrinsics, max_iters: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Refine (R, t) by damped Gauss-Newton on reprojection error.

    Left-multiplicative rotation update: R <- exp(w^) R, t <- exp(w^) t + dt.
    """
    for _ in range(max_iters):
        cam = points @ r.T + t
        z = cam[:, 2]
        ok = z > 1e-9
        if ok.sum() < 3:
            break
        c = cam[ok]
        z = z[ok]
        u = k.fx * c[:, 0] / z + k.cx
        v = k.fy * c[:, 1] / z + k.cy
        res = np.column_stack([u - pixels[ok, 0], v - pixels[ok, 1]])

        inv_z = 1.0 / z
        # d(pix)/d(cam point)
        ju = np.column_stack(
            [k.fx * inv_z, np.zeros_like(z), -k.fx * c[:, 0] * inv_z * inv_z]
        )
        jv = np.column_stack(
            [np.zeros_like(z), k.fy * inv_z, -k.fy * c[:, 1] * inv_z * inv_z]
        )
        # d(cam point)/d(w) = -[cam]_x ; d(cam point)/d(dt) = I
        def cross_rows(j):
            jw = np.empty_like(c)
            jw[:, 0] = j[:, 1] * c[:, 2] - j[:, 2] * c[:, 1]
            jw[:, 1] = j[:, 2] * c[:, 0] - j[:, 0] * c[:, 2]
            jw[:, 2] = j[:, 0] * c[:, 1] - j[:, 1] * c[:, 0]
            return -jw

        jac = np.empty((2 * len(c), 6))
        jac[0::2, :3] = cross_rows(ju)
        jac[0::2, 3:] = ju
        jac[1::2, :3] = cross_rows(jv)
        jac[1::2, 3:] = jv
        rhs = res.reshape(-1)

        jtj = jac.T @ jac
        jtj[np.diag_indices(6)] += 1e-12 * max(1.0, np.trace(jtj) / 6.0)
        try:
            step = np.linalg.solve(jtj, -(jac.T @ rhs))
        except np.linalg.LinAlgError:
            break
        w, dt = step[:3], step[3:]
        angle = np.linalg.norm(w)
        if angle > 0:
            dr = rotation_from_axis_angle(w, angle)
            r = dr @ r
            t = dr @ t + dt
        else:
            t = t + dt
        if angle + np.linalg.norm(dt) < 1e-14:
            break
    return r, t


def ransac_pnp(
    c: Correspondences2D3D, k: CameraIntrinsics, cfg: RansacConfig | None = None
) -> PoseEstimate:
    """Deterministic RANSAC over P3P hypotheses, Gauss-Newton refined.

    Returns the standard PnP camera-from-world pose: it maps points in the
    frame of ``c.points`` into the camera that observed ``c.pixels``.

    The full hypothesis index list is drawn from cfg.seed before scoring,
    the best hypothesis is the one with the most inliers (reprojection
    error < cfg.inlier_px), ties broken by lowest hypothesis index, and the
    winner is refined on its inlier set. The reported inlier count and
    pixel RMS are recomputed at the refined pose.
    """
    cfg = cfg or RansacConfig()
    points = np.asarray(c.points, dtype=np.float64)
    pixels = np.asarray(c.pixels, dtype=np.float64)
    n = len(points)
    if n < 4:
        raise InsufficientCorrespondences(f"PnP needs >= 4 pairs, got {n}")

    # Bearing vectors for the minimal solver.
    rays = np.column_stack(
        [
            (pixels[:, 0] - k.cx) / k.fx,
            (pixels[:, 1] - k.cy) / k.fy,
            np.ones(n),
        ]
    )
    rays /= np.linalg.norm(rays, axis=1)[:, None]

    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 17]))
    hypotheses = [rng.choice(n, size=3, replace=False) for _ in range(cfg.iterations)]

    best = None  # (count, hypothesis_index, solution_index, r, t)
    for h_idx, sel in enumerate(hypotheses):
        for s_idx, (r, t) in enumerate(_p3p_solutions(points[sel], rays[sel])):
            err = _reprojection_errors(r, t, points, pixels, k)
            count = int(np.count_nonzero(err < cfg.inlier_px))
            if best is None or count > best[0]:
                best = (count, h_idx, s_idx, r, t)
    if best is None or best[0] < cfg.min_inliers:
        got = 0 if best is None else best[0]
        raise NoConsensus(
            f"best hypothesis has {got} inliers, below min_inliers="
            f"{cfg.min_inliers}"
        )

    count, _, _, r, t = best
    err = _reprojection_errors(r, t, points, pixels, k)
    inliers = err < cfg.inlier_px
    if cfg.refine:
        r, t = _gauss_newton_pnp(
            r, t, points[inliers], pixels[inliers], k, cfg.max_refine_iters
        )
        err = _reprojection_errors(r, t, points, pixels, k)
        inliers = err < cfg.inlier_px
    final_count = int(np.count_nonzero(inliers))
    rms = (
        float(np.sqrt(np.mean(err[inliers] ** 2))) if final_count else float("inf")
    )
    return PoseEstimate(
        pose=Pose(r, t), inlier_count=final_count, residual_rms=rms,
        method="ransac_pnp",
    )


def solve_pair(
    pred: RocMap,
    query: SceneFrame,
    s: ScaleTransform,
    solver: str = "umeyama",
    ransac: RansacConfig | None = None,
    allow_scale: bool = False,
    max_pairs: int = 20000,
    subsample_seed: int = 0,
) -> PoseEstimate:
    """Extract correspondences from a predicted ROC map and run one solver.

    Whichever solver runs, the returned pose maps query-camera coordinates
    into the reference camera frame (same convention as relative_pose).
    """
    if solver == "umeyama":
        c3 = subsample_3d(
            extract_correspondences_3d(pred, query, s), max_pairs, subsample_seed
        )
        return umeyama(c3, allow_scale=allow_scale)
    if solver == "ransac_pnp":
        c2 = subsample_2d3d(
            extract_correspondences_2d3d(pred, query, s), max_pairs, subsample_seed
        )
        est = ransac_pnp(c2, query.intrinsics, ransac)
        # PnP solves camera-from-world with the reference frame as "world"
        # (reference coords -> query pixels); the pair convention is
        # query -> reference, so invert. Inlier count and pixel RMS are
        # pose-direction-free and carry over unchanged.
        return replace(est, pose=invert(est.pose))
    raise InsufficientCorrespondences(f"unknown solver {solver!r}")


@dataclass
class TimedEstimate:
    estimate: PoseEstimate | None
    seconds: float
    error: str | None = None


def timed(fn, *args, **kwargs) -> TimedEstimate:
    """Run a solver call under a wall-clock timer, catching solver errors."""
    start = time.perf_counter()
    try:
        est = fn(*args, **kwargs)
        return TimedEstimate(est, time.perf_counter() - start)
    except (InsufficientCorrespondences, DegenerateGeometry, NoConsensus) as e:
        return TimedEstimate(None, time.perf_counter() - start, error=str(e))
