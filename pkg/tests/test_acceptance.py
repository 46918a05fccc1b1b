"""Release gate: ten numbered end-to-end checks with stated tolerances.

Each test prints exactly one line

    CRITERION <n>: PASS|FAIL - <measured values>

through the capture-disabled channel, so any pytest run (quiet or
verbose) shows the measured margins next to the per-test verdicts. Every
check also enforces its own wall-clock budget.
"""

from __future__ import annotations

import time

import numpy as np
import pytest

from rocpose import (
    CameraIntrinsics,
    CorruptionConfig,
    ObjectModel,
    PairSpec,
    Pose,
    PoseEstimate,
    RansacConfig,
    ReferenceSet,
    adds_distance,
    add_distance,
    apply_scale,
    attention_backward,
    auc,
    backproject,
    best_view_oracle,
    compose,
    cross_attention,
    fit_scale,
    make_object,
    make_pair,
    make_sequence,
    oracle_predict,
    pose_error,
    relative_pose,
    smooth_l1,
    solve_pair,
    summarize_track,
    track_sequence,
    vote,
)
from rocpose.cli import main as cli_main
from rocpose.geometry import random_rotation, rotation_angle_rad, rotation_from_axis_angle
from rocpose.roc import build_query_roc, build_reference_roc
from rocpose.scenes import SceneFrame, default_intrinsics


@pytest.fixture()
def report(capfd):
    """One live pass/fail line per criterion, visible despite capture."""

    def _go(k: int, ok: bool, detail: str) -> str:
        line = f"CRITERION {k}: {'PASS' if ok else 'FAIL'} - {detail}"
        with capfd.disabled():
            print(line, flush=True)
        return line

    return _go


def _small_k(side: int = 24, f: float = 30.0) -> CameraIntrinsics:
    return CameraIntrinsics(
        fx=f, fy=f, cx=(side - 1) / 2.0, cy=(side - 1) / 2.0,
        width=side, height=side,
    )


@pytest.fixture(scope="module")
def box_model():
    return make_object("box", seed=0)


class TestAcceptance:
    def test_criterion_01_normalization_bound(self, report):
        start = time.perf_counter()
        bound = 0.5 / 1.1 + 1e-9
        worst = 0.0
        for seed in range(100):
            rng = np.random.default_rng(np.random.SeedSequence([seed]))
            n = int(rng.integers(4, 3000))
            scale = 10.0 ** rng.uniform(-3, 2)
            offset = rng.normal(0.0, 100.0, size=3)
            cloud = rng.normal(size=(n, 3)) * scale + offset
            mapped = apply_scale(fit_scale(cloud), cloud)
            worst = max(worst, float(np.abs(mapped).max()))
        elapsed = time.perf_counter() - start
        ok = worst <= bound and elapsed < 1.0
        detail = (
            f"100 clouds, max |component| {worst:.15f} <= {bound:.15f}, "
            f"{elapsed:.2f}s < 1s"
        )
        report(1, ok, detail)
        assert ok, detail

    def test_criterion_02_exact_pose_recovery(self, report):
        start = time.perf_counter()
        k = _small_k()
        worst_rot = 0.0
        worst_trans = 0.0
        rng = np.random.default_rng(np.random.SeedSequence([202]))
        for _ in range(200):
            depth = rng.uniform(0.5, 2.0, size=(24, 24))
            mask = (rng.uniform(size=(24, 24)) < 0.6).astype(np.uint8)
            mask[10:14, 10:14] = 1  # guarantee enough pixels
            frame = SceneFrame(
                depth=depth * mask, mask=mask, intrinsics=k,
                world_pose=Pose.identity(),
            )
            gt = Pose(random_rotation(rng), rng.normal(size=3))
            pts, _ = backproject(frame.depth, k, frame.mask)
            s = fit_scale(gt.apply(pts))
            pred = build_query_roc(frame, gt, s)
            est = solve_pair(pred, frame, s, solver="umeyama")
            worst_rot = max(
                worst_rot, rotation_angle_rad(est.pose.r @ gt.r.T)
            )
            worst_trans = max(
                worst_trans, float(np.linalg.norm(est.pose.t - gt.t))
            )
        elapsed = time.perf_counter() - start
        ok = worst_rot < 1e-9 and worst_trans < 1e-11 and elapsed < 5.0
        detail = (
            f"200 pairs, max rot {worst_rot:.3e} rad < 1e-9, "
            f"max trans {worst_trans:.3e} m < 1e-11, {elapsed:.2f}s < 5s"
        )
        report(2, ok, detail)
        assert ok, detail

    def test_criterion_03_smooth_l1_knee(self, report):
        start = time.perf_counter()
        beta = 0.1
        at_knee = float(smooth_l1(np.array([beta]), beta)[0])
        quadratic = 0.5 * beta * beta / beta  # approaching from below
        linear = beta - 0.5 * beta  # approaching from above
        h = 1e-7
        slope_below = (
            float(smooth_l1(np.array([beta]), beta)[0])
            - float(smooth_l1(np.array([beta - h]), beta)[0])
        ) / h
        slope_above = (
            float(smooth_l1(np.array([beta + h]), beta)[0])
            - float(smooth_l1(np.array([beta]), beta)[0])
        ) / h
        elapsed = time.perf_counter() - start
        ok = (
            at_knee == 0.05
            and abs(quadratic - 0.05) < 1e-15
            and linear == 0.05
            and abs(slope_below - slope_above) < 1e-6
            and elapsed < 1.0
        )
        detail = (
            f"value at knee {at_knee} (quadratic branch {quadratic!r}, "
            f"linear branch {linear!r}), slope gap "
            f"{abs(slope_below - slope_above):.3e} < 1e-6, {elapsed:.3f}s"
        )
        report(3, ok, detail)
        assert ok, detail

    def test_criterion_04_attention_gradcheck(self, report):
        start = time.perf_counter()
        worst = 0.0
        h = 1e-6
        for seed in range(20):
            rng = np.random.default_rng(np.random.SeedSequence([seed, 4]))
            nq, na = int(rng.integers(2, 5)), int(rng.integers(2, 6))
            dq, da = int(rng.integers(2, 5)), int(rng.integers(2, 5))
            dk, dv = int(rng.integers(2, 4)), int(rng.integers(2, 4))
            params = {
                "fq": rng.normal(size=(nq, dq)),
                "fa": rng.normal(size=(na, da)),
                "wq": rng.normal(size=(dq, dk)),
                "wk": rng.normal(size=(da, dk)),
                "wv": rng.normal(size=(da, dv)),
            }
            grad_out = rng.normal(size=(nq, dv))
            analytic = attention_backward(**params, grad_out=grad_out)
            for name, base in params.items():
                numeric = np.zeros_like(base)
                for idx in np.ndindex(base.shape):
                    for sign in (+1.0, -1.0):
                        p = dict(params)
                        bumped = base.copy()
                        bumped[idx] += sign * h
                        p[name] = bumped
                        out, _ = cross_attention(**p)
                        numeric[idx] += sign * float((out * grad_out).sum())
                numeric /= 2.0 * h
                rel = np.abs(analytic[name] - numeric) / np.maximum(
                    np.abs(numeric), 1.0
                )
                worst = max(worst, float(rel.max()))
        elapsed = time.perf_counter() - start
        ok = worst < 1e-4 and elapsed < 2.0
        detail = (
            f"20 instances x 5 gradients, max relative error "
            f"{worst:.3e} < 1e-4, {elapsed:.2f}s < 2s"
        )
        report(4, ok, detail)
        assert ok, detail

    def test_criterion_05_metric_oracles(self, report):
        start = time.perf_counter()
        rng = np.random.default_rng(np.random.SeedSequence([505]))

        # ADD-S never exceeds ADD: closest-point matching can only shrink
        # per-vertex distances relative to index matching.
        adds_ok = True
        for _ in range(500):
            model = ObjectModel(
                vertices=rng.normal(size=(rng.integers(4, 60), 3)) * 0.1,
                object_id="fuzz",
            )
            est = Pose(random_rotation(rng), rng.normal(0.0, 0.1, size=3))
            gt = Pose(random_rotation(rng), rng.normal(0.0, 0.1, size=3))
            a = add_distance(model, est, gt)
            s = adds_distance(model, est, gt)
            if s > a + 1e-12:
                adds_ok = False
                break

        # Exact AUC against a stratified Monte-Carlo integration of the
        # accuracy curve with 1e5 threshold samples.
        t_max = 0.10
        distances = np.concatenate([
            rng.uniform(0.0, 0.15, size=280),
            [np.inf] * 15,
            rng.uniform(0.0, 0.02, size=5),
        ])
        exact = auc(distances, t_max)
        n_mc = 100_000
        thresholds = (np.arange(n_mc) + rng.uniform(size=n_mc)) / n_mc * t_max
        finite = distances[np.isfinite(distances)]
        hits = np.searchsorted(np.sort(finite), thresholds, side="left")
        mc = float(np.mean(hits / len(distances))) * 100.0
        mc_gap = abs(exact - mc)

        half = auc(np.array([t_max / 2.0]), t_max)
        elapsed = time.perf_counter() - start
        ok = (
            adds_ok and mc_gap < 0.1 and half == 50.0 and elapsed < 10.0
        )
        detail = (
            f"ADD-S <= ADD on 500 triples: {adds_ok}; "
            f"|exact {exact:.4f} - MC {mc:.4f}| = {mc_gap:.4f} < 0.1; "
            f"auc([T/2]) == {half}; {elapsed:.2f}s < 10s"
        )
        report(5, ok, detail)
        assert ok, detail

    def test_criterion_06_multiview_vote(self, report, box_model):
        start = time.perf_counter()
        k = default_intrinsics(96, 96, 120.0)
        hits = 0
        oracle_ok = True
        trials = 50
        for trial in range(trials):
            rng = np.random.default_rng(np.random.SeedSequence([trial, 6]))
            bundle = make_sequence(
                box_model, 5,
                PairSpec(rotation_gap_deg=(20.0, 30.0),
                         translation_gap_m=(0.05, 0.10),
                         seed=1000 + trial, intrinsics=k),
            )
            refs, query = bundle.frames[:4], bundle.frames[4]
            exact_idx = trial % 4
            estimates = []
            for i, ref in enumerate(refs):
                exact = relative_pose(ref.world_pose, query.world_pose)
                if i == exact_idx:
                    pose = exact
                else:
                    angle = rng.uniform(np.radians(20.0), np.radians(35.0))
                    delta = Pose(
                        rotation_from_axis_angle(rng.normal(size=3), angle),
                        np.zeros(3),
                    )
                    pose = compose(delta, exact)
                estimates.append(PoseEstimate(
                    pose=pose, inlier_count=1, residual_rms=0.0,
                    method="synthetic",
                ))
            refset = ReferenceSet(frames=refs, estimates=estimates)
            result = vote(query, refset)
            if result.chosen_index == exact_idx:
                hits += 1
            _, oracle_pose = best_view_oracle(
                query, refset, query.world_pose, box_model
            )
            add_vote = add_distance(
                box_model, result.world_pose, query.world_pose
            )
            add_oracle = add_distance(
                box_model, oracle_pose, query.world_pose
            )
            if add_oracle > add_vote + 1e-12:
                oracle_ok = False
        elapsed = time.perf_counter() - start
        ok = hits == trials and oracle_ok and elapsed < 30.0
        detail = (
            f"exact candidate chosen {hits}/{trials} (need {trials}), "
            f"oracle ADD <= voted ADD: {oracle_ok}, {elapsed:.1f}s < 30s"
        )
        report(6, ok, detail)
        assert ok, detail

    def test_criterion_07_solver_noise_trend(self, report, box_model):
        start = time.perf_counter()
        k = default_intrinsics(96, 96, 120.0)
        umeyama_trans = []
        pnp_trans = []
        for i in range(200):
            spec = PairSpec(
                rotation_gap_deg=(10.0, 35.0),
                translation_gap_m=(0.02, 0.08),
                depth_noise_m=0.005,
                seed=2000 + i,
                intrinsics=k,
            )
            ref, query, rel = make_pair(box_model, spec)
            _, s = build_reference_roc(ref)
            cfg = CorruptionConfig(coord_noise_sigma=0.01, seed=2000 + i)
            pred = oracle_predict(query, rel, s, cfg)
            est_u = solve_pair(
                pred, query, s, solver="umeyama",
                max_pairs=1200, subsample_seed=cfg.seed,
            )
            est_p = solve_pair(
                pred, query, s, solver="ransac_pnp",
                ransac=RansacConfig(iterations=128, seed=cfg.seed),
                max_pairs=1200, subsample_seed=cfg.seed,
            )
            umeyama_trans.append(pose_error(est_u, rel)[1])
            pnp_trans.append(pose_error(est_p, rel)[1])
        med_u = float(np.median(umeyama_trans))
        med_p = float(np.median(pnp_trans))
        elapsed = time.perf_counter() - start
        ok = med_p > med_u and elapsed < 60.0
        detail = (
            f"200 noisy pairs: median translation error "
            f"2D-3D solver {med_p * 1000:.3f} mm > depth solver "
            f"{med_u * 1000:.3f} mm, {elapsed:.1f}s < 60s"
        )
        report(7, ok, detail)
        assert ok, detail

    def test_criterion_08_occlusion_robustness(self, report, box_model):
        start = time.perf_counter()
        k = default_intrinsics(96, 96, 120.0)
        rot_occluded = []
        rot_clean = []
        misses = 0
        for i in range(100):
            errors = {}
            for occlusion in (0.4, 0.0):
                spec = PairSpec(
                    rotation_gap_deg=(10.0, 30.0),
                    translation_gap_m=(0.02, 0.06),
                    occlusion=occlusion,
                    seed=3000 + i,
                    intrinsics=k,
                )
                ref, query, rel = make_pair(box_model, spec)
                _, s = build_reference_roc(ref)
                cfg = CorruptionConfig(coord_noise_sigma=0.005, seed=3000 + i)
                pred = oracle_predict(query, rel, s, cfg)
                try:
                    est = solve_pair(
                        pred, query, s, solver="umeyama",
                        max_pairs=20000, subsample_seed=cfg.seed,
                    )
                except Exception:
                    misses += 1
                    continue
                errors[occlusion] = pose_error(est, rel)[0]
            if 0.4 in errors:
                rot_occluded.append(errors[0.4])
            if 0.0 in errors:
                rot_clean.append(errors[0.0])
        med_occ = float(np.median(rot_occluded)) if rot_occluded else np.inf
        med_clean = float(np.median(rot_clean)) if rot_clean else np.inf
        ratio = med_occ / med_clean if med_clean > 0 else np.inf
        elapsed = time.perf_counter() - start
        ok = misses == 0 and ratio < 2.0 and elapsed < 60.0
        detail = (
            f"100 pairs at 40% occlusion: {misses} misses (need 0), "
            f"median rotation error ratio {ratio:.3f}x < 2x "
            f"({med_occ * 60:.4f} vs {med_clean * 60:.4f} arcmin), "
            f"{elapsed:.1f}s < 60s"
        )
        report(8, ok, detail)
        assert ok, detail

    def test_criterion_09_cli_determinism(self, report, tmp_path):
        start = time.perf_counter()

        def run(*argv):
            assert cli_main([str(a) for a in argv]) == 0

        bundle = tmp_path / "bundle"
        gen = ("generate", "--out", bundle, "--kind", "box", "--frames", "4",
               "--image-size", "96", "--focal", "120", "--seed", "5",
               "--no-timing")
        run(*gen)
        snapshot = {
            p.name: p.read_bytes() for p in sorted(bundle.iterdir())
        }
        run(*gen)  # identical config and seed, same output directory
        regen_same = all(
            (bundle / name).read_bytes() == blob
            for name, blob in snapshot.items()
        )

        track = ("track", "--bundle", bundle, "--sigma", "0.005",
                 "--dropout", "0.1", "--seed", "7", "--no-timing")
        run(*track, "--jobs", "1", "--out", tmp_path / "t1.json")
        run(*track, "--jobs", "2", "--out", tmp_path / "t2.json")
        run(*track, "--jobs", "1", "--out", tmp_path / "t3.json")
        t1 = (tmp_path / "t1.json").read_bytes()
        jobs_same = t1 == (tmp_path / "t2.json").read_bytes()
        rerun_same = t1 == (tmp_path / "t3.json").read_bytes()

        est = ("estimate", "--bundle", bundle, "--sigma", "0.01",
               "--quantize", "--seed", "3", "--no-timing")
        run(*est, "--out", tmp_path / "e1.json")
        run(*est, "--out", tmp_path / "e2.json")
        est_same = (tmp_path / "e1.json").read_bytes() == (
            tmp_path / "e2.json"
        ).read_bytes()

        votecmd = ("vote", "--bundle", bundle, "--sigma", "0.005",
                   "--seed", "2", "--with-oracle", "--no-timing")
        run(*votecmd, "--out", tmp_path / "v1.json")
        run(*votecmd, "--out", tmp_path / "v2.json")
        vote_same = (tmp_path / "v1.json").read_bytes() == (
            tmp_path / "v2.json"
        ).read_bytes()

        elapsed = time.perf_counter() - start
        ok = (
            regen_same and jobs_same and rerun_same and est_same
            and vote_same and elapsed < 30.0
        )
        detail = (
            f"byte-identical reruns: generate {regen_same}, "
            f"track jobs 1 vs 2 {jobs_same}, track rerun {rerun_same}, "
            f"estimate {est_same}, vote {vote_same}, {elapsed:.1f}s < 30s"
        )
        report(9, ok, detail)
        assert ok, detail

    def test_criterion_10_tracking_protocol(self, report, box_model):
        start = time.perf_counter()
        bundle = make_sequence(
            box_model, 30,
            PairSpec(rotation_gap_deg=(12.0, 12.0),
                     translation_gap_m=(0.02, 0.05), seed=77,
                     intrinsics=default_intrinsics(96, 96, 120.0)),
        )
        clean = summarize_track(track_sequence(bundle), bundle).aggregates
        clean_ok = (
            abs(clean["add_auc"] - 100.0) < 1e-6
            and abs(clean["adds_auc"] - 100.0) < 1e-6
            and clean["miss_rate_percent"] == 0.0
        )
        ordering_ok = True
        pairs = []
        for seed in (1, 2, 3):
            cfg = CorruptionConfig(
                pixel_dropout=0.2, coord_noise_sigma=0.005, seed=seed
            )
            agg = summarize_track(
                track_sequence(bundle, corruption=cfg), bundle
            ).aggregates
            pairs.append((agg["adds_auc"], agg["add_auc"]))
            if agg["adds_auc"] < agg["add_auc"] - 1e-12:
                ordering_ok = False
        elapsed = time.perf_counter() - start
        ok = clean_ok and ordering_ok and elapsed < 30.0
        corrupted = ", ".join(
            f"ADD-S {s:.3f} >= ADD {a:.3f}" for s, a in pairs
        )
        detail = (
            f"clean 30-frame orbit: ADD AUC {clean['add_auc']:.6f}, "
            f"ADD-S AUC {clean['adds_auc']:.6f} (both need 100); "
            f"corrupted runs: {corrupted}; {elapsed:.1f}s < 30s"
        )
        report(10, ok, detail)
        assert ok, detail
