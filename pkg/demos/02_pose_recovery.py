"""Recover a relative pose from ROC correspondences, clean and corrupted.

Three passes over the same rendered pair:
  1. ground-truth ROC map, rigid alignment  -> machine-precision recovery;
  2. noisy + quantized map, rigid alignment -> graceful degradation;
  3. the same noisy map through RANSAC+PnP  -> the 2-D/3-D alternative.
"""

import numpy as np

from rocpose import (
    CorruptionConfig,
    PairSpec,
    RansacConfig,
    build_reference_roc,
    make_object,
    make_pair,
    oracle_predict,
    pose_error,
    solve_pair,
)


def main() -> None:
    model = make_object("blob", seed=7)
    reference, query, gt_relative = make_pair(
        model, PairSpec(rotation_gap_deg=(20.0, 20.0),
                        translation_gap_m=(0.05, 0.05), seed=7)
    )
    _, s = build_reference_roc(reference)
    print(f"ground-truth gap: 20 degrees rotation, 5 cm baseline\n")

    for label, cfg, solver, ransac in (
        ("exact oracle + rigid alignment",
         CorruptionConfig(seed=1), "umeyama", None),
        ("noisy oracle + rigid alignment",
         CorruptionConfig(coord_noise_sigma=0.01, quantize_8bit=True, seed=1),
         "umeyama", None),
        ("noisy oracle + RANSAC PnP",
         CorruptionConfig(coord_noise_sigma=0.01, quantize_8bit=True, seed=1),
         "ransac_pnp", RansacConfig(iterations=256, seed=1)),
    ):
        pred = oracle_predict(query, gt_relative, s, cfg)
        est = solve_pair(pred, query, s, solver=solver, ransac=ransac,
                         subsample_seed=1)
        rot_deg, trans_m = pose_error(est, gt_relative)
        print(f"{label}:")
        print(f"  method={est.method} inliers={est.inlier_count} "
              f"residual_rms={est.residual_rms:.3e}")
        print(f"  rotation error {rot_deg:.6f} deg, "
              f"translation error {trans_m * 1000:.4f} mm\n")

    # The returned pose maps query-camera coordinates into the reference
    # camera frame; composing with the inverse ground truth shows identity.
    pred = oracle_predict(query, gt_relative, s, CorruptionConfig())
    est = solve_pair(pred, query, s)
    residual = est.pose.matrix @ np.linalg.inv(gt_relative.matrix)
    print("estimate o inverse(ground truth), should be identity:")
    with np.printoptions(precision=3, suppress=True):
        print(residual)


if __name__ == "__main__":
    main()
