"""Walk the metric suite on a controlled pose-error sweep.

Perturbs a ground-truth pose by growing rotation steps around the z axis
of a 4-fold symmetric box and reports ADD, ADD-S, MSSD, and MSPD at each
step, then aggregates a full report with AUC and recalls. The symmetry
rows make the difference between matched-vertex and symmetry-aware
metrics obvious: a quarter turn is a large ADD error but a zero MSSD one.
"""

import numpy as np

from rocpose import (
    Pose,
    add_distance,
    adds_distance,
    compute_report,
    default_intrinsics,
    make_object,
    mspd,
    mssd,
    rotation_from_axis_angle,
)


def main() -> None:
    model = make_object("box", seed=0)
    k = default_intrinsics(192, 192, 240.0)
    gt = Pose(np.eye(3), np.array([0.0, 0.0, 0.6]))

    print(f"box diameter {model.diameter:.4f} m, "
          f"{len(model.symmetries)} discrete symmetries\n")
    header = f"{'rotation':>10} {'ADD m':>10} {'ADD-S m':>10} " \
             f"{'MSSD m':>10} {'MSPD px':>10}"
    print(header)
    print("-" * len(header))

    est_poses = []
    for deg in (0.0, 2.0, 5.0, 10.0, 45.0, 90.0):
        delta = rotation_from_axis_angle((0.0, 0.0, 1.0), np.radians(deg))
        est = Pose(delta @ gt.r, gt.t)
        est_poses.append(est)
        print(f"{deg:>9.0f}d "
              f"{add_distance(model, est, gt):>10.5f} "
              f"{adds_distance(model, est, gt):>10.5f} "
              f"{mssd(model, est, gt):>10.5f} "
              f"{mspd(model, est, gt, k):>10.3f}")
    print("\nnote the 90-degree row: ADD sees a gross error, the "
          "symmetry-aware MSSD/MSPD see a perfect pose.\n")

    report = compute_report(
        model, [gt] * len(est_poses), est_poses, k=k
    )
    for key in ("add_auc", "adds_auc", "add_01d_recall",
                "recall_5deg_5cm", "mssd_recall", "mspd_recall",
                "ar_partial"):
        print(f"{key:>18}: {report.aggregates[key]:.3f}")


if __name__ == "__main__":
    main()
