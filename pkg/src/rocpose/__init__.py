"""rocpose: reference-object-coordinate pose estimation toolkit."""

__version__ = "0.1.0"

from .errors import (
    DegenerateCloud,
    DegenerateGeometry,
    FormatError,
    InsufficientCorrespondences,
    NoConsensus,
    RocPoseError,
)
from .geometry import (
    CameraIntrinsics,
    Pose,
    backproject,
    compose,
    invert,
    project,
    random_rotation,
    relative_pose,
    rotation_angle_rad,
    rotation_from_axis_angle,
)
from .metrics import (
    MetricReport,
    ObjectModel,
    add_01d_recall,
    add_distance,
    adds_distance,
    ar_partial,
    auc,
    compute_report,
    deg_cm_recall,
    mspd,
    mspd_recall,
    mssd,
    mssd_recall,
    pose_errors_deg_m,
    robustness_std,
)
from .multiview import (
    ReferenceSet,
    VoteResult,
    best_view_oracle,
    candidate_world_pose,
    lift_to_world,
    miou,
    reproject_mask,
    vote,
)
from .predictor import (
    CorruptionConfig,
    attention_backward,
    corrupt_roc,
    cross_attention,
    oracle_predict,
)
from .roc import (
    RocImage,
    RocMap,
    ScaleTransform,
    apply_scale,
    build_query_roc,
    build_reference_roc,
    decode_roc_image,
    encode_roc_image,
    fit_scale,
    invert_scale,
    load_roc_image,
    roc_loss,
    save_roc_image,
    smooth_l1,
)
from .scenes import (
    PairSpec,
    SceneBundle,
    SceneFrame,
    default_intrinsics,
    load_bundle,
    make_object,
    make_pair,
    make_sequence,
    occlude_frame,
    render_frame,
    save_bundle,
)
from .solvers import (
    Correspondences2D3D,
    Correspondences3D,
    PoseEstimate,
    RansacConfig,
    extract_correspondences_2d3d,
    extract_correspondences_3d,
    pose_error,
    ransac_pnp,
    solve_pair,
    umeyama,
)
from .tracking import TrackRun, summarize_track, track_sequence

__all__ = [name for name in dir() if not name.startswith("_")]
