"""Python bindings for the epimatch C++ library."""

from ._core import (
    CameraIntrinsics,
    EpimatchError,
    MatcherParams,
    __version__,
    estimate_relative_pose,
    evaluate,
    fundamental_from_pose,
    gradcheck,
    pose_auc,
    predict_matches,
    symmetric_epipolar_distance_sq,
    synth_pair,
)

__all__ = [
    "CameraIntrinsics",
    "EpimatchError",
    "MatcherParams",
    "__version__",
    "estimate_relative_pose",
    "evaluate",
    "fundamental_from_pose",
    "gradcheck",
    "pose_auc",
    "predict_matches",
    "symmetric_epipolar_distance_sq",
    "synth_pair",
]
