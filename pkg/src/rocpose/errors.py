"""Exception types shared across the toolkit."""


class RocPoseError(Exception):
    """Base class for toolkit errors."""


class DegenerateCloud(RocPoseError):
    """Point cloud has no usable extent (empty, or zero spread on every axis)."""


class InsufficientCorrespondences(RocPoseError):
    """Too few valid pixel pairs to run a solver."""


class DegenerateGeometry(RocPoseError):
    """Correspondence geometry is rank-deficient (e.g. collinear points)."""


class NoConsensus(RocPoseError):
    """RANSAC failed to find a hypothesis with enough inliers."""


class FormatError(RocPoseError):
    """Malformed or truncated file content."""
