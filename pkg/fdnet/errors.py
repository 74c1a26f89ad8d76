"""
Exception types raised by the fdnet library.

All errors derive from ValueError so callers that already guard configuration
and data loading with ``except ValueError`` keep working.
"""


class FdnetError(ValueError):
    """Base class for library errors."""


class CameraModelError(FdnetError):
    """Invalid camera parameters or a point/pixel the model cannot handle."""


class IntrinsicsError(CameraModelError):
    """Malformed or inconsistent intrinsics description."""


class PoseError(FdnetError):
    """Invalid pose or odometry input."""


class DegenerateBaselineError(PoseError):
    """Translation too small to fix the metric scale."""


class WarpError(FdnetError):
    """A warp was requested where it has no valid mapping."""


class NoSupervisedPixelsError(FdnetError):
    """Every pixel was removed by the ego mask or the automask."""


class FormatError(FdnetError):
    """Malformed file contents (PFM, PNM, JSON documents)."""


class ConfigError(FdnetError):
    """Invalid configuration file."""


class BundleError(FdnetError):
    """Inconsistent snippet bundle directory."""


class ImageError(FdnetError):
    """Image or distance array with the wrong shape or out-of-range samples."""
