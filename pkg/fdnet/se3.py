"""
Rigid-body poses and the odometry-based scale normalization.

A Pose maps points X to R X + t. Frame poses of a snippet are stored as
world-from-camera transforms with the first frame as the world, so the
relative transform T_{i->j} that carries frame-i points into frame j is
invert(P_j) o P_i.

Rotations use intrinsic X-Y-Z Euler angles (roll, pitch, yaw).
"""

import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Sequence, Union

import numpy as np
from scipy.spatial.transform import Rotation

from fdnet.errors import DegenerateBaselineError, FormatError, PoseError

logger = logging.getLogger(__name__)

EULER_ORDER = "XYZ"

# Translations shorter than this cannot be rescaled (meters).
MIN_BASELINE = 1e-6


@dataclass(frozen=True, eq=False)
class Pose:
    """SE(3) transform X -> R X + t, translation in meters."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.array(self.rotation, dtype=float)
        t = np.array(self.translation, dtype=float).reshape(3)
        if R.shape != (3, 3):
            raise PoseError(f"Rotation must be 3x3, got shape {R.shape}")
        if not (np.all(np.isfinite(R)) and np.all(np.isfinite(t))):
            raise PoseError("Pose contains non-finite values")
        if not np.allclose(R @ R.T, np.eye(3), atol=1e-9) or np.linalg.det(R) < 0:
            raise PoseError("Rotation matrix is not orthonormal with det +1")
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls()

    @classmethod
    def from_euler(cls, roll: float, pitch: float, yaw: float,
                   translation: Sequence[float] = (0.0, 0.0, 0.0)) -> "Pose":
        R = Rotation.from_euler(EULER_ORDER, [roll, pitch, yaw]).as_matrix()
        return cls(rotation=R, translation=np.asarray(translation, dtype=float))

    @classmethod
    def from_matrix(cls, matrix: np.ndarray) -> "Pose":
        """Build from a 4x4 homogeneous matrix."""
        matrix = np.asarray(matrix, dtype=float)
        if matrix.shape != (4, 4):
            raise PoseError(f"Homogeneous pose must be 4x4, got shape {matrix.shape}")
        return cls(rotation=matrix[:3, :3], translation=matrix[:3, 3])

    @property
    def euler(self) -> np.ndarray:
        """(roll, pitch, yaw) in radians."""
        return Rotation.from_matrix(self.rotation).as_euler(EULER_ORDER)

    def as_matrix(self) -> np.ndarray:
        out = np.eye(4)
        out[:3, :3] = self.rotation
        out[:3, 3] = self.translation
        return out

    def is_identity(self) -> bool:
        """Exact identity check (no tolerance)."""
        return bool(np.array_equal(self.rotation, np.eye(3)) and not np.any(self.translation))

    @property
    def translation_norm(self) -> float:
        return float(np.linalg.norm(self.translation))


@dataclass(frozen=True)
class OdometrySample:
    """Vehicle speed (m/s) at a timestamp (s)."""

    v: float
    timestamp: float

    def __post_init__(self):
        if not (math.isfinite(self.v) and math.isfinite(self.timestamp)):
            raise PoseError(f"Non-finite odometry sample: v={self.v}, t={self.timestamp}")


def compose(P1: Pose, P2: Pose) -> Pose:
    """P1 o P2: apply P2 first, then P1."""
    return Pose(rotation=P1.rotation @ P2.rotation,
                translation=P1.rotation @ P2.translation + P1.translation)


def invert(P: Pose) -> Pose:
    R_t = P.rotation.T
    return Pose(rotation=R_t, translation=-R_t @ P.translation)


def transform_points(P: Pose, cloud: np.ndarray) -> np.ndarray:
    """
    Apply X' = R X + t to a point or an array of points (..., 3).
    """
    cloud = np.asarray(cloud, dtype=float)
    if cloud.shape[-1] != 3:
        raise PoseError(f"Expected points with 3 coordinates, got shape {cloud.shape}")
    return cloud @ P.rotation.T + P.translation


def relative_pose(frame_poses: Sequence[Pose], i: int, j: int) -> Pose:
    """T_{i->j} carrying frame-i camera points into frame j."""
    return compose(invert(frame_poses[j]), frame_poses[i])


def displacement_from_odometry(s_t: OdometrySample, s_t2: OdometrySample) -> float:
    """
    Distance travelled between two samples by trapezoidal integration.

    Returns:
        float: 0.5 * (v_t + v_t') * |t' - t| in meters

    Raises:
        PoseError: If the timestamps are equal
    """
    dt = abs(s_t2.timestamp - s_t.timestamp)
    if dt == 0:
        raise PoseError(f"Odometry samples share timestamp {s_t.timestamp}")
    return 0.5 * (s_t.v + s_t2.v) * dt


def scale_pose(P: Pose, delta_x: float, min_baseline: float = MIN_BASELINE) -> Pose:
    """
    Rescale the translation of P to length delta_x, keeping its direction.

    The rotation array is carried over unchanged.

    Raises:
        DegenerateBaselineError: If |t| <= min_baseline
        PoseError: If delta_x <= 0
    """
    norm = P.translation_norm
    if norm <= min_baseline:
        raise DegenerateBaselineError(
            f"degenerate baseline: translation norm {norm:.3g} m <= {min_baseline:.3g} m"
        )
    if not delta_x > 0:
        raise PoseError(f"Displacement must be positive, got {delta_x}")
    return replace(P, translation=P.translation / norm * delta_x)


def odometry_scaled_poses(frame_poses: Sequence[Pose], odometry: Sequence[OdometrySample]) -> List[Pose]:
    """
    Rescale every adjacent relative pose to the odometry displacement.

    T_{i->i+1} is normalized and scaled by Delta x from samples i and i+1,
    then the frame poses are re-chained from the first frame. Backward poses
    follow by inversion.

    Args:
        frame_poses: World-from-camera poses, first frame as world
        odometry: One sample per frame

    Returns:
        Rescaled frame poses

    Raises:
        PoseError: If the lengths differ
        DegenerateBaselineError: If an adjacent pair has no translation
    """
    if len(frame_poses) != len(odometry):
        raise PoseError(f"Got {len(frame_poses)} poses but {len(odometry)} odometry samples")
    scaled = [frame_poses[0]]
    for i in range(len(frame_poses) - 1):
        forward = relative_pose(frame_poses, i, i + 1)
        delta_x = displacement_from_odometry(odometry[i], odometry[i + 1])
        forward = scale_pose(forward, delta_x)
        scaled.append(compose(scaled[i], invert(forward)))
        logger.debug(f"Frames {i}->{i + 1}: baseline rescaled to {delta_x:.4f} m")
    return scaled


def parse_pose(text: str) -> Pose:
    """
    Parse "roll pitch yaw tx ty tz".

    Raises:
        FormatError: If the text does not hold six numbers
    """
    parts = text.replace(",", " ").split()
    if len(parts) != 6:
        raise FormatError(f"Pose needs six numbers 'roll pitch yaw tx ty tz', got {text!r}")
    try:
        values = [float(p) for p in parts]
    except ValueError:
        raise FormatError(f"Pose contains a non-numeric value: {text!r}")
    return Pose.from_euler(values[0], values[1], values[2], values[3:])


def format_pose(P: Pose) -> str:
    values = list(P.euler) + list(P.translation)
    return " ".join(repr(float(v)) for v in values)


def load_poses(path: Union[str, Path]) -> List[Pose]:
    """Read a poses.txt file, one pose per non-empty line."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Pose file not found: {path}")
    with open(path, "r") as f:
        lines = [line.strip() for line in f if line.strip() and not line.startswith("#")]
    return [parse_pose(line) for line in lines]


def dump_poses(poses: Sequence[Pose], path: Union[str, Path]) -> None:
    with open(path, "w") as f:
        for pose in poses:
            f.write(format_pose(pose) + "\n")


def load_odometry(path: Union[str, Path]) -> List[OdometrySample]:
    """
    Read an odometry JSON array of {"t": seconds, "v": m/s}.

    Raises:
        FileNotFoundError: If the file does not exist
        FormatError: If an entry is malformed
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Odometry file not found: {path}")
    try:
        with open(path, "r") as f:
            entries = json.load(f)
    except json.JSONDecodeError as e:
        raise FormatError(f"Odometry file {path} is not valid JSON: {e}")
    if not isinstance(entries, list):
        raise FormatError("Odometry must be a JSON array of {t, v} objects")
    samples = []
    for idx, entry in enumerate(entries):
        if not isinstance(entry, dict) or "t" not in entry or "v" not in entry:
            raise FormatError(f"Odometry entry {idx} must have keys 't' and 'v': {entry!r}")
        samples.append(OdometrySample(v=float(entry["v"]), timestamp=float(entry["t"])))
    return samples


def dump_odometry(samples: Sequence[OdometrySample], path: Union[str, Path]) -> None:
    with open(path, "w") as f:
        json.dump([{"t": s.timestamp, "v": s.v} for s in samples], f, indent=2)
