"""
Ground-truth oracle: ray-cast textured scenes through the fisheye model.

Every pixel ray is intersected with the scene primitives in closed form, so
the rendered distance maps are exact up to floating point. Textures are
evaluated at the world-space hit point, which keeps the appearance of a
surface identical across views.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from fdnet.camera import MAX_DISTANCE, FisheyeIntrinsics, ThetaLUT, build_theta_lut, pixel_rays
from fdnet.errors import ConfigError, PoseError
from fdnet.parallel import map_row_chunks
from fdnet.se3 import (
    OdometrySample,
    Pose,
    compose,
    displacement_from_odometry,
    invert,
    relative_pose,
    transform_points,
)
from fdnet.warp import DistanceMap, Image, PointCloud, reproject, sample_bilinear

logger = logging.getLogger(__name__)

# Hits closer than this to the ray origin are ignored (meters).
_EPS = 1e-9


# ---------------------------------------------------------------------------
# Textures
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CheckerTexture:
    """3-D checkerboard with cells of ``size`` meters."""

    size: float = 0.5
    contrast: float = 0.6
    mean: float = 0.5

    def __call__(self, points: np.ndarray) -> np.ndarray:
        parity = np.floor(points / self.size).astype(int).sum(axis=-1) % 2
        return np.clip(self.mean + self.contrast * (parity - 0.5), 0.0, 1.0)


@dataclass(frozen=True)
class NoiseTexture:
    """Multi-octave 3-D value noise; ``frequency`` in cycles per meter."""

    frequency: float = 1.0
    octaves: int = 3
    contrast: float = 0.8
    mean: float = 0.5
    seed: int = 0
    _tables: Tuple[np.ndarray, np.ndarray] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.octaves < 1 or self.frequency <= 0:
            raise ConfigError(f"Noise texture needs octaves >= 1 and frequency > 0, got "
                              f"{self.octaves}, {self.frequency}")
        rng = np.random.default_rng(self.seed)
        object.__setattr__(self, "_tables", (rng.permutation(256), rng.random(256)))

    def _lattice(self, i: np.ndarray, j: np.ndarray, k: np.ndarray) -> np.ndarray:
        perm, values = self._tables
        return values[perm[(perm[(perm[i % 256] + j) % 256] + k) % 256]]

    def _octave(self, points: np.ndarray) -> np.ndarray:
        base = np.floor(points)
        frac = points - base
        i, j, k = (base[..., a].astype(np.int64) for a in range(3))
        w = frac * frac * (3.0 - 2.0 * frac)
        wx, wy, wz = w[..., 0], w[..., 1], w[..., 2]
        out = 0.0
        for di in (0, 1):
            for dj in (0, 1):
                for dk in (0, 1):
                    weight = ((wx if di else 1 - wx) * (wy if dj else 1 - wy) * (wz if dk else 1 - wz))
                    out = out + weight * self._lattice(i + di, j + dj, k + dk)
        return out

    def __call__(self, points: np.ndarray) -> np.ndarray:
        total = np.zeros(points.shape[:-1])
        norm = 0.0
        for octave in range(self.octaves):
            amplitude = 0.5 ** octave
            total += amplitude * self._octave(points * self.frequency * 2 ** octave)
            norm += amplitude
        return np.clip(self.mean + self.contrast * (total / norm - 0.5), 0.0, 1.0)


Texture = Union[CheckerTexture, NoiseTexture]


# ---------------------------------------------------------------------------
# Primitives
# ---------------------------------------------------------------------------

def _unit(v: Sequence[float], what: str) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    norm = np.linalg.norm(v)
    if norm == 0:
        raise ConfigError(f"{what} must be non-zero")
    return v / norm


@dataclass
class Plane:
    point: np.ndarray
    normal: np.ndarray
    texture: Texture = field(default_factory=NoiseTexture)
    extent: Optional[float] = None

    def __post_init__(self):
        self.point = np.asarray(self.point, dtype=float)
        self.normal = _unit(self.normal, "Plane normal")

    def intersect(self, origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        denom = dirs @ self.normal
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.dot(self.point - origin, self.normal) / denom
        hit = (np.abs(denom) > 1e-12) & (t > _EPS)
        if self.extent is not None:
            points = origin + dirs * np.where(hit, t, 0.0)[..., None]
            hit &= np.linalg.norm(points - self.point, axis=-1) <= self.extent
        return np.where(hit, t, np.inf)


@dataclass
class Sphere:
    center: np.ndarray
    radius: float
    texture: Texture = field(default_factory=NoiseTexture)

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float)
        if not self.radius > 0:
            raise ConfigError(f"Sphere radius must be positive, got {self.radius}")

    def intersect(self, origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        oc = origin - self.center
        b = dirs @ oc
        disc = b * b - (oc @ oc - self.radius ** 2)
        root = np.sqrt(np.maximum(disc, 0.0))
        near = -b - root
        t = np.where(near > _EPS, near, -b + root)
        return np.where((disc >= 0) & (t > _EPS), t, np.inf)


@dataclass
class Box:
    """Axis-aligned box between two corners."""

    lower: np.ndarray
    upper: np.ndarray
    texture: Texture = field(default_factory=CheckerTexture)

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        if np.any(self.upper <= self.lower):
            raise ConfigError(f"Box corners must satisfy min < max, got {self.lower} and {self.upper}")

    def intersect(self, origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        parallel = dirs == 0
        inside = (origin >= self.lower) & (origin <= self.upper)
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (self.lower - origin) / dirs
            t2 = (self.upper - origin) / dirs
        t1 = np.where(parallel, -np.inf, t1)
        t2 = np.where(parallel, np.inf, t2)
        t_near = np.max(np.minimum(t1, t2), axis=-1)
        t_far = np.min(np.maximum(t1, t2), axis=-1)
        hit = (t_near <= t_far) & (t_far > _EPS) & ~np.any(parallel & ~inside, axis=-1)
        t = np.where(t_near > _EPS, t_near, t_far)
        return np.where(hit, t, np.inf)


Primitive = Union[Plane, Sphere, Box]


@dataclass
class Scene:
    primitives: List[Primitive]
    background_distance: float = MAX_DISTANCE
    background_intensity: float = 0.5

    def __post_init__(self):
        if not self.background_distance > 0:
            raise ConfigError(f"background_distance must be positive, got {self.background_distance}")
        if not 0.0 <= self.background_intensity <= 1.0:
            raise ConfigError(f"background_intensity must lie in [0, 1], got {self.background_intensity}")


def _texture_from_dict(d: Optional[Dict[str, Any]]) -> Texture:
    if d is None:
        return NoiseTexture()
    d = dict(d)
    kind = d.pop("type", "noise")
    if kind == "checker":
        return CheckerTexture(**d)
    if kind == "noise":
        return NoiseTexture(**d)
    raise ConfigError(f"Unknown texture type: {kind}. Must be one of ['checker', 'noise']")


def scene_from_dict(d: Dict[str, Any]) -> Scene:
    """
    Build a Scene from its JSON description.

    Raises:
        ConfigError: If a primitive is malformed
    """
    if "primitives" not in d:
        raise ConfigError("Scene description needs a 'primitives' list")
    primitives = []
    for idx, item in enumerate(d["primitives"]):
        kind = item.get("type")
        texture = _texture_from_dict(item.get("texture"))
        try:
            if kind == "plane":
                primitives.append(Plane(point=item["point"], normal=item["normal"], texture=texture,
                                        extent=item.get("extent")))
            elif kind == "sphere":
                primitives.append(Sphere(center=item["center"], radius=float(item["radius"]), texture=texture))
            elif kind == "box":
                primitives.append(Box(lower=item["min"], upper=item["max"], texture=texture))
            else:
                raise ConfigError(f"Unknown primitive type in entry {idx}: {kind!r}")
        except KeyError as e:
            raise ConfigError(f"Primitive {idx} ({kind}) is missing key {e}")
    return Scene(
        primitives=primitives,
        background_distance=float(d.get("background_distance", MAX_DISTANCE)),
        background_intensity=float(d.get("background_intensity", 0.5)),
    )


def load_scene(path: Union[str, Path]) -> Scene:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Scene file not found: {path}")
    with open(path, "r") as f:
        return scene_from_dict(json.load(f))


def default_scene(seed: int = 7) -> Scene:
    """
    Value-noise wall 4 m ahead inside a textured dome of radius 9 m.

    Every calibrated ray of a camera near the origin hits a surface between
    4 and 10 m away, and the distance map is continuous.
    """
    return Scene(primitives=[
        Plane(point=[0.0, 0.0, 4.0], normal=[0.0, 0.0, -1.0],
              texture=NoiseTexture(frequency=0.4, octaves=2, contrast=0.9, seed=seed)),
        Sphere(center=[0.0, 0.0, 0.0], radius=9.0,
               texture=NoiseTexture(frequency=0.25, octaves=2, contrast=0.9, seed=seed + 1)),
    ])


def dome_scene(radius: float = 10.0, seed: int = 11) -> Scene:
    """Camera inside a smooth textured sphere; distance is smooth over the whole view."""
    return Scene(primitives=[
        Sphere(center=[0.0, 0.0, 0.0], radius=radius,
               texture=NoiseTexture(frequency=0.2, octaves=2, contrast=0.8, seed=seed)),
    ])


BUILTIN_SCENES = {"default": default_scene, "dome": dome_scene}


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

def render_with_hits(scene: Scene, K: FisheyeIntrinsics, pose: Pose, lut: Optional[ThetaLUT] = None,
                     channels: int = 1) -> Tuple[Image, DistanceMap, np.ndarray]:
    """
    Ray-cast one frame.

    Pixels outside the calibrated FOV get intensity 0 and the background
    distance; rays that miss every primitive get the background values.

    Args:
        scene: Scene in world coordinates
        K: Fisheye intrinsics
        pose: World-from-camera pose
        lut: Theta table for K (built when None)
        channels: 1 for gray, 3 for a replicated RGB image

    Returns:
        Tuple of (image, distance map, primitive index per pixel or -1)
    """
    if channels not in (1, 3):
        raise ValueError(f"channels must be 1 or 3, got {channels}")
    lut = lut or build_theta_lut(K)
    rays, fov = pixel_rays(K, lut)
    dirs = rays @ pose.rotation.T
    origin = pose.translation

    def render_rows(start: int, stop: int):
        d = dirs[start:stop]
        best = np.full(d.shape[:-1], np.inf)
        index = np.full(d.shape[:-1], -1)
        for k, prim in enumerate(scene.primitives):
            t = prim.intersect(origin, d)
            closer = t < best
            best = np.where(closer, t, best)
            index = np.where(closer, k, index)
        index = np.where(fov[start:stop], index, -1)

        intensity = np.full(d.shape[:-1], scene.background_intensity)
        points = origin + d * np.where(index >= 0, best, 0.0)[..., None]
        for k, prim in enumerate(scene.primitives):
            sel = index == k
            if sel.any():
                intensity[sel] = prim.texture(points[sel])
        intensity = np.where(fov[start:stop], intensity, 0.0)
        distance = np.where(index >= 0, best, scene.background_distance)
        return intensity, distance, index

    chunks = map_row_chunks(render_rows, K.height)
    intensity = np.concatenate([c[0] for c in chunks], axis=0)
    distance = np.concatenate([c[1] for c in chunks], axis=0)
    hits = np.concatenate([c[2] for c in chunks], axis=0)
    image = np.repeat(intensity[..., None], channels, axis=2)
    return Image(image), DistanceMap(distance), hits


def render(scene: Scene, K: FisheyeIntrinsics, pose: Pose, lut: Optional[ThetaLUT] = None,
           channels: int = 1) -> Tuple[Image, DistanceMap]:
    image, distance, _ = render_with_hits(scene, K, pose, lut, channels)
    return image, distance


# ---------------------------------------------------------------------------
# Snippets
# ---------------------------------------------------------------------------

@dataclass
class SequenceSnippet:
    """
    N consecutive frames with odometry.

    poses are relative to the first frame (world-from-camera); distances and
    hits are present for rendered snippets.
    """

    images: List[Image]
    intrinsics: FisheyeIntrinsics
    odometry: List[OdometrySample]
    poses: Optional[List[Pose]] = None
    distances: Optional[List[DistanceMap]] = None
    hits: Optional[List[np.ndarray]] = None

    def __post_init__(self):
        n = len(self.images)
        if n == 0:
            raise ValueError("A snippet needs at least one frame")
        shape = (self.intrinsics.height, self.intrinsics.width)
        for i, img in enumerate(self.images):
            if img.shape != shape:
                raise ValueError(f"Frame {i} has size {img.shape}, intrinsics say {shape}")
        if len(self.odometry) != n:
            raise PoseError(f"Got {len(self.odometry)} odometry samples for {n} frames")
        if self.poses is not None and len(self.poses) != n:
            raise PoseError(f"Got {len(self.poses)} poses for {n} frames")
        if self.distances is not None and len(self.distances) != n:
            raise ValueError(f"Got {len(self.distances)} distance maps for {n} frames")

    @property
    def n_frames(self) -> int:
        return len(self.images)

    def odometry_mismatch(self) -> float:
        """Largest | |t_{i->i+1}| - Delta x_i | over adjacent frames."""
        if self.poses is None:
            raise PoseError("Snippet has no poses")
        worst = 0.0
        for i in range(self.n_frames - 1):
            delta_x = displacement_from_odometry(self.odometry[i], self.odometry[i + 1])
            baseline = relative_pose(self.poses, i, i + 1).translation_norm
            worst = max(worst, abs(baseline - delta_x))
        return worst


def straight_trajectory(step: float, speed: float, n_frames: int,
                        direction: Sequence[float] = (0.0, 0.0, 1.0),
                        start: Optional[Pose] = None) -> List[Tuple[Pose, float]]:
    """Constant-speed straight motion of ``step`` meters per frame along ``direction`` (camera frame)."""
    start = start or Pose.identity()
    unit = _unit(direction, "Trajectory direction")
    return [(compose(start, Pose(translation=unit * step * i)), speed) for i in range(n_frames)]


def make_snippet(scene: Scene, K: FisheyeIntrinsics, trajectory: Sequence[Tuple[Pose, float]],
                 N: Optional[int] = None, lut: Optional[ThetaLUT] = None, frame_interval: float = 0.1,
                 channels: int = 1) -> SequenceSnippet:
    """
    Render a snippet and derive odometry consistent with the poses.

    Timestamps are chosen so that 0.5 * (v_i + v_{i+1}) * dt_i equals the
    camera displacement. Zero displacement uses ``frame_interval`` and needs
    zero speeds.

    Args:
        scene: Scene in world coordinates
        K: Fisheye intrinsics
        trajectory: (world-from-camera pose, speed m/s) per frame
        N: Number of frames to use (all when None)
        lut: Theta table for K
        frame_interval: dt for stationary steps (seconds)
        channels: Image channels

    Returns:
        SequenceSnippet with poses relative to the first frame

    Raises:
        ValueError: If N < 2, the trajectory is too short or the speeds
            cannot explain the motion
    """
    N = len(trajectory) if N is None else N
    if N < 2:
        raise ValueError(f"A snippet needs N >= 2 frames, got {N}")
    if len(trajectory) < N:
        raise ValueError(f"Trajectory has {len(trajectory)} entries, {N} requested")
    lut = lut or build_theta_lut(K)
    world_poses = [p for p, _ in trajectory[:N]]
    speeds = [float(v) for _, v in trajectory[:N]]

    images, distances, hits = [], [], []
    for pose in world_poses:
        image, distance, hit = render_with_hits(scene, K, pose, lut, channels)
        images.append(image)
        distances.append(distance)
        hits.append(hit)

    timestamp = 0.0
    odometry = [OdometrySample(v=speeds[0], timestamp=timestamp)]
    for i in range(N - 1):
        delta_x = float(np.linalg.norm(world_poses[i + 1].translation - world_poses[i].translation))
        v_sum = speeds[i] + speeds[i + 1]
        if delta_x == 0:
            if v_sum != 0:
                raise ValueError(f"Frames {i} and {i + 1} do not move but speeds are {speeds[i]}, {speeds[i + 1]}")
            dt = frame_interval
        else:
            if not v_sum > 0:
                raise ValueError(f"Frames {i} and {i + 1} move {delta_x:.4f} m but speeds sum to {v_sum}")
            dt = 2.0 * delta_x / v_sum
        timestamp += dt
        odometry.append(OdometrySample(v=speeds[i + 1], timestamp=timestamp))

    origin = invert(world_poses[0])
    snippet = SequenceSnippet(
        images=images,
        intrinsics=K,
        odometry=odometry,
        poses=[compose(origin, p) for p in world_poses],
        distances=distances,
        hits=hits,
    )
    mismatch = snippet.odometry_mismatch()
    if mismatch > 1e-9:
        raise PoseError(f"Rendered snippet violates the odometry invariant by {mismatch:.3g} m")
    logger.debug(f"Rendered {N}-frame snippet at {K.width}x{K.height}, t_end={timestamp:.3f}s")
    return snippet


def visibility_mask(snippet: SequenceSnippet, i: int, j: int, tol: float = 0.02,
                    lut: Optional[ThetaLUT] = None) -> np.ndarray:
    """
    Pixels of frame i that hit a primitive and are seen unoccluded from frame j.

    A pixel is visible when its ground-truth point reprojects validly into
    frame j and the distance read there agrees with |T_{i->j} X| within a
    relative tolerance.
    """
    if snippet.distances is None or snippet.poses is None:
        raise ValueError("visibility_mask needs a rendered snippet with distances and poses")
    K = snippet.intrinsics
    lut = lut or build_theta_lut(K)
    rays, fov = pixel_rays(K, lut)
    cloud = PointCloud(points=rays * snippet.distances[i].data[..., None], valid=fov, rays=rays)
    T = relative_pose(snippet.poses, i, j)
    flow = reproject(cloud, T, K)
    read = sample_bilinear(snippet.distances[j].data[..., None], flow.coords, flow.valid, src_valid=fov)
    expected = np.linalg.norm(transform_points(T, cloud.points), axis=-1)
    agrees = np.abs(read.values[..., 0] - expected) <= tol * expected
    visible = read.valid & agrees
    if snippet.hits is not None:
        visible &= snippet.hits[i] >= 0
    return visible
