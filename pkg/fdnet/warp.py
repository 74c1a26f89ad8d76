"""
View synthesis on fisheye images.

distance map -> point cloud -> transformed cloud -> reprojected flow field
-> bilinear reconstruction. The validity of the flow field is the ego mask:
a pixel is valid only when its ray is calibrated, the transformed point
projects within theta_max and all four bilinear neighbours lie inside the
calibrated FOV of the source image. Nothing is clamped at the borders.
"""

import logging
from dataclasses import dataclass
from typing import NamedTuple, Optional, Tuple

import numpy as np

from fdnet.camera import (
    FisheyeIntrinsics,
    ThetaLUT,
    WarpGrid,
    pixel_directions,
    pixel_rays,
    project_fisheye_array,
    project_fisheye_derivative,
)
from fdnet.errors import CameraModelError, ImageError, WarpError
from fdnet.se3 import Pose, transform_points

logger = logging.getLogger(__name__)

# Flow fields share the rectification grid layout.
FlowField = WarpGrid

# Coordinates this close outside the sampling domain are snapped onto it.
_BORDER_TOL = 1e-9


@dataclass
class Image:
    """Intensities in [0, 1], stored as an (H, W, C) float array."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim == 2:
            data = data[..., None]
        if data.ndim != 3 or data.shape[2] not in (1, 3):
            raise ImageError(f"Image must be HxW, HxWx1 or HxWx3, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ImageError("Image contains non-finite samples")
        if data.size and (data.min() < -1e-9 or data.max() > 1 + 1e-9):
            raise ImageError(f"Image samples must lie in [0, 1], got [{data.min()}, {data.max()}]")
        self.data = np.clip(data, 0.0, 1.0)

    @property
    def height(self) -> int:
        return int(self.data.shape[0])

    @property
    def width(self) -> int:
        return int(self.data.shape[1])

    @property
    def channels(self) -> int:
        return int(self.data.shape[2])

    @property
    def shape(self) -> Tuple[int, int]:
        return self.height, self.width


@dataclass
class DistanceMap:
    """Per-pixel Euclidean distance in meters, (H, W)."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim != 2:
            raise ImageError(f"Distance map must be 2-D, got shape {data.shape}")
        if not np.all(np.isfinite(data)) or np.any(data <= 0):
            raise ImageError("Distance map entries must be positive and finite")
        self.data = data

    @property
    def height(self) -> int:
        return int(self.data.shape[0])

    @property
    def width(self) -> int:
        return int(self.data.shape[1])

    @property
    def shape(self) -> Tuple[int, int]:
        return self.height, self.width


@dataclass
class Mask:
    """Binary per-pixel weight."""

    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=bool)

    @property
    def fraction(self) -> float:
        return float(np.mean(self.data)) if self.data.size else 0.0


@dataclass
class PointCloud:
    """One camera-frame point per pixel; invalid where the ray is uncalibrated."""

    points: np.ndarray
    valid: np.ndarray
    rays: np.ndarray


class BilinearSample(NamedTuple):
    values: np.ndarray
    d_du: np.ndarray
    d_dv: np.ndarray
    valid: np.ndarray
    x0: np.ndarray
    y0: np.ndarray
    fx: np.ndarray
    fy: np.ndarray


def sample_bilinear(src: np.ndarray, coords: np.ndarray, valid: np.ndarray,
                    src_valid: Optional[np.ndarray] = None) -> BilinearSample:
    """
    Bilinear reads of ``src`` (H, W, C) at continuous coordinates.

    Reads needing a neighbour outside the image, or outside ``src_valid``,
    are invalid and return 0. Also returns the derivatives of the sampled
    values with respect to u and v and the stencil (x0, y0, fx, fy) for
    scattering adjoints.

    Args:
        src: Source samples (H, W, C)
        coords: Coordinates (h, w, 2)
        valid: Flow validity (h, w)
        src_valid: Source pixels holding real samples, e.g. the FOV mask (all when None)

    Returns:
        BilinearSample
    """
    H, W = src.shape[:2]
    u = coords[..., 0]
    v = coords[..., 1]
    inside = (valid & np.isfinite(u) & np.isfinite(v)
              & (u >= -_BORDER_TOL) & (u <= W - 1 + _BORDER_TOL)
              & (v >= -_BORDER_TOL) & (v <= H - 1 + _BORDER_TOL))
    if W < 2 or H < 2:
        inside = np.zeros_like(inside)

    u = np.where(inside, np.clip(u, 0.0, W - 1), 0.0)
    v = np.where(inside, np.clip(v, 0.0, H - 1), 0.0)
    x0 = np.clip(np.floor(u).astype(int), 0, max(W - 2, 0))
    y0 = np.clip(np.floor(v).astype(int), 0, max(H - 2, 0))
    fx = (u - x0)[..., None]
    fy = (v - y0)[..., None]
    x1 = np.minimum(x0 + 1, W - 1)
    y1 = np.minimum(y0 + 1, H - 1)
    if src_valid is not None:
        if src_valid.shape != (H, W):
            raise WarpError(f"Source mask {src_valid.shape} does not match source {(H, W)}")
        inside &= src_valid[y0, x0] & src_valid[y0, x1] & src_valid[y1, x0] & src_valid[y1, x1]

    i00 = src[y0, x0]
    i01 = src[y0, x1]
    i10 = src[y1, x0]
    i11 = src[y1, x1]
    top = i00 + fx * (i01 - i00)
    bottom = i10 + fx * (i11 - i10)
    values = top + fy * (bottom - top)
    d_du = (1 - fy) * (i01 - i00) + fy * (i11 - i10)
    d_dv = bottom - top

    keep = inside[..., None]
    return BilinearSample(
        values=np.where(keep, values, 0.0),
        d_du=np.where(keep, d_du, 0.0),
        d_dv=np.where(keep, d_dv, 0.0),
        valid=inside,
        x0=x0, y0=y0, fx=fx[..., 0], fy=fy[..., 0],
    )


def scatter_bilinear(grad: np.ndarray, sample: BilinearSample, shape: Tuple[int, int]) -> np.ndarray:
    """
    Adjoint of a bilinear read with respect to the source samples.

    Args:
        grad: Upstream gradient per output pixel (h, w), zero where invalid
        sample: Stencil returned by sample_bilinear
        shape: Source (H, W)

    Returns:
        Gradient with respect to the source map (H, W)
    """
    H, W = shape
    total = np.zeros(H * W)
    g = np.where(sample.valid, grad, 0.0)
    fx, fy = sample.fx, sample.fy
    x0, y0 = sample.x0, sample.y0
    x1 = np.minimum(x0 + 1, W - 1)
    y1 = np.minimum(y0 + 1, H - 1)
    for yy, xx, w in ((y0, x0, (1 - fx) * (1 - fy)), (y0, x1, fx * (1 - fy)),
                      (y1, x0, (1 - fx) * fy), (y1, x1, fx * fy)):
        total += np.bincount((yy * W + xx).ravel(), weights=(g * w).ravel(), minlength=H * W)
    return total.reshape(H, W)


def unproject_map(D: DistanceMap, K: FisheyeIntrinsics, lut: ThetaLUT,
                  rays: Optional[Tuple[np.ndarray, np.ndarray]] = None) -> PointCloud:
    """
    Point cloud X(p) = D(p) * ray(p) for every pixel.

    Args:
        D: Distance map matching K's image size
        K: Fisheye intrinsics
        lut: Theta lookup table for K
        rays: Optional precomputed (rays, fov mask) from pixel_rays

    Returns:
        PointCloud; points outside the calibrated FOV are flagged invalid
    """
    if D.shape != (K.height, K.width):
        raise CameraModelError(f"Distance map {D.shape} does not match camera {(K.height, K.width)}")
    unit, fov = rays if rays is not None else pixel_rays(K, lut)
    return PointCloud(points=unit * D.data[..., None], valid=fov, rays=unit)


def _pixel_grid(height: int, width: int) -> np.ndarray:
    vv, uu = np.mgrid[0:height, 0:width].astype(float)
    return np.stack([uu, vv], axis=-1)


def reproject(cloud: PointCloud, T: Pose, K: FisheyeIntrinsics) -> FlowField:
    """
    Flow p -> Pi(T X(p)); validity is the ego mask of the warp.

    The identity pose returns the pixel grid itself.
    """
    height, width = cloud.valid.shape
    if T.is_identity():
        return FlowField(coords=_pixel_grid(height, width), valid=cloud.valid.copy())
    moved = transform_points(T, cloud.points)
    coords, valid = project_fisheye_array(moved, K)
    valid = valid & cloud.valid
    coords = np.where(valid[..., None], coords, 0.0)
    return FlowField(coords=coords, valid=valid)


def bilinear_sample(src: Image, flow: FlowField) -> Image:
    """
    Read ``src`` at the flow coordinates; invalid pixels become 0.

    Use sampling_mask to obtain the pixels that were actually read.
    """
    return Image(sample_bilinear(src.data, flow.coords, flow.valid).values)


def sampling_mask(flow: FlowField, width: int, height: int) -> Mask:
    """Flow validity restricted to reads with all four neighbours in bounds."""
    probe = np.zeros((height, width, 1))
    return Mask(sample_bilinear(probe, flow.coords, flow.valid).valid)


def synthesize_view(D_t: DistanceMap, I_src: Image, T: Pose, K: FisheyeIntrinsics,
                    lut: ThetaLUT) -> Tuple[Image, Mask]:
    """
    Reconstruct the target frame from a source frame.

    Args:
        D_t: Target distance map
        I_src: Source image
        T: T_{target->source}
        K: Fisheye intrinsics shared by both frames
        lut: Theta lookup table for K

    Returns:
        Tuple of (reconstruction, ego mask)
    """
    if I_src.shape != D_t.shape:
        raise CameraModelError(f"Source image {I_src.shape} does not match distance map {D_t.shape}")
    cloud = unproject_map(D_t, K, lut)
    flow = reproject(cloud, T, K)
    # both frames share K, so the target FOV is the source FOV
    sample = sample_bilinear(I_src.data, flow.coords, flow.valid, src_valid=cloud.valid)
    return Image(sample.values), Mask(sample.valid)


def flow_jacobian(cloud: PointCloud, T: Pose, K: FisheyeIntrinsics) -> np.ndarray:
    """
    d(u_hat, v_hat)/dD for every pixel, shape (H, W, 2).

    The cloud is linear in D along the ray, so the derivative is the projection
    Jacobian at T X applied to R * ray.
    """
    if T.is_identity():
        return np.zeros(cloud.points.shape[:-1] + (2,))
    moved = transform_points(T, cloud.points)
    direction = cloud.rays @ T.rotation.T
    return project_fisheye_derivative(moved, direction, K)


def warp_jacobian(p: np.ndarray, D: float, T: Pose, K: FisheyeIntrinsics, lut: ThetaLUT) -> np.ndarray:
    """
    Derivative of the reprojected coordinates of pixel p with respect to its distance.

    Args:
        p: Pixel (u, v)
        D: Distance in meters
        T: T_{target->source}
        K: Fisheye intrinsics
        lut: Theta lookup table for K

    Returns:
        2-vector in pixels per meter

    Raises:
        WarpError: If the warp of (p, D) is invalid
    """
    if not D > 0:
        raise WarpError(f"Distance must be positive, got {D}")
    ray, fov = pixel_directions(np.asarray(p, dtype=float), K, lut)
    if not bool(fov):
        raise WarpError(f"Pixel {tuple(p)} lies outside the calibrated field of view")
    moved = transform_points(T, ray * D)
    _, valid = project_fisheye_array(moved, K)
    if not bool(valid):
        raise WarpError(f"Warp of pixel {tuple(p)} at D={D} leaves the source image")
    if T.is_identity():
        return np.zeros(2)
    return project_fisheye_derivative(moved, T.rotation @ ray, K)


def downsample(data: np.ndarray, factor: int = 2) -> np.ndarray:
    """Box-average the two leading axes by ``factor``."""
    H, W = data.shape[:2]
    if H % factor or W % factor:
        raise ValueError(f"Size {W}x{H} is not divisible by {factor}")
    shaped = data.reshape((H // factor, factor, W // factor, factor) + data.shape[2:])
    return shaped.mean(axis=(1, 3))


def upsample_gradient(grad: np.ndarray, factor: int = 2) -> np.ndarray:
    """Adjoint of downsample."""
    return np.repeat(np.repeat(grad, factor, axis=0), factor, axis=1) / (factor * factor)


def downsample_image(image: Image, factor: int = 2) -> Image:
    return Image(downsample(image.data, factor))


def downsample_distance(D: DistanceMap, factor: int = 2) -> DistanceMap:
    return DistanceMap(downsample(D.data, factor))


def apply_rectification(image: Image, grid: WarpGrid) -> Tuple[Image, Mask]:
    """Undistort an image with a rectification grid."""
    sample = sample_bilinear(image.data, grid.coords, grid.valid)
    return Image(sample.values), Mask(sample.valid)
