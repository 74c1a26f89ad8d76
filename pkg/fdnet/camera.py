"""
Fisheye and pinhole camera models.

The fisheye model maps the incident angle theta of a camera-frame ray to an
image radius rho(theta) = k1*theta + k2*theta^2 + k3*theta^3 + k4*theta^4
(pixels), scaled per axis by the aspect ratio and shifted by the principal
point. Unprojection inverts the quartic with a bracketed root solver whose
results are tabulated in a ThetaLUT.

Pixel coordinates are continuous with integer values at pixel centers.
All functions accept single points or arrays of shape (..., 3) / (..., 2).
"""

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from fdnet.errors import CameraModelError, IntrinsicsError

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

# Range of sigma_to_distance outputs, in meters.
MIN_DISTANCE = 0.1
MAX_DISTANCE = 100.0

DEFAULT_LUT_ENTRIES = 4096

# Bisection stops at this bracket width before Newton refinement.
_BISECTION_TOL = 1e-6
_NEWTON_STEPS = 5
_MONOTONICITY_SAMPLES = 2049


@dataclass(frozen=True)
class FisheyeIntrinsics:
    """Quartic radial fisheye model (k in pixels per radian^i)."""

    k1: float
    k2: float
    k3: float
    k4: float
    c_x: float
    c_y: float
    width: int
    height: int
    theta_max: float
    a_x: float = 1.0
    a_y: float = 1.0

    def __post_init__(self):
        values = (self.k1, self.k2, self.k3, self.k4, self.c_x, self.c_y,
                  self.theta_max, self.a_x, self.a_y)
        if not all(math.isfinite(v) for v in values):
            raise IntrinsicsError(f"Non-finite fisheye intrinsics: {values}")
        if self.k1 <= 0:
            raise IntrinsicsError(f"k1 must be positive, got {self.k1}")
        if not 0 < self.theta_max <= math.pi:
            raise IntrinsicsError(f"theta_max must lie in (0, pi], got {self.theta_max}")
        if self.a_x <= 0 or self.a_y <= 0:
            raise IntrinsicsError(f"Aspect ratio must be positive, got ({self.a_x}, {self.a_y})")
        if self.width < 1 or self.height < 1:
            raise IntrinsicsError(f"Invalid image size {self.width}x{self.height}")

        thetas = np.linspace(0.0, self.theta_max, _MONOTONICITY_SAMPLES)
        slope = self.drho(thetas)
        if np.any(slope <= 0):
            bad = float(thetas[np.argmax(slope <= 0)])
            raise IntrinsicsError(
                f"rho(theta) is not strictly increasing on [0, theta_max]: "
                f"rho'({bad:.4f}) <= 0"
            )

    @property
    def k(self) -> Tuple[float, float, float, float]:
        return (self.k1, self.k2, self.k3, self.k4)

    def rho(self, theta: ArrayLike) -> ArrayLike:
        """Image radius in pixels for incident angle theta (Horner form)."""
        return theta * (self.k1 + theta * (self.k2 + theta * (self.k3 + theta * self.k4)))

    def drho(self, theta: ArrayLike) -> ArrayLike:
        """Derivative of rho with respect to theta."""
        return self.k1 + theta * (2 * self.k2 + theta * (3 * self.k3 + theta * 4 * self.k4))

    @property
    def rho_max(self) -> float:
        """Largest calibrated image radius, rho(theta_max)."""
        return float(self.rho(self.theta_max))


@dataclass(frozen=True)
class PinholeIntrinsics:
    """Standard pinhole camera, focal lengths and principal point in pixels."""

    f_x: float
    f_y: float
    c_x: float
    c_y: float
    width: int
    height: int

    def __post_init__(self):
        if self.f_x <= 0 or self.f_y <= 0:
            raise IntrinsicsError(f"Focal lengths must be positive, got ({self.f_x}, {self.f_y})")
        if self.width < 1 or self.height < 1:
            raise IntrinsicsError(f"Invalid image size {self.width}x{self.height}")


@dataclass(frozen=True)
class CylindricalSpec:
    """Cylindrical viewport: f_x pixels per radian of azimuth, f_y pixels per unit height."""

    f_x: float
    f_y: float
    c_x: float
    c_y: float
    width: int
    height: int

    def __post_init__(self):
        if self.f_x <= 0 or self.f_y <= 0:
            raise IntrinsicsError(f"Cylinder scales must be positive, got ({self.f_x}, {self.f_y})")


@dataclass(frozen=True, eq=False)
class ThetaLUT:
    """
    Monotone table mapping image radius (pixels) to incident angle (radians).

    Radii are sampled with a fixed step from 0 to ``rho_top``; lookups use
    linear interpolation and return NaN beyond the table.
    """

    rho_step: float
    rho_top: float
    rhos: np.ndarray
    thetas: np.ndarray

    def __post_init__(self):
        self.rhos.setflags(write=False)
        self.thetas.setflags(write=False)

    @property
    def n_entries(self) -> int:
        return int(self.thetas.shape[0])

    def lookup(self, rho: ArrayLike) -> ArrayLike:
        """
        Interpolate theta for the given radii.

        Args:
            rho: Image radius or array of radii in pixels

        Returns:
            Incident angle(s); NaN where rho is outside [0, rho_top]
        """
        rho_arr = np.asarray(rho, dtype=float)
        limit = self.rho_top * (1.0 + 1e-12)
        inside = (rho_arr >= 0) & (rho_arr <= limit)
        theta = np.interp(np.clip(rho_arr, 0.0, self.rho_top), self.rhos, self.thetas)
        theta = np.where(inside, theta, np.nan)
        if np.ndim(rho) == 0:
            return float(theta)
        return theta


@dataclass(frozen=True, eq=False)
class WarpGrid:
    """Per-pixel continuous source coordinates (u, v) and a validity flag."""

    coords: np.ndarray
    valid: np.ndarray

    @property
    def height(self) -> int:
        return int(self.coords.shape[0])

    @property
    def width(self) -> int:
        return int(self.coords.shape[1])

    @property
    def valid_fraction(self) -> float:
        return float(np.mean(self.valid))


def _as_points(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.shape[-1] != 3:
        raise CameraModelError(f"Expected points with 3 coordinates, got shape {X.shape}")
    return X


def _project_fisheye_raw(X: np.ndarray, K: FisheyeIntrinsics) -> Tuple[np.ndarray, np.ndarray]:
    """Projection without input checks; returns (pixels, theta)."""
    x, y, z = X[..., 0], X[..., 1], X[..., 2]
    r_c = np.hypot(x, y)
    phi = np.arctan2(y, x)
    theta = math.pi / 2 - np.arctan2(z, r_c)
    rho = K.rho(theta)
    u = rho * np.cos(phi) * K.a_x + K.c_x
    v = rho * np.sin(phi) * K.a_y + K.c_y
    return np.stack([u, v], axis=-1), theta


def project_fisheye_array(X: np.ndarray, K: FisheyeIntrinsics) -> Tuple[np.ndarray, np.ndarray]:
    """
    Project points without raising; degenerate points are flagged invalid.

    Args:
        X: Camera-frame points (..., 3) in meters
        K: Fisheye intrinsics

    Returns:
        Tuple of (pixels (..., 2), valid flags (...))
    """
    X = _as_points(X)
    finite = np.all(np.isfinite(X), axis=-1)
    nonzero = np.linalg.norm(np.where(finite[..., None], X, 0.0), axis=-1) > 0
    ok = finite & nonzero
    safe = np.where(ok[..., None], X, np.array([0.0, 0.0, 1.0]))
    pixels, theta = _project_fisheye_raw(safe, K)
    u, v = pixels[..., 0], pixels[..., 1]
    valid = (ok & (theta <= K.theta_max)
             & (u >= 0) & (u < K.width) & (v >= 0) & (v < K.height))
    pixels = np.where(ok[..., None], pixels, np.nan)
    return pixels, valid


def project_fisheye(X: np.ndarray, K: FisheyeIntrinsics) -> Tuple[np.ndarray, np.ndarray]:
    """
    Project camera-frame point(s) to fisheye pixel coordinates.

    valid is true where theta <= theta_max and the pixel lies inside
    [0, width) x [0, height).

    Args:
        X: Point (3,) or points (..., 3) in meters
        K: Fisheye intrinsics

    Returns:
        Tuple of (pixel(s), valid flag(s))

    Raises:
        CameraModelError: If any point is the origin or non-finite
    """
    X = _as_points(X)
    if not np.all(np.isfinite(X)):
        raise CameraModelError("Cannot project non-finite point")
    if np.any(np.linalg.norm(X, axis=-1) == 0):
        raise CameraModelError("Cannot project the camera center (zero-norm point)")
    pixels, valid = project_fisheye_array(X, K)
    if X.ndim == 1:
        return pixels, bool(valid)
    return pixels, valid


def project_fisheye_derivative(Y: np.ndarray, W: np.ndarray, K: FisheyeIntrinsics) -> np.ndarray:
    """
    Directional derivative of the fisheye projection at Y along W.

    Returns d(u, v) for an infinitesimal move dY = W. Near the optical axis
    the first-order model u ~ a_x * k1 * x / z is used.

    Args:
        Y: Camera-frame points (..., 3)
        W: Directions (..., 3)
        K: Fisheye intrinsics

    Returns:
        Array (..., 2) of pixel derivatives
    """
    x, y, z = Y[..., 0], Y[..., 1], Y[..., 2]
    wx, wy, wz = W[..., 0], W[..., 1], W[..., 2]
    r = np.hypot(x, y)
    norm2 = r * r + z * z
    near_axis = r <= 1e-12 * np.sqrt(norm2)
    r_safe = np.where(near_axis, 1.0, r)

    theta = np.arctan2(r, z)
    dr = (x * wx + y * wy) / r_safe
    dtheta = (z * dr - r * wz) / norm2
    rho = K.rho(theta)
    drho = K.drho(theta) * dtheta
    dcos = (wx * r - x * dr) / (r_safe * r_safe)
    dsin = (wy * r - y * dr) / (r_safe * r_safe)
    du = K.a_x * (drho * x / r_safe + rho * dcos)
    dv = K.a_y * (drho * y / r_safe + rho * dsin)

    z_safe = np.where(np.abs(z) > 0, z, 1.0)
    du_axis = K.a_x * K.k1 * (wx * z - x * wz) / (z_safe * z_safe)
    dv_axis = K.a_y * K.k1 * (wy * z - y * wz) / (z_safe * z_safe)
    du = np.where(near_axis, du_axis, du)
    dv = np.where(near_axis, dv_axis, dv)
    return np.stack([du, dv], axis=-1)


def solve_theta(rho: ArrayLike, K: FisheyeIntrinsics) -> ArrayLike:
    """
    Invert rho(theta) = rho on [0, theta_max].

    Bracketed bisection narrows the root to 1e-6 rad, then up to five Newton
    steps (kept inside the bracket) refine it to ~1e-12 rad.

    Args:
        rho: Image radius or radii in pixels
        K: Fisheye intrinsics

    Returns:
        Incident angle(s) in radians

    Raises:
        CameraModelError: If rho lies outside [0, rho(theta_max)]
    """
    target = np.asarray(rho, dtype=float)
    rho_max = K.rho_max
    if not np.all(np.isfinite(target)):
        raise CameraModelError("Cannot solve theta for non-finite radius")
    if np.any(target < 0) or np.any(target > rho_max * (1.0 + 1e-12)):
        raise CameraModelError(
            f"Radius outside calibrated range [0, {rho_max:.6f}]: "
            f"min={float(np.min(target)):.6f}, max={float(np.max(target)):.6f}"
        )
    target = np.clip(target, 0.0, rho_max)

    lo = np.zeros_like(target)
    hi = np.full_like(target, K.theta_max)
    while np.max(hi - lo) > _BISECTION_TOL:
        mid = 0.5 * (lo + hi)
        below = K.rho(mid) < target
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)

    theta = 0.5 * (lo + hi)
    for _ in range(_NEWTON_STEPS):
        step = (K.rho(theta) - target) / K.drho(theta)
        theta = np.clip(theta - step, lo, hi)
        if np.max(np.abs(step)) < 1e-15:
            break
    theta = np.where(target == 0, 0.0, theta)

    if np.ndim(rho) == 0:
        return float(theta)
    return theta


def image_corner_radius(K: FisheyeIntrinsics) -> float:
    """Largest normalized radius of the image rectangle corners."""
    corners_u = np.array([-0.5, K.width - 0.5])
    corners_v = np.array([-0.5, K.height - 0.5])
    xi = (corners_u - K.c_x) / K.a_x
    yi = (corners_v - K.c_y) / K.a_y
    return float(np.max(np.hypot(xi[:, None], yi[None, :])))


def build_theta_lut(K: FisheyeIntrinsics, n_entries: int = DEFAULT_LUT_ENTRIES) -> ThetaLUT:
    """
    Tabulate theta(rho) over the radii the image can reach.

    The table spans [0, min(rho_diag, rho(theta_max))] where rho_diag is the
    radius of the farthest image corner.

    Args:
        K: Fisheye intrinsics
        n_entries: Number of table entries (>= 2)

    Returns:
        ThetaLUT

    Raises:
        CameraModelError: If n_entries < 2
    """
    if n_entries < 2:
        raise CameraModelError(f"A theta lookup table needs at least 2 entries, got {n_entries}")

    rho_top = min(image_corner_radius(K), K.rho_max)
    rhos = np.linspace(0.0, rho_top, n_entries)
    thetas = np.asarray(solve_theta(rhos, K), dtype=float)
    if np.any(np.diff(thetas) <= 0):
        raise CameraModelError("Theta lookup table is not strictly increasing")

    logger.debug(f"Built theta LUT: {n_entries} entries up to rho={rho_top:.3f}px")
    return ThetaLUT(rho_step=rho_top / (n_entries - 1), rho_top=rho_top, rhos=rhos, thetas=thetas)


def pixel_directions(pixels: np.ndarray, K: FisheyeIntrinsics, lut: ThetaLUT) -> Tuple[np.ndarray, np.ndarray]:
    """
    Unit viewing rays for pixel coordinates.

    Args:
        pixels: Array (..., 2) of (u, v)
        K: Fisheye intrinsics
        lut: Theta lookup table for K

    Returns:
        Tuple of (unit rays (..., 3), valid flags (...)); invalid rays are (0, 0, 1)
    """
    pixels = np.asarray(pixels, dtype=float)
    xi = (pixels[..., 0] - K.c_x) / K.a_x
    yi = (pixels[..., 1] - K.c_y) / K.a_y
    theta = np.asarray(lut.lookup(np.hypot(xi, yi)))
    valid = np.isfinite(theta) & (theta <= K.theta_max)
    theta = np.where(valid, theta, 0.0)
    phi = np.arctan2(yi, xi)
    sin_t = np.sin(theta)
    rays = np.stack([sin_t * np.cos(phi), sin_t * np.sin(phi), np.cos(theta)], axis=-1)
    return rays, valid


def pixel_rays(K: FisheyeIntrinsics, lut: ThetaLUT) -> Tuple[np.ndarray, np.ndarray]:
    """
    Unit rays for every pixel center of the image grid.

    Returns:
        Tuple of (rays (H, W, 3), calibrated-FOV mask (H, W))
    """
    vv, uu = np.mgrid[0:K.height, 0:K.width].astype(float)
    return pixel_directions(np.stack([uu, vv], axis=-1), K, lut)


def fov_mask(K: FisheyeIntrinsics, lut: ThetaLUT) -> np.ndarray:
    """Pixels whose ray lies inside the calibrated field of view."""
    return pixel_rays(K, lut)[1]


def unproject_fisheye(p: np.ndarray, D: ArrayLike, K: FisheyeIntrinsics, lut: ThetaLUT) -> np.ndarray:
    """
    Lift pixel(s) to camera-frame point(s) at Euclidean distance D.

    r_c = D sin(theta), z_c = D cos(theta) with theta from the lookup table and
    phi = arctan2(y_i, x_i).

    Args:
        p: Pixel (2,) or pixels (..., 2)
        D: Distance(s) in meters
        K: Fisheye intrinsics
        lut: Theta lookup table for K

    Returns:
        Point(s) (..., 3) with norm D

    Raises:
        CameraModelError: If D <= 0 or a pixel radius is beyond calibration
    """
    D = np.asarray(D, dtype=float)
    if np.any(~np.isfinite(D)) or np.any(D <= 0):
        raise CameraModelError("Distance must be positive and finite")
    rays, valid = pixel_directions(p, K, lut)
    if not np.all(valid):
        raise CameraModelError("Pixel radius beyond the calibrated field of view")
    return rays * D[..., None] if D.ndim else rays * float(D)


def project_pinhole(X: np.ndarray, K: PinholeIntrinsics) -> Tuple[np.ndarray, np.ndarray]:
    """
    Pinhole projection u = f_x x/z + c_x, v = f_y y/z + c_y.

    Returns:
        Tuple of (pixel(s), valid flag(s)); points with z <= 0 are invalid (NaN pixel)
    """
    X = _as_points(X)
    z = X[..., 2]
    valid = z > 0
    z_safe = np.where(valid, z, 1.0)
    u = K.f_x * X[..., 0] / z_safe + K.c_x
    v = K.f_y * X[..., 1] / z_safe + K.c_y
    pixels = np.where(valid[..., None], np.stack([u, v], axis=-1), np.nan)
    if X.ndim == 1:
        return pixels, bool(valid)
    return pixels, valid


def unproject_pinhole(p: np.ndarray, depth: ArrayLike, K: PinholeIntrinsics) -> np.ndarray:
    """
    Lift pixel(s) to camera-frame point(s) with z = depth.

    Raises:
        CameraModelError: If depth <= 0
    """
    p = np.asarray(p, dtype=float)
    depth = np.asarray(depth, dtype=float)
    if np.any(depth <= 0):
        raise CameraModelError("Pinhole depth must be positive")
    x = (p[..., 0] - K.c_x) / K.f_x * depth
    y = (p[..., 1] - K.c_y) / K.f_y * depth
    return np.stack([x, y, np.broadcast_to(depth, x.shape)], axis=-1)


def _default_sigma_coefficients(model: str) -> Tuple[float, float]:
    if model == "fisheye":
        return MAX_DISTANCE - MIN_DISTANCE, MIN_DISTANCE
    if model == "pinhole":
        return 1.0 / MIN_DISTANCE - 1.0 / MAX_DISTANCE, 1.0 / MAX_DISTANCE
    raise CameraModelError(f"Unknown camera model: {model}. Must be one of ['fisheye', 'pinhole']")


def sigma_to_distance(sigma: ArrayLike, a: Optional[float] = None, b: Optional[float] = None,
                      model: str = "fisheye") -> ArrayLike:
    """
    Convert a sigmoid output to distance.

    fisheye: D = a*sigma + b; pinhole: D = 1 / (a*sigma + b). Default a, b
    map [0, 1] onto [0.1, 100] meters.

    Raises:
        CameraModelError: If sigma is outside [0, 1] or the model is unknown
    """
    default_a, default_b = _default_sigma_coefficients(model)
    a = default_a if a is None else a
    b = default_b if b is None else b
    s = np.asarray(sigma, dtype=float)
    if np.any(s < 0) or np.any(s > 1):
        raise CameraModelError("sigma must lie in [0, 1]")
    out = a * s + b if model == "fisheye" else 1.0 / (a * s + b)
    if np.ndim(sigma) == 0:
        return float(out)
    return out


def rectification_map(K: FisheyeIntrinsics, target: Union[PinholeIntrinsics, CylindricalSpec],
                      mode: str = "rectilinear") -> WarpGrid:
    """
    Source coordinates in the fisheye image for every pixel of a viewport.

    rectilinear: target rays ((u - c_x)/f_x, (v - c_y)/f_y, 1), so rays at or
    beyond 90 degrees are lost. cylindrical: azimuth (u - c_x)/f_x and height
    (v - c_y)/f_y on a unit cylinder, which keeps vertical lines vertical.
    Pixels whose ray exceeds theta_max or leaves the fisheye image are invalid.

    Args:
        K: Fisheye intrinsics of the source image
        target: PinholeIntrinsics (rectilinear) or CylindricalSpec (cylindrical)
        mode: "rectilinear" or "cylindrical"

    Returns:
        WarpGrid of shape (target.height, target.width)
    """
    vv, uu = np.mgrid[0:target.height, 0:target.width].astype(float)
    if mode == "rectilinear":
        if not isinstance(target, PinholeIntrinsics):
            raise CameraModelError("Rectilinear correction needs PinholeIntrinsics")
        rays = np.stack([(uu - target.c_x) / target.f_x,
                         (vv - target.c_y) / target.f_y,
                         np.ones_like(uu)], axis=-1)
        in_viewport = np.ones(uu.shape, dtype=bool)
    elif mode == "cylindrical":
        if not isinstance(target, CylindricalSpec):
            raise CameraModelError("Cylindrical correction needs a CylindricalSpec")
        psi = (uu - target.c_x) / target.f_x
        h = (vv - target.c_y) / target.f_y
        rays = np.stack([np.sin(psi), h, np.cos(psi)], axis=-1)
        in_viewport = np.abs(psi) < math.pi
    else:
        raise CameraModelError(f"Unknown rectification mode: {mode}. Must be one of ['rectilinear', 'cylindrical']")

    coords, valid = project_fisheye_array(rays, K)
    valid = valid & in_viewport
    coords = np.where(valid[..., None], coords, 0.0)
    return WarpGrid(coords=coords, valid=valid)


def scale_intrinsics(K: FisheyeIntrinsics, factor: int) -> FisheyeIntrinsics:
    """
    Intrinsics of an image downsampled by ``factor`` with box averaging.

    Radii shrink by the factor; a level pixel center i sits at full-resolution
    coordinate factor*i + (factor - 1)/2.
    """
    if factor == 1:
        return K
    if K.width % factor or K.height % factor:
        raise IntrinsicsError(f"Image size {K.width}x{K.height} is not divisible by {factor}")
    shift = (factor - 1) / 2.0
    return FisheyeIntrinsics(
        k1=K.k1 / factor, k2=K.k2 / factor, k3=K.k3 / factor, k4=K.k4 / factor,
        c_x=(K.c_x - shift) / factor, c_y=(K.c_y - shift) / factor,
        width=K.width // factor, height=K.height // factor,
        theta_max=K.theta_max, a_x=K.a_x, a_y=K.a_y,
    )


def reference_intrinsics(width: int = 64, height: int = 40, theta_max: float = 1.745) -> FisheyeIntrinsics:
    """Synthetic reference camera: k=(320, -15, 0.8, -0.02) scaled from a 1280-pixel-wide sensor."""
    s = width / 1280.0
    return FisheyeIntrinsics(
        k1=320.0 * s, k2=-15.0 * s, k3=0.8 * s, k4=-0.02 * s,
        c_x=(width - 1) / 2.0, c_y=(height - 1) / 2.0,
        width=width, height=height, theta_max=theta_max,
    )


def _require(d: Dict[str, Any], key: str, length: Optional[int] = None) -> Any:
    if key not in d:
        raise IntrinsicsError(f"Missing required intrinsics key: {key}")
    value = d[key]
    if length is not None:
        if not isinstance(value, (list, tuple)) or len(value) != length:
            raise IntrinsicsError(f"Intrinsics key '{key}' must be a list of {length} numbers, got {value!r}")
        try:
            return [float(v) for v in value]
        except (TypeError, ValueError):
            raise IntrinsicsError(f"Intrinsics key '{key}' must contain numbers, got {value!r}")
    return value


def intrinsics_from_dict(d: Dict[str, Any]) -> Union[FisheyeIntrinsics, PinholeIntrinsics]:
    """
    Build intrinsics from the JSON intrinsics object.

    Raises:
        IntrinsicsError: On missing or inconsistent keys
    """
    if not isinstance(d, dict):
        raise IntrinsicsError("Intrinsics must be a JSON object")
    model = _require(d, "model")
    principal = _require(d, "principal", 2)
    size = _require(d, "size", 2)
    if any(s != int(s) or s < 1 for s in size):
        raise IntrinsicsError(f"Intrinsics size must be two positive integers, got {size}")
    width, height = int(size[0]), int(size[1])

    if model == "fisheye":
        if "f" in d:
            raise IntrinsicsError("Key 'f' is inconsistent with the fisheye model")
        k = _require(d, "k", 4)
        aspect = _require(d, "aspect", 2) if "aspect" in d else [1.0, 1.0]
        theta_max = _require(d, "theta_max")
        try:
            theta_max = float(theta_max)
        except (TypeError, ValueError):
            raise IntrinsicsError(f"theta_max must be a number, got {theta_max!r}")
        return FisheyeIntrinsics(
            k1=k[0], k2=k[1], k3=k[2], k4=k[3],
            c_x=principal[0], c_y=principal[1],
            width=width, height=height, theta_max=theta_max,
            a_x=aspect[0], a_y=aspect[1],
        )
    if model == "pinhole":
        for key in ("k", "theta_max"):
            if key in d:
                raise IntrinsicsError(f"Key '{key}' is inconsistent with the pinhole model")
        f = _require(d, "f", 2)
        return PinholeIntrinsics(f_x=f[0], f_y=f[1], c_x=principal[0], c_y=principal[1],
                                 width=width, height=height)
    raise IntrinsicsError(f"Unknown camera model: {model!r}. Must be one of ['fisheye', 'pinhole']")


def intrinsics_to_dict(K: Union[FisheyeIntrinsics, PinholeIntrinsics]) -> Dict[str, Any]:
    """JSON intrinsics object for K."""
    if isinstance(K, FisheyeIntrinsics):
        return {
            "model": "fisheye",
            "k": list(K.k),
            "aspect": [K.a_x, K.a_y],
            "principal": [K.c_x, K.c_y],
            "size": [K.width, K.height],
            "theta_max": K.theta_max,
        }
    return {
        "model": "pinhole",
        "f": [K.f_x, K.f_y],
        "principal": [K.c_x, K.c_y],
        "size": [K.width, K.height],
    }


def load_intrinsics(path: Union[str, Path]) -> Union[FisheyeIntrinsics, PinholeIntrinsics]:
    """
    Load an intrinsics JSON file.

    Raises:
        FileNotFoundError: If the file does not exist
        IntrinsicsError: If the contents are invalid
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Intrinsics file not found: {path}")
    try:
        with open(path, "r") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise IntrinsicsError(f"Intrinsics file {path} is not valid JSON: {e}")
    return intrinsics_from_dict(data)
