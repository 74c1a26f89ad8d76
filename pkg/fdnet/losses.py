"""
The self-supervised objective over an N-frame fisheye snippet.

Per scale level n (n = 1 is full resolution):

    L_n = L_p^f + L_p^b + gamma * L_dc + beta * L_s
    total = sum_n L_n / 2^(n-1)

L_p^f reconstructs the center frame from its neighbours, L_p^b reconstructs
the neighbours from the center frame. Both use the SSIM+L1 photometric error,
the per-pixel minimum over sources, percentile clipping and the static-pixel
automask. L_s is the edge-aware smoothness of the mean-normalized inverse
distance, L_dc the cross-sequence distance consistency over all frame pairs.

evaluate_objective computes the values and, on request, the exact gradient of
the implemented loss with respect to every pyramid level of every distance map.
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.ndimage import correlate

from fdnet.camera import DEFAULT_LUT_ENTRIES, FisheyeIntrinsics, ThetaLUT, build_theta_lut, pixel_rays, scale_intrinsics
from fdnet.errors import ConfigError, NoSupervisedPixelsError, PoseError
from fdnet.se3 import Pose, relative_pose, transform_points
from fdnet.warp import (
    DistanceMap,
    Image,
    Mask,
    PointCloud,
    downsample,
    flow_jacobian,
    reproject,
    sample_bilinear,
    scatter_bilinear,
)

logger = logging.getLogger(__name__)

SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2

_WINDOW = np.ones((3, 3, 1))


@dataclass(frozen=True)
class LossWeights:
    """Weights and switches of the total loss."""

    alpha: float = 0.85
    beta: float = 0.001
    gamma: float = 0.001
    clip_percentile: float = 95.0
    n_scales: int = 4
    automask_warmup: int = 200
    decay_smoothness: bool = True

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.beta < 0 or self.gamma < 0:
            raise ConfigError(f"Loss weights must be non-negative, got beta={self.beta}, gamma={self.gamma}")
        if not 0.0 < self.clip_percentile <= 100.0:
            raise ConfigError(f"clip_percentile must lie in (0, 100], got {self.clip_percentile}")
        if not 2 <= self.n_scales <= 4:
            raise ConfigError(f"n_scales must be between 2 and 4, got {self.n_scales}")
        if self.automask_warmup < 0:
            raise ConfigError(f"automask_warmup must be >= 0, got {self.automask_warmup}")

    def to_dict(self) -> Dict[str, Union[float, int, bool]]:
        return asdict(self)


@dataclass
class ScaleBreakdown:
    L_p_forward: float
    L_p_backward: float
    L_s: float
    L_dc: float


@dataclass
class LossReport:
    """
    Scalar losses per scale level plus diagnostic maps of the finest level.

    ``total`` is always recomputed from the breakdown.
    """

    scales: List[ScaleBreakdown]
    weights: LossWeights
    automask_active: bool = False
    maps: Dict[str, np.ndarray] = field(default_factory=dict)
    total: float = field(init=False)

    def __post_init__(self):
        self.total = self.total_from_breakdown()

    def total_from_breakdown(self) -> float:
        total = 0.0
        for level, s in enumerate(self.scales):
            decay = 2.0 ** level
            total += (s.L_p_forward + s.L_p_backward + self.weights.gamma * s.L_dc) / decay
            total += self.weights.beta * s.L_s / (decay if self.weights.decay_smoothness else 1.0)
        return total

    @property
    def photometric(self) -> float:
        """Decayed photometric part of the total."""
        return sum((s.L_p_forward + s.L_p_backward) / 2.0 ** level for level, s in enumerate(self.scales))

    def to_dict(self) -> Dict:
        summary = {}
        for name, data in self.maps.items():
            values = np.asarray(data, dtype=float)
            finite = values[np.isfinite(values)]
            summary[name] = {
                "mean": float(finite.mean()) if finite.size else None,
                "min": float(finite.min()) if finite.size else None,
                "max": float(finite.max()) if finite.size else None,
            }
        return {
            "total": self.total,
            "photometric": self.photometric,
            "automask_active": self.automask_active,
            "weights": self.weights.to_dict(),
            "scales": [asdict(s) for s in self.scales],
            "maps": summary,
        }


@dataclass
class FrozenSelection:
    """Discrete choices of one min-reprojection reduction."""

    choice: np.ndarray
    supervised: np.ndarray
    clipped: np.ndarray
    threshold: float


@dataclass
class SelectionState:
    """Frozen selections keyed by (level, term, target frame)."""

    entries: Dict[Tuple[int, str, int], FrozenSelection] = field(default_factory=dict)

    def get(self, level: int, term: str, target: int) -> Optional[FrozenSelection]:
        return self.entries.get((level, term, target))


# ---------------------------------------------------------------------------
# Photometric error
# ---------------------------------------------------------------------------

class _SSIMStats(NamedTuple):
    S: np.ndarray
    mu_x: np.ndarray
    mu_y: np.ndarray
    A1: np.ndarray
    A2: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    inv_n: np.ndarray
    m: np.ndarray


def _box(a: np.ndarray) -> np.ndarray:
    return correlate(a, _WINDOW, mode="constant", cval=0.0)


def _ssim_stats(x: np.ndarray, y: np.ndarray, mask: np.ndarray) -> _SSIMStats:
    """Per-channel SSIM over 3x3 windows restricted to masked-in pixels."""
    m = mask.astype(float)[..., None]
    n = _box(m)
    inv_n = np.divide(1.0, n, out=np.zeros_like(n), where=n > 0)
    mu_x = _box(m * x) * inv_n
    mu_y = _box(m * y) * inv_n
    var_x = _box(m * (x * x)) * inv_n - mu_x * mu_x
    var_y = _box(m * (y * y)) * inv_n - mu_y * mu_y
    cov = _box(m * (x * y)) * inv_n - mu_x * mu_y
    A1 = 2.0 * mu_x * mu_y + SSIM_C1
    A2 = 2.0 * cov + SSIM_C2
    B1 = mu_x * mu_x + mu_y * mu_y + SSIM_C1
    B2 = var_x + var_y + SSIM_C2
    S = (A1 * A2) / (B1 * B2)
    return _SSIMStats(S=S, mu_x=mu_x, mu_y=mu_y, A1=A1, A2=A2, B1=B1, B2=B2, inv_n=inv_n, m=m)


def _pe(x: np.ndarray, y: np.ndarray, mask: np.ndarray, alpha: float) -> Tuple[np.ndarray, _SSIMStats]:
    stats = _ssim_stats(x, y, mask)
    dssim = np.clip((1.0 - stats.S) / 2.0, 0.0, 1.0)
    pe = (alpha * dssim + (1.0 - alpha) * np.abs(x - y)).mean(axis=2)
    return np.where(mask, pe, 0.0), stats


def _pe_backward(G: np.ndarray, x: np.ndarray, y: np.ndarray, mask: np.ndarray,
                 alpha: float, stats: _SSIMStats) -> np.ndarray:
    """
    Gradient of sum_p G(p) * pe(p) with respect to the reconstruction y.

    The window statistics of pixel p depend on every masked-in y_q of its
    window, so the SSIM part is scattered back with the same box sums.
    """
    channels = x.shape[2]
    Gc = np.where(mask, G, 0.0)[..., None]
    S = stats.S
    g = Gc * (-alpha / (2.0 * channels)) * ((S > -1.0) & (S < 1.0))

    dS_dvar = -S / stats.B2
    dS_dcov = 2.0 * stats.A1 / (stats.B1 * stats.B2)
    dS_dmu = 2.0 * stats.mu_x * stats.A2 / (stats.B1 * stats.B2) - 2.0 * S * stats.mu_y / stats.B1
    a = dS_dmu - 2.0 * stats.mu_y * dS_dvar - stats.mu_x * dS_dcov
    gn = g * stats.inv_n
    grad = stats.m * (_box(gn * a) + 2.0 * y * _box(gn * dS_dvar) + x * _box(gn * dS_dcov))
    grad -= Gc * ((1.0 - alpha) / channels) * np.sign(x - y)
    return grad


def _mask_array(mask: Optional[Union[Mask, np.ndarray]], shape: Tuple[int, int]) -> np.ndarray:
    if mask is None:
        return np.ones(shape, dtype=bool)
    data = mask.data if isinstance(mask, Mask) else np.asarray(mask, dtype=bool)
    if data.shape != shape:
        raise ValueError(f"Mask shape {data.shape} does not match image shape {shape}")
    return data


def _check_pair(I1: Image, I2: Image) -> None:
    if I1.data.shape != I2.data.shape:
        raise ValueError(f"Image dimensions differ: {I1.data.shape} vs {I2.data.shape}")


def ssim(I1: Image, I2: Image, M: Optional[Mask] = None) -> np.ndarray:
    """
    Windowed SSIM map, averaged over channels.

    Args:
        I1: First image
        I2: Second image, same dimensions
        M: Pixels allowed into the window statistics (all when None)

    Returns:
        Array (H, W) with values in [-1, 1]
    """
    _check_pair(I1, I2)
    mask = _mask_array(M, I1.shape)
    return _ssim_stats(I1.data, I2.data, mask).S.mean(axis=2)


def photometric_error(I_t: Image, I_hat: Image, M: Optional[Mask] = None, alpha: float = 0.85) -> np.ndarray:
    """
    pe = alpha * (1 - SSIM) / 2 + (1 - alpha) * |I_t - I_hat|, zero outside M.

    Args:
        I_t: Target image
        I_hat: Reconstruction of the target
        M: Ego mask (all pixels when None)
        alpha: SSIM share

    Returns:
        Array (H, W) of non-negative errors
    """
    _check_pair(I_t, I_hat)
    mask = _mask_array(M, I_t.shape)
    return _pe(I_t.data, I_hat.data, mask, alpha)[0]


def nearest_rank_percentile(values: np.ndarray, percentile: float) -> float:
    """Smallest value with at least ``percentile`` percent of the values at or below it."""
    n = values.size
    k = int(math.ceil(round(percentile * n / 100.0, 9)))
    k = min(max(k, 1), n)
    return float(np.partition(values, k - 1)[k - 1])


def _select(pe_stack: np.ndarray, valid_stack: np.ndarray, omega: np.ndarray,
            clip_percentile: float) -> Tuple[float, FrozenSelection]:
    masked = np.where(valid_stack, pe_stack, np.inf)
    choice = np.argmin(masked, axis=0)
    pe_min = np.take_along_axis(masked, choice[None], axis=0)[0]
    any_valid = np.any(valid_stack, axis=0)
    supervised = any_valid & omega
    if not supervised.any():
        raise NoSupervisedPixelsError("no supervised pixels")

    values = pe_min[supervised]
    threshold = nearest_rank_percentile(values, clip_percentile)
    clipped = supervised & (pe_min >= threshold)
    value = float(np.mean(np.minimum(values, threshold)))
    return value, FrozenSelection(
        choice=np.where(any_valid, choice, -1),
        supervised=supervised,
        clipped=clipped,
        threshold=threshold,
    )


def _frozen_value(pe_stack: np.ndarray, frozen: FrozenSelection) -> float:
    if not frozen.supervised.any():
        return 0.0
    picked = np.take_along_axis(pe_stack, np.maximum(frozen.choice, 0)[None], axis=0)[0]
    values = np.where(frozen.clipped, frozen.threshold, picked)
    return float(np.mean(values[frozen.supervised]))


def min_reprojection(pe_list: Sequence[np.ndarray], omega: Optional[Union[Mask, np.ndarray]] = None,
                     clip_percentile: float = 95.0,
                     masks: Optional[Sequence[Union[Mask, np.ndarray]]] = None) -> float:
    """
    Per-pixel minimum over sources, clipped at a percentile and averaged.

    Errors at or above the nearest-rank percentile of the supervised minima
    are replaced by the threshold. A pixel is supervised when omega is set and
    at least one source is valid there.

    Args:
        pe_list: Per-source error maps
        omega: Automask (all pixels when None)
        clip_percentile: Clipping percentile in (0, 100]
        masks: Per-source ego masks (all valid when None)

    Returns:
        float: L_p

    Raises:
        NoSupervisedPixelsError: If no pixel is supervised
    """
    if len(pe_list) == 0:
        raise ValueError("min_reprojection needs at least one source")
    pe_stack = np.stack([np.asarray(pe, dtype=float) for pe in pe_list])
    shape = pe_stack.shape[1:]
    if masks is None:
        valid_stack = np.ones(pe_stack.shape, dtype=bool)
    else:
        if len(masks) != len(pe_list):
            raise ValueError(f"Got {len(masks)} masks for {len(pe_list)} sources")
        valid_stack = np.stack([_mask_array(m, shape) for m in masks])
    value, _ = _select(pe_stack, valid_stack, _mask_array(omega, shape), clip_percentile)
    return value


def automask(I_t: Image, sources: Sequence[Image], recons: Sequence[Image],
             masks: Optional[Sequence[Mask]] = None, alpha: float = 0.85) -> Mask:
    """
    Static-pixel mask: 1 where the best reconstruction beats the best unwarped source.

    Pixels without a valid reconstruction are 0.
    """
    if len(sources) != len(recons) or not sources:
        raise ValueError(f"automask needs matching sources and reconstructions, got {len(sources)} and {len(recons)}")
    full = np.ones(I_t.shape, dtype=bool)
    warped, static = [], []
    for k, (src, recon) in enumerate(zip(sources, recons)):
        _check_pair(I_t, src)
        _check_pair(I_t, recon)
        mask = full if masks is None else _mask_array(masks[k], I_t.shape)
        pe = _pe(I_t.data, recon.data, mask, alpha)[0]
        warped.append(np.where(mask, pe, np.inf))
        static.append(_pe(I_t.data, src.data, full, alpha)[0])
    return Mask(np.min(warped, axis=0) < np.min(static, axis=0))


def automask_active(weights: LossWeights, iteration: int) -> bool:
    return iteration >= weights.automask_warmup


# ---------------------------------------------------------------------------
# Smoothness
# ---------------------------------------------------------------------------

def _smoothness(depth: np.ndarray, image: np.ndarray, with_gradient: bool) -> Tuple[float, Optional[np.ndarray]]:
    inv = 1.0 / depth
    mean_inv = inv.mean()
    norm = inv / mean_inv
    value = 0.0
    g_norm = np.zeros_like(depth) if with_gradient else None
    for axis in (1, 0):
        if depth.shape[axis] < 2:
            continue
        d = np.diff(norm, axis=axis)
        edge = np.exp(-np.abs(np.diff(image, axis=axis)).mean(axis=2))
        value += float(np.mean(np.abs(d) * edge))
        if with_gradient:
            s = np.sign(d) * edge / d.size
            if axis == 1:
                g_norm[:, 1:] += s
                g_norm[:, :-1] -= s
            else:
                g_norm[1:] += s
                g_norm[:-1] -= s
    if not with_gradient:
        return value, None
    g_inv = g_norm / mean_inv - np.sum(g_norm * inv) / (mean_inv ** 2 * inv.size)
    return value, -g_inv / (depth * depth)


def smoothness_loss(D: DistanceMap, I: Image) -> float:
    """
    Edge-aware smoothness of D* = (1/D) / mean(1/D).

    Forward differences along u and v are averaged separately and added;
    each difference is weighted by exp(-|dI|) with |dI| averaged over channels.
    """
    if D.shape != I.shape:
        raise ValueError(f"Distance map {D.shape} does not match image {I.shape}")
    return _smoothness(D.data, I.data, False)[0]


# ---------------------------------------------------------------------------
# Pyramid context
# ---------------------------------------------------------------------------

def build_pyramid(D: DistanceMap, n_scales: int) -> List[DistanceMap]:
    """Levels 0..n_scales-1, each a 2x2 average of the previous."""
    levels = [D]
    for _ in range(n_scales - 1):
        levels.append(DistanceMap(downsample(levels[-1].data)))
    return levels


@dataclass
class ScaleLevel:
    """Camera geometry and images of one pyramid level."""

    factor: int
    intrinsics: FisheyeIntrinsics
    rays: np.ndarray
    fov: np.ndarray
    images: List[np.ndarray]
    alpha: float
    _static_pe: Dict[Tuple[int, int], np.ndarray] = field(default_factory=dict)

    def static_pe(self, target: int, source: int) -> np.ndarray:
        """pe between the target and the unwarped source; images never change."""
        key = (target, source)
        if key not in self._static_pe:
            full = np.ones(self.images[target].shape[:2], dtype=bool)
            self._static_pe[key] = _pe(self.images[target], self.images[source], full, self.alpha)[0]
        return self._static_pe[key]


@dataclass
class ObjectiveContext:
    """Everything of the objective that does not depend on the distance maps."""

    levels: List[ScaleLevel]
    relative: Dict[Tuple[int, int], Pose]
    weights: LossWeights
    n_frames: int

    @classmethod
    def build(cls, snippet, poses: Sequence[Pose], weights: LossWeights,
              n_levels: Optional[int] = None, intrinsics: Optional[FisheyeIntrinsics] = None,
              lut: Optional[ThetaLUT] = None, lut_entries: int = DEFAULT_LUT_ENTRIES) -> "ObjectiveContext":
        """
        Args:
            snippet: SequenceSnippet providing images and intrinsics
            poses: World-from-camera pose of every frame
            weights: Loss weights
            n_levels: Pyramid depth (weights.n_scales when None)
            intrinsics: Overrides the snippet intrinsics
            lut: Theta table for the full-resolution level
            lut_entries: Table size for the coarser levels

        Raises:
            PoseError: If a frame has no pose
            ConfigError: If the image size does not support the pyramid depth
        """
        n_frames = len(snippet.images)
        if n_frames < 2:
            raise ValueError(f"A snippet needs at least 2 frames, got {n_frames}")
        if len(poses) < n_frames:
            raise PoseError(f"missing pose: got {len(poses)} poses for {n_frames} frames")
        n_levels = weights.n_scales if n_levels is None else n_levels
        K = intrinsics or snippet.intrinsics

        height, width = snippet.images[0].shape
        top = 2 ** (n_levels - 1)
        if height % top or width % top or height // top < 2 or width // top < 2:
            raise ConfigError(f"Image size {width}x{height} does not support {n_levels} pyramid levels")

        images = [img.data for img in snippet.images]
        levels = []
        for index in range(n_levels):
            factor = 2 ** index
            if index > 0:
                images = [downsample(img) for img in images]
            K_level = scale_intrinsics(K, factor)
            level_lut = lut if (index == 0 and lut is not None) else build_theta_lut(K_level, lut_entries)
            rays, fov = pixel_rays(K_level, level_lut)
            if index > 0:
                # coarse pixels averaging in uncalibrated samples are not usable
                fov = fov & (downsample(levels[-1].fov.astype(float)) == 1.0)
            levels.append(ScaleLevel(factor=factor, intrinsics=K_level, rays=rays, fov=fov,
                                     images=images, alpha=weights.alpha))

        relative = {(i, j): relative_pose(poses, i, j)
                    for i in range(n_frames) for j in range(n_frames) if i != j}
        return cls(levels=levels, relative=relative, weights=weights, n_frames=n_frames)


class _PairWarp(NamedTuple):
    coords: np.ndarray
    valid: np.ndarray
    jac: Optional[np.ndarray]
    distance: np.ndarray
    radial: np.ndarray


class _LevelPass:
    """Loss terms of one pyramid level with gradient accumulation into its maps."""

    def __init__(self, context: ObjectiveContext, index: int, maps: List[np.ndarray], with_gradient: bool):
        self.context = context
        self.index = index
        self.level = context.levels[index]
        self.maps = maps
        self.with_gradient = with_gradient
        self.grads = [np.zeros_like(m) for m in maps] if with_gradient else None
        self._warps: Dict[Tuple[int, int], _PairWarp] = {}

    def warp(self, a: int, b: int) -> _PairWarp:
        key = (a, b)
        if key in self._warps:
            return self._warps[key]
        T = self.context.relative[key]
        level = self.level
        depth = self.maps[a]
        cloud = PointCloud(points=level.rays * depth[..., None], valid=level.fov, rays=level.rays)
        flow = reproject(cloud, T, level.intrinsics)

        if np.any(T.translation):
            moved = transform_points(T, cloud.points)
            distance = np.linalg.norm(moved, axis=-1)
            safe = np.where(distance > 0, distance, 1.0)
            radial = np.sum(moved * (level.rays @ T.rotation.T), axis=-1) / safe
        else:
            # rigid rotations keep |X| = D
            distance = depth
            radial = np.ones_like(depth)

        jac = None
        if self.with_gradient:
            with np.errstate(invalid="ignore", divide="ignore"):
                jac = flow_jacobian(cloud, T, level.intrinsics)
            jac = np.where(flow.valid[..., None] & np.isfinite(jac), jac, 0.0)

        result = _PairWarp(coords=flow.coords, valid=flow.valid, jac=jac, distance=distance, radial=radial)
        self._warps[key] = result
        return result

    def photometric(self, term: str, target: int, sources: Sequence[int], use_automask: bool,
                    frozen: Optional[FrozenSelection], coef: float, state: SelectionState,
                    diagnostics: Optional[Dict[str, np.ndarray]]) -> float:
        alpha = self.context.weights.alpha
        x = self.level.images[target]
        pes, valids, samples, stats, warps = [], [], [], [], []
        for s in sources:
            w = self.warp(target, s)
            sample = sample_bilinear(self.level.images[s], w.coords, w.valid, self.level.fov)
            pe, st = _pe(x, sample.values, sample.valid, alpha)
            pes.append(pe)
            valids.append(sample.valid)
            samples.append(sample)
            stats.append(st)
            warps.append(w)
        pe_stack = np.stack(pes)
        valid_stack = np.stack(valids)

        omega = None
        if frozen is None:
            if use_automask:
                warped = np.where(valid_stack, pe_stack, np.inf).min(axis=0)
                static = np.min([self.level.static_pe(target, s) for s in sources], axis=0)
                omega = warped < static
            else:
                omega = np.ones(x.shape[:2], dtype=bool)
            try:
                value, frozen = _select(pe_stack, valid_stack, omega, self.context.weights.clip_percentile)
            except NoSupervisedPixelsError:
                logger.warning(f"Level {self.index}: no supervised pixels for {term} target frame {target}, "
                               f"photometric term set to 0")
                empty = np.zeros(x.shape[:2], dtype=bool)
                frozen = FrozenSelection(choice=np.full(x.shape[:2], -1), supervised=empty,
                                         clipped=empty, threshold=0.0)
                value = 0.0
        else:
            value = _frozen_value(pe_stack, frozen)
        state.entries[(self.index, term, target)] = frozen

        if diagnostics is not None:
            for s, pe, valid in zip(sources, pes, valids):
                diagnostics[f"pe/{term}/{target}<-{s}"] = pe
                diagnostics[f"mask/{target}<-{s}"] = valid
            if omega is not None:
                diagnostics[f"omega/{term}/{target}"] = omega

        if self.with_gradient and frozen.supervised.any():
            n = int(frozen.supervised.sum())
            active = frozen.supervised & ~frozen.clipped
            for k in range(len(sources)):
                G = np.where(active & (frozen.choice == k), coef / n, 0.0)
                if not G.any():
                    continue
                sample = samples[k]
                grad_y = _pe_backward(G, x, sample.values, sample.valid, alpha, stats[k])
                jac = warps[k].jac
                dI = sample.d_du * jac[..., 0:1] + sample.d_dv * jac[..., 1:2]
                self.grads[target] += np.sum(grad_y * dI, axis=2)
        return value

    def consistency(self, coef: float) -> float:
        n_frames = self.context.n_frames
        pieces = []
        total = 0.0
        count = 0
        for t in range(n_frames):
            for t2 in range(t + 1, n_frames):
                for a, b in ((t, t2), (t2, t)):
                    w = self.warp(a, b)
                    read = sample_bilinear(self.maps[b][..., None], w.coords, w.valid, self.level.fov)
                    diff = w.distance - read.values[..., 0]
                    total += float(np.abs(diff[read.valid]).sum())
                    count += int(read.valid.sum())
                    pieces.append((a, b, w, read, diff))
        if count == 0:
            return 0.0

        if self.with_gradient:
            for a, b, w, read, diff in pieces:
                r = np.where(read.valid, np.sign(diff), 0.0) * (coef / count)
                d_read = read.d_du[..., 0] * w.jac[..., 0] + read.d_dv[..., 0] * w.jac[..., 1]
                self.grads[a] += r * (w.radial - d_read)
                self.grads[b] += scatter_bilinear(-r, read, self.maps[b].shape)
        return total / count

    def smoothness(self, coef: float) -> float:
        n_frames = self.context.n_frames
        values = []
        for f, depth in enumerate(self.maps):
            value, grad = _smoothness(depth, self.level.images[f], self.with_gradient)
            values.append(value)
            if grad is not None:
                self.grads[f] += grad * (coef / n_frames)
        return float(np.mean(values))


@dataclass
class ObjectiveEvaluation:
    report: LossReport
    selection: SelectionState
    gradients: Optional[List[List[np.ndarray]]] = None


def _level_maps(D_pyramids: Sequence[Sequence[Union[DistanceMap, np.ndarray]]], index: int) -> List[np.ndarray]:
    return [np.asarray(p[index].data if isinstance(p[index], DistanceMap) else p[index], dtype=float)
            for p in D_pyramids]


def photometric_pairs(n_frames: int) -> Tuple[int, List[int]]:
    """Center frame and its existing neighbours."""
    center = n_frames // 2
    return center, [s for s in (center - 1, center + 1) if 0 <= s < n_frames]


def evaluate_objective(context: ObjectiveContext, D_pyramids, iteration: int = 0, with_gradient: bool = False,
                       selection: Optional[SelectionState] = None, keep_maps: bool = False) -> ObjectiveEvaluation:
    """
    Evaluate the total loss and optionally its gradient.

    Args:
        context: Snippet geometry from ObjectiveContext.build
        D_pyramids: Per frame, the distance maps of every pyramid level
        iteration: Optimizer iteration, decides whether the automask is on
        with_gradient: Also return dL/dD per frame and level
        selection: Reuse these discrete choices instead of recomputing them
        keep_maps: Attach the finest-level diagnostic maps to the report

    Returns:
        ObjectiveEvaluation
    """
    weights = context.weights
    n_levels = len(context.levels)
    if len(D_pyramids) != context.n_frames:
        raise ValueError(f"Got {len(D_pyramids)} distance pyramids for {context.n_frames} frames")
    if any(len(p) < n_levels for p in D_pyramids):
        raise ValueError(f"Every distance pyramid needs {n_levels} levels")

    use_automask = automask_active(weights, iteration)
    state = SelectionState()
    center, neighbours = photometric_pairs(context.n_frames)
    maps_out: Dict[str, np.ndarray] = {}
    scales = []
    gradients = [[None] * n_levels for _ in range(context.n_frames)] if with_gradient else None

    for index in range(n_levels):
        maps = _level_maps(D_pyramids, index)
        for f, m in enumerate(maps):
            if m.shape != context.levels[index].fov.shape:
                raise ValueError(f"Level {index} map of frame {f} has shape {m.shape}, "
                                 f"expected {context.levels[index].fov.shape}")
        level_pass = _LevelPass(context, index, maps, with_gradient)
        decay = 2.0 ** index
        diagnostics = maps_out if keep_maps and index == 0 else None

        def frozen(term, target):
            return selection.get(index, term, target) if selection is not None else None

        L_pf = level_pass.photometric("forward", center, neighbours, use_automask, frozen("forward", center),
                                      1.0 / decay, state, diagnostics)
        L_pb = 0.0
        for target in neighbours:
            L_pb += level_pass.photometric("backward", target, [center], use_automask, frozen("backward", target),
                                           1.0 / (decay * len(neighbours)), state, diagnostics)
        L_pb /= len(neighbours)
        L_dc = level_pass.consistency(weights.gamma / decay)
        L_s = level_pass.smoothness(weights.beta / (decay if weights.decay_smoothness else 1.0))
        scales.append(ScaleBreakdown(L_p_forward=L_pf, L_p_backward=L_pb, L_s=L_s, L_dc=L_dc))

        if with_gradient:
            for f in range(context.n_frames):
                gradients[f][index] = level_pass.grads[f]

    report = LossReport(scales=scales, weights=weights, automask_active=use_automask, maps=maps_out)
    return ObjectiveEvaluation(report=report, selection=state, gradients=gradients)


def csdc_loss(snippet, D_maps: Sequence[DistanceMap], poses: Sequence[Pose],
              K: Optional[FisheyeIntrinsics] = None, lut: Optional[ThetaLUT] = None) -> float:
    """
    Cross-sequence distance consistency at full resolution.

    For every ordered pair (a, b) the distance of each transformed point,
    |T_{a->b} X_a(p)|, is compared with the bilinear read of D_b at its
    reprojection. Absolute differences are summed over the ego masks and
    divided by the total number of valid pixels.

    Raises:
        PoseError: If a frame has no pose
    """
    if len(D_maps) != len(snippet.images):
        raise ValueError(f"Got {len(D_maps)} distance maps for {len(snippet.images)} frames")
    context = ObjectiveContext.build(snippet, poses, LossWeights(), n_levels=1, intrinsics=K, lut=lut)
    return _LevelPass(context, 0, _level_maps([[D] for D in D_maps], 0), False).consistency(1.0)


def total_loss(snippet, D_pyramids, poses: Sequence[Pose], W: LossWeights = LossWeights(),
               iteration: int = 0, context: Optional[ObjectiveContext] = None) -> LossReport:
    """
    Multi-scale forward and backward loss of a snippet.

    Args:
        snippet: SequenceSnippet
        D_pyramids: Per frame, W.n_scales distance maps from build_pyramid
        poses: World-from-camera poses, one per frame
        W: Loss weights
        iteration: Optimizer iteration; the automask is off before W.automask_warmup
        context: Prebuilt ObjectiveContext to skip the geometry setup

    Returns:
        LossReport with diagnostic maps of the finest level
    """
    if context is None:
        context = ObjectiveContext.build(snippet, poses, W)
    return evaluate_objective(context, D_pyramids, iteration=iteration, keep_maps=True).report
