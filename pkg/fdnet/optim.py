"""
Direct optimization of per-pixel distance maps against the total loss.

Stands in for a trained distance network: every frame of the snippet owns a
distance variable that is updated by fixed-step gradient descent, by default
on log-distance so the maps stay positive.
"""

import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from fdnet.camera import DEFAULT_LUT_ENTRIES, MAX_DISTANCE, MIN_DISTANCE
from fdnet.errors import ConfigError, DegenerateBaselineError
from fdnet.losses import LossReport, LossWeights, ObjectiveContext, build_pyramid, evaluate_objective
from fdnet.se3 import MIN_BASELINE, Pose, relative_pose
from fdnet.warp import DistanceMap, upsample_gradient

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class OptimConfig:
    iterations: int = 2000
    step_size: float = 0.1
    init_distance: float = 5.0
    weights: LossWeights = field(default_factory=LossWeights)
    optimize_log_distance: bool = True
    seed: int = 0
    init_jitter: float = 0.0
    log_every: int = 100
    lut_entries: int = DEFAULT_LUT_ENTRIES
    # stop once the total falls by less than tolerance (relative) over patience
    # iterations with the automask on; 0 runs every iteration
    tolerance: float = 1e-4
    patience: int = 50

    def __post_init__(self):
        if self.iterations < 1:
            raise ConfigError(f"iterations must be >= 1, got {self.iterations}")
        if not self.step_size > 0:
            raise ConfigError(f"step_size must be positive, got {self.step_size}")
        if not self.init_distance > 0:
            raise ConfigError(f"init_distance must be positive, got {self.init_distance}")
        if self.init_jitter < 0:
            raise ConfigError(f"init_jitter must be >= 0, got {self.init_jitter}")
        if self.tolerance < 0 or self.patience < 1:
            raise ConfigError(f"Need tolerance >= 0 and patience >= 1, got {self.tolerance}, {self.patience}")


@dataclass
class OptimResult:
    """Optimized maps of every frame plus the per-iteration loss trace."""

    distances: List[DistanceMap]
    trace: List[float]
    photometric_trace: List[float]
    report: LossReport

    @property
    def center(self) -> DistanceMap:
        return self.distances[len(self.distances) // 2]

    def to_dict(self) -> Dict:
        return {
            "iterations": len(self.trace),
            "trace": self.trace,
            "photometric_trace": self.photometric_trace,
            "final": self.report.to_dict(),
        }


def _pyramids(maps: Sequence[np.ndarray], n_levels: int) -> List[List[DistanceMap]]:
    return [build_pyramid(DistanceMap(m), n_levels) for m in maps]


def _fold_levels(level_grads: Sequence[np.ndarray]) -> np.ndarray:
    """Chain per-level gradients back to full resolution."""
    total = np.array(level_grads[0], dtype=float)
    for index in range(1, len(level_grads)):
        total += upsample_gradient(level_grads[index], 2 ** index)
    return total


def _converged(trace: Sequence[float], cfg: OptimConfig) -> bool:
    """Relative decrease of the total over the last cfg.patience iterations below cfg.tolerance."""
    if cfg.tolerance <= 0 or len(trace) <= cfg.weights.automask_warmup + cfg.patience:
        return False
    before = trace[-1 - cfg.patience]
    return before - trace[-1] <= cfg.tolerance * abs(before)


def loss_gradient(
snippet, D: Sequence[DistanceMap], poses: Sequence[Pose], W: LossWeights = LossWeights(),
                  iteration: int = 0, context: Optional[ObjectiveContext] = None) -> List[np.ndarray]:
    """
    Exact gradient of the total loss with respect to every full-resolution distance entry.

    The coarser pyramid levels are 2x2 averages of D, so their gradients are
    spread back with upsample_gradient. Clipped photometric values and pixels
    removed by the automask contribute no photometric gradient.

    Args:
        snippet: SequenceSnippet
        D: Full-resolution distance map per frame
        poses: World-from-camera poses
        W: Loss weights
        iteration: Optimizer iteration (automask on from W.automask_warmup)
        context: Prebuilt ObjectiveContext

    Returns:
        List of (H, W) gradient arrays, one per frame
    """
    context = context or ObjectiveContext.build(snippet, poses, W)
    evaluation = evaluate_objective(context, _pyramids([d.data for d in D], len(context.levels)),
                                    iteration=iteration, with_gradient=True)
    return [_fold_levels(g) for g in evaluation.gradients]


def check_baselines(poses: Sequence[Pose], min_baseline: float = MIN_BASELINE) -> None:
    """
    Raises:
        DegenerateBaselineError: If two adjacent frames share a camera center
    """
    for i in range(len(poses) - 1):
        norm = relative_pose(poses, i, i + 1).translation_norm
        if norm <= min_baseline:
            raise DegenerateBaselineError(
                f"degenerate baseline between frames {i} and {i + 1}: {norm:.3g} m, scale cannot be resolved"
            )


def optimize_distance(snippet, poses: Sequence[Pose], cfg: OptimConfig = OptimConfig(),
                      init: Optional[Sequence[DistanceMap]] = None,
                      callback: Optional[Callable[[int, LossReport], None]] = None) -> OptimResult:
    """
    Fixed-step gradient descent on the distance maps of all frames.

    The step is taken per pixel: the mean-reduced gradient is multiplied by
    the pixel count, so step_size does not depend on the resolution. Maps are
    kept inside [MIN_DISTANCE, MAX_DISTANCE]. The run ends after
    cfg.iterations steps or earlier once the total has converged.

    Args:
        snippet: SequenceSnippet with textured frames
        poses: Ground-truth or odometry-scaled world-from-camera poses
        cfg: Optimizer settings
        init: Starting maps (constant cfg.init_distance when None)
        callback: Called with (iteration, report) after every evaluation

    Returns:
        OptimResult

    Raises:
        DegenerateBaselineError: If adjacent poses have no translation
    """
    check_baselines(poses)
    context = ObjectiveContext.build(snippet, poses, cfg.weights, lut_entries=cfg.lut_entries)
    n_levels = len(context.levels)
    height, width = snippet.images[0].shape
    pixel_count = height * width

    rng = np.random.default_rng(cfg.seed)
    if init is not None:
        maps = [np.array(d.data, dtype=float) for d in init]
    else:
        maps = [np.full((height, width), cfg.init_distance) for _ in range(snippet.n_frames)]
        if cfg.init_jitter > 0:
            maps = [m * np.exp(cfg.init_jitter * rng.standard_normal(m.shape)) for m in maps]
    maps = [np.clip(m, MIN_DISTANCE, MAX_DISTANCE) for m in maps]

    logger.info(f"Optimizing {snippet.n_frames} distance maps of {width}x{height} for {cfg.iterations} iterations "
                f"({'log' if cfg.optimize_log_distance else 'linear'} distance, step {cfg.step_size})")

    trace: List[float] = []
    photometric_trace: List[float] = []
    for iteration in range(cfg.iterations):
        evaluation = evaluate_objective(context, _pyramids(maps, n_levels), iteration=iteration, with_gradient=True)
        report = evaluation.report
        trace.append(report.total)
        photometric_trace.append(report.photometric)
        if callback is not None:
            callback(iteration, report)
        if cfg.log_every and iteration % cfg.log_every == 0:
            logger.info(f"Iteration {iteration}/{cfg.iterations}: total={report.total:.6f} "
                        f"photometric={report.photometric:.6f}")
        if _converged(trace, cfg):
            logger.info(f"Converged at iteration {iteration}: total fell by less than {cfg.tolerance:g} "
                        f"over {cfg.patience} iterations")
            break

        for f, level_grads in enumerate(evaluation.gradients):
            grad = _fold_levels(level_grads) * pixel_count
            if cfg.optimize_log_distance:
                log_d = np.log(maps[f]) - cfg.step_size * grad * maps[f]
                maps[f] = np.exp(np.clip(log_d, np.log(MIN_DISTANCE), np.log(MAX_DISTANCE)))
            else:
                maps[f] = np.clip(maps[f] - cfg.step_size * grad, MIN_DISTANCE, MAX_DISTANCE)

    final = evaluate_objective(context, _pyramids(maps, n_levels), iteration=len(trace), keep_maps=True).report
    logger.info(f"Finished: total={final.total:.6f} photometric={final.photometric:.6f} "
                f"(initial {trace[0]:.6f} / {photometric_trace[0]:.6f})")
    return OptimResult(distances=[DistanceMap(m) for m in maps], trace=trace,
                       photometric_trace=photometric_trace, report=final)


class FrozenObjective(NamedTuple):
    """Objective over the flattened maps of all frames, selections fixed at x0."""

    fn: Callable[[np.ndarray], Tuple[float, np.ndarray]]
    x0: np.ndarray
    shape: Tuple[int, ...]


def frozen_objective(snippet, D: Sequence[DistanceMap], poses: Sequence[Pose], W: LossWeights = LossWeights(),
                     iteration: int = 0, context: Optional[ObjectiveContext] = None) -> FrozenObjective:
    """
    The total loss on the smooth branch selected at D.

    Clip membership, the per-pixel source choice and the automask are taken
    from an evaluation at D and reused for every call, so the closure is
    differentiable around D and its gradient equals loss_gradient there.

    Returns:
        FrozenObjective whose fn maps an array of shape (N, H, W) to (value, gradient)
    """
    context = context or ObjectiveContext.build(snippet, poses, W)
    n_levels = len(context.levels)
    x0 = np.stack([np.array(d.data, dtype=float) for d in D])
    base = evaluate_objective(context, _pyramids(list(x0), n_levels), iteration=iteration)

    def fn(x: np.ndarray) -> Tuple[float, np.ndarray]:
        x = np.asarray(x, dtype=float).reshape(x0.shape)
        evaluation = evaluate_objective(context, _pyramids(list(x), n_levels), iteration=iteration,
                                        with_gradient=True, selection=base.selection)
        grad = np.stack([_fold_levels(g) for g in evaluation.gradients])
        return evaluation.report.total, grad

    return FrozenObjective(fn=fn, x0=x0, shape=x0.shape)


@dataclass
class GradCheckEntry:
    index: Tuple[int, ...]
    analytic: float
    numeric: float
    rel_error: float


@dataclass
class GradCheckReport:
    max_rel_error: float
    median_rel_error: float
    worst_index: Tuple[int, ...]
    epsilon: float
    entries: List[GradCheckEntry]

    def to_dict(self) -> Dict:
        return {
            "max_rel_error": self.max_rel_error,
            "median_rel_error": self.median_rel_error,
            "worst_index": list(self.worst_index),
            "epsilon": self.epsilon,
            "n_samples": len(self.entries),
            "entries": [{**asdict(e), "index": list(e.index)} for e in self.entries],
        }


def grad_check(loss_fn: Callable[[np.ndarray], Tuple[float, np.ndarray]], D: np.ndarray, epsilon: float = 1e-6,
               n_samples: int = 50, seed: int = 0, min_scale: float = 1e-6) -> GradCheckReport:
    """
    Compare the analytic gradient with central differences at sampled entries.

    The step for entry j is epsilon * max(|D_j|, 1). The relative error is
    |g - g_fd| / max(|g|, |g_fd|, min_scale).

    Args:
        loss_fn: x -> (value, gradient), gradient shaped like x
        D: Point to check at
        epsilon: Relative finite-difference step (> 0)
        n_samples: Entries to sample (all when larger than D)
        seed: Sampling seed
        min_scale: Floor of the relative-error denominator

    Returns:
        GradCheckReport

    Raises:
        ValueError: If epsilon <= 0
    """
    if not epsilon > 0:
        raise ValueError(f"grad_check needs epsilon > 0, got {epsilon}")
    x0 = np.array(D, dtype=float)
    _, analytic = loss_fn(x0.copy())
    analytic = np.asarray(analytic, dtype=float).reshape(x0.shape)

    rng = np.random.default_rng(seed)
    count = min(n_samples, x0.size)
    flat_indices = np.sort(rng.choice(x0.size, size=count, replace=False))
    logger.info(f"Checking {count} of {x0.size} gradient entries, epsilon={epsilon:g}")

    entries = []
    for flat in flat_indices:
        index = tuple(int(i) for i in np.unravel_index(flat, x0.shape))
        h = epsilon * max(abs(x0[index]), 1.0)
        x = x0.copy()
        x[index] = x0[index] + h
        f_plus = loss_fn(x)[0]
        x[index] = x0[index] - h
        f_minus = loss_fn(x)[0]
        numeric = (f_plus - f_minus) / (2.0 * h)
        g = float(analytic[index])
        rel = abs(g - numeric) / max(abs(g), abs(numeric), min_scale)
        entries.append(GradCheckEntry(index=index, analytic=g, numeric=float(numeric), rel_error=float(rel)))

    errors = np.array([e.rel_error for e in entries])
    worst = entries[int(np.argmax(errors))]
    report = GradCheckReport(
        max_rel_error=float(errors.max()),
        median_rel_error=float(np.sort(errors)[(len(errors) - 1) // 2]),
        worst_index=worst.index,
        epsilon=epsilon,
        entries=entries,
    )
    logger.info(f"Gradient check: max rel error {report.max_rel_error:.3e} at {worst.index}, "
                f"median {report.median_rel_error:.3e}")
    return report
