"""
Distance evaluation metrics (abs rel, sq rel, RMSE, RMSE log, delta thresholds).
"""

import logging
from dataclasses import asdict, dataclass
from typing import Dict, Iterable, List, Union

import numpy as np

from fdnet.errors import FdnetError
from fdnet.warp import DistanceMap

logger = logging.getLogger(__name__)

DELTA_BASE = 1.25

CAP_PRESETS = (30.0, 40.0, 80.0)


@dataclass(frozen=True)
class MetricsReport:
    abs_rel: float
    sq_rel: float
    rmse: float
    rmse_log: float
    delta1: float
    delta2: float
    delta3: float
    n_pixels: int
    cap: float
    median_scaled: bool

    def to_dict(self) -> Dict[str, Union[float, int, bool]]:
        return asdict(self)


def cap_presets() -> List[float]:
    """Distance caps (meters) used for batch evaluation."""
    return list(CAP_PRESETS)


def _lower_median(values: np.ndarray) -> float:
    ordered = np.sort(values)
    return float(ordered[(ordered.size - 1) // 2])


def evaluate(pred: Union[DistanceMap, np.ndarray], gt: Union[DistanceMap, np.ndarray], cap: float = 80.0,
             median_scale: bool = False) -> MetricsReport:
    """
    Compare a predicted distance map with ground truth.

    Pixels with 0 < gt <= cap are evaluated. With median_scale the prediction
    is multiplied by median(gt) / median(pred) over those pixels, where the
    median of an even count is the lower-middle element.

    Raises:
        ValueError: If the shapes differ
        FdnetError: If no pixel is valid
    """
    pred = np.asarray(pred.data if isinstance(pred, DistanceMap) else pred, dtype=float)
    gt = np.asarray(gt.data if isinstance(gt, DistanceMap) else gt, dtype=float)
    if pred.shape != gt.shape:
        raise ValueError(f"Prediction shape {pred.shape} does not match ground truth {gt.shape}")

    valid = np.isfinite(gt) & (gt > 0) & (gt <= cap)
    n = int(valid.sum())
    if n == 0:
        raise FdnetError(f"No ground-truth pixels in (0, {cap}] m")
    p = pred[valid]
    g = gt[valid]
    if median_scale:
        p = p * (_lower_median(g) / _lower_median(p))
    if np.any(p <= 0) or not np.all(np.isfinite(p)):
        raise FdnetError("Predicted distances must be positive and finite on the evaluated pixels")

    diff = p - g
    ratio = np.maximum(p / g, g / p)
    return MetricsReport(
        abs_rel=float(np.mean(np.abs(diff) / g)),
        sq_rel=float(np.mean(diff ** 2 / g)),
        rmse=float(np.sqrt(np.mean(diff ** 2))),
        rmse_log=float(np.sqrt(np.mean((np.log(p) - np.log(g)) ** 2))),
        delta1=float(np.mean(ratio < DELTA_BASE)),
        delta2=float(np.mean(ratio < DELTA_BASE ** 2)),
        delta3=float(np.mean(ratio < DELTA_BASE ** 3)),
        n_pixels=n,
        cap=float(cap),
        median_scaled=median_scale,
    )


def evaluate_caps(pred, gt, caps: Iterable[float] = CAP_PRESETS, median_scale: bool = False) -> Dict[float, MetricsReport]:
    """Evaluate at several caps; caps without valid pixels are skipped with a warning."""
    reports = {}
    for cap in caps:
        try:
            reports[float(cap)] = evaluate(pred, gt, cap, median_scale)
        except FdnetError as e:
            logger.warning(f"Cap {cap} m skipped: {e}")
    return reports
