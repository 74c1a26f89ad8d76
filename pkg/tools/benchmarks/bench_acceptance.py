#!/usr/bin/env python3
"""
Acceptance benchmark: recover metric distance from rendered snippets.

For each motion step the default scene is rendered, poses are scaled by the
synthesized odometry and the distance maps are optimized from a constant
start. Reports median relative error, abs rel within 30 m, wall time and
peak traced memory.

    python tools/benchmarks/bench_acceptance.py --iterations 500
"""

import argparse
import json
import logging
import os
import sys
import time
import tracemalloc
from typing import Dict, List

import numpy as np
from tabulate import tabulate

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))))

from fdnet.camera import reference_intrinsics  # noqa: E402
from fdnet.losses import LossWeights  # noqa: E402
from fdnet.metrics import evaluate  # noqa: E402
from fdnet.optim import OptimConfig, optimize_distance  # noqa: E402
from fdnet.se3 import odometry_scaled_poses  # noqa: E402
from fdnet.synth import default_scene, make_snippet, straight_trajectory  # noqa: E402
from utils.file_management import get_export_path  # noqa: E402

logger = logging.getLogger('bench_acceptance')

STEPS = (0.125, 0.25, 0.5)


def run_benchmark(step: float, iterations: int, width: int = 64, height: int = 40, n_scales: int = 4) -> Dict:
    """
    Render, optimize and score one snippet.

    Args:
        step: Lateral camera motion per frame (meters)
        iterations: Optimizer iterations
        width: Image width
        height: Image height
        n_scales: Pyramid depth

    Returns:
        Dict with the row of the result table
    """
    K = reference_intrinsics(width, height)
    snippet = make_snippet(default_scene(), K, straight_trajectory(step, 10.0 * step, 3, direction=(1.0, 0.0, 0.0)))
    poses = odometry_scaled_poses(snippet.poses, snippet.odometry)
    cfg = OptimConfig(iterations=iterations, weights=LossWeights(n_scales=n_scales), log_every=0)

    tracemalloc.start()
    start = time.time()
    result = optimize_distance(snippet, poses, cfg)
    elapsed = time.time() - start
    _, peak = tracemalloc.get_traced_memory()
    tracemalloc.stop()

    gt = snippet.distances[1].data
    hit = snippet.hits[1] >= 0
    median_rel = float(np.median(np.abs(result.center.data[hit] - gt[hit]) / gt[hit]))
    report = evaluate(result.center, snippet.distances[1], cap=30.0)
    return dict(
        step_m=step,
        size=f"{width}x{height}",
        iterations=iterations,
        median_rel=round(median_rel, 4),
        abs_rel_30m=round(report.abs_rel, 4),
        delta1=round(report.delta1, 3),
        loss_start=round(result.trace[0], 5),
        loss_end=round(result.report.total, 5),
        elapsed_s=round(elapsed, 1),
        peak_ram_mb=round(peak / 1e6, 1),
    )


def main() -> int:
    parser = argparse.ArgumentParser(description="Distance recovery benchmark on rendered snippets")
    parser.add_argument("--iterations", type=int, default=2000)
    parser.add_argument("--width", type=int, default=64)
    parser.add_argument("--height", type=int, default=40)
    parser.add_argument("--steps", type=float, nargs="+", default=list(STEPS), help="Motion per frame (meters)")
    parser.add_argument("--output", help="Results JSON (default: output/exports/)")
    args = parser.parse_args()

    logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')

    results: List[Dict] = []
    for step in args.steps:
        logger.info(f"Running step {step} m, {args.iterations} iterations")
        results.append(run_benchmark(step, args.iterations, args.width, args.height))

    output = args.output or get_export_path("benchmark_acceptance", {"iters": args.iterations}, extension="json")
    with open(output, "w") as f:
        json.dump(results, f, indent=2)
    print(tabulate(results, headers="keys", tablefmt="psql"))
    print(f"Results saved to {output}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
