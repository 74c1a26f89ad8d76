#!/usr/bin/env python3
"""
Command-line interface.

    python -m fdnet project   --intrinsics k.json --point 0 0 1
    python -m fdnet unproject --intrinsics k.json --pixel 31.5 19.5 --distance 5
    python -m fdnet rectify   image.pgm --intrinsics k.json --mode cylindrical --out flat.pgm
    python -m fdnet render    --out bundle/ [--scene scene.json] [--config config/default_config.json]
    python -m fdnet warp      bundle/ --target 1 --source 0 --out recon.pgm
    python -m fdnet optimize  bundle/ --out distance.pfm --trace trace.json
    python -m fdnet gradcheck bundle/ --samples 50
    python -m fdnet eval      pred.pfm gt.pfm --cap 40

Numeric results go to stdout as JSON, logs go to stderr. Exit codes: 0 on
success, 1 on usage errors, 2 on data errors.
"""

import logging
import math
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
import typer

from fdnet.camera import (
    CylindricalSpec,
    FisheyeIntrinsics,
    PinholeIntrinsics,
    build_theta_lut,
    load_intrinsics,
    project_fisheye,
    project_pinhole,
    rectification_map,
    reference_intrinsics,
    unproject_fisheye,
    unproject_pinhole,
)
from fdnet.config_loader import ConfigLoader
from fdnet.errors import BundleError, FdnetError
from fdnet.fileio import (
    read_bundle,
    read_image,
    read_pfm,
    read_pfm_array,
    write_bundle,
    write_image,
    write_json,
    write_pfm,
)
from fdnet.losses import LossWeights, ObjectiveContext, total_loss, build_pyramid
from fdnet.metrics import evaluate
from fdnet.optim import OptimConfig, frozen_objective, grad_check, optimize_distance
from fdnet.se3 import odometry_scaled_poses, parse_pose, relative_pose
from fdnet.synth import BUILTIN_SCENES, load_scene, make_snippet, straight_trajectory
from fdnet.warp import DistanceMap, Image, apply_rectification, synthesize_view
from utils.file_management import get_export_path, get_log_path, get_visualization_path

logger = logging.getLogger("fdnet")

app = typer.Typer(help="Fisheye distance estimation toolkit.", add_completion=False)


def configure_logging(verbose: bool = False, log_file: bool = False) -> None:
    """Send logs to stderr (stdout carries JSON) and optionally to a dated log file."""
    handlers: List[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if log_file:
        handlers.append(logging.FileHandler(get_log_path("fdnet")))
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=handlers,
        force=True,
    )


@app.callback()
def main_options(
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Debug logging"),
    log_file: bool = typer.Option(False, "--log-file", help="Also log to output/logs/"),
):
    """Fisheye distance estimation toolkit."""
    configure_logging(verbose, log_file)


def _load_config(path: Optional[str]) -> Optional[ConfigLoader]:
    return ConfigLoader(path) if path else None


def _save_diagnostics(maps, viz_type: str, description: str) -> List[str]:
    written = []
    for name, data in maps.items():
        values = np.clip(np.asarray(data, dtype=float), 0.0, 1.0)
        label = name.replace("/", "-").replace("<-", "from")
        path = get_visualization_path(viz_type, f"{description}_{label}", extension="pgm")
        write_image(path, Image(values))
        written.append(path)
    logger.info(f"Wrote {len(written)} diagnostic maps")
    return written


@app.command()
def project(
    intrinsics: str = typer.Option(..., "--intrinsics", help="Intrinsics JSON file"),
    point: Tuple[float, float, float] = typer.Option(..., "--point", help="Camera-frame point X Y Z (meters)"),
):
    """Project one camera-frame point to pixel coordinates."""
    K = load_intrinsics(intrinsics)
    X = np.array(point, dtype=float)
    if isinstance(K, FisheyeIntrinsics):
        pixel, valid = project_fisheye(X, K)
    else:
        pixel, valid = project_pinhole(X, K)
    u, v = (None, None) if np.any(np.isnan(pixel)) else (float(pixel[0]), float(pixel[1]))
    write_json({"u": u, "v": v, "valid": bool(valid)})


@app.command()
def unproject(
    intrinsics: str = typer.Option(..., "--intrinsics", help="Intrinsics JSON file"),
    pixel: Tuple[float, float] = typer.Option(..., "--pixel", help="Pixel u v"),
    distance: float = typer.Option(..., "--distance", help="Euclidean distance (fisheye) or depth (pinhole), meters"),
):
    """Lift one pixel to a camera-frame point."""
    K = load_intrinsics(intrinsics)
    p = np.array(pixel, dtype=float)
    if isinstance(K, FisheyeIntrinsics):
        X = unproject_fisheye(p, distance, K, build_theta_lut(K))
    else:
        X = unproject_pinhole(p, distance, K)
    write_json({"x": float(X[0]), "y": float(X[1]), "z": float(X[2])})


@app.command()
def rectify(
    image: str = typer.Argument(..., help="Fisheye image (PGM/PPM/PNG)"),
    intrinsics: str = typer.Option(..., "--intrinsics", help="Fisheye intrinsics JSON file"),
    out: str = typer.Option(None, "--out", help="Output image (default: output/visualizations/rectify/)"),
    mode: str = typer.Option("rectilinear", "--mode", help="rectilinear or cylindrical"),
    width: int = typer.Option(0, "--width", help="Output width (default: input width)"),
    height: int = typer.Option(0, "--height", help="Output height (default: input height)"),
    fov: float = typer.Option(120.0, "--fov", help="Horizontal field of view of the output, degrees"),
):
    """Undistort a fisheye image to a rectilinear or cylindrical view."""
    K = load_intrinsics(intrinsics)
    if not isinstance(K, FisheyeIntrinsics):
        raise FdnetError("rectify needs fisheye intrinsics")
    width = width or K.width
    height = height or K.height
    c_x, c_y = (width - 1) / 2.0, (height - 1) / 2.0
    half_fov = math.radians(fov) / 2.0
    if mode == "rectilinear":
        if not 0 < half_fov < math.pi / 2:
            raise FdnetError(f"Rectilinear field of view must lie in (0, 180) degrees, got {fov}")
        f = (width / 2.0) / math.tan(half_fov)
        target = PinholeIntrinsics(f_x=f, f_y=f, c_x=c_x, c_y=c_y, width=width, height=height)
    elif mode == "cylindrical":
        f = (width / 2.0) / half_fov
        target = CylindricalSpec(f_x=f, f_y=f, c_x=c_x, c_y=c_y, width=width, height=height)
    else:
        raise typer.BadParameter(f"Unknown mode {mode!r}, use rectilinear or cylindrical", param_hint="--mode")

    grid = rectification_map(K, target, mode)
    result, mask = apply_rectification(read_image(image), grid)
    suffix = "pgm" if result.channels == 1 else "ppm"
    out = out or get_visualization_path("rectify", Path(image).stem, {"mode": mode}, extension=suffix)
    write_image(out, result)
    logger.info(f"Rectified {image} ({mode}) -> {out}")
    write_json({"output": str(out), "mode": mode, "valid_fraction": mask.fraction})


@app.command()
def render(
    out: str = typer.Option(..., "--out", help="Bundle directory to write"),
    scene: str = typer.Option("default", "--scene", help="Scene JSON file, 'default' or 'dome'"),
    config: Optional[str] = typer.Option(None, "--config", help="Configuration JSON file"),
    intrinsics: Optional[str] = typer.Option(None, "--intrinsics", help="Fisheye intrinsics (default: reference camera)"),
    frames: Optional[int] = typer.Option(None, "--frames", help="Number of frames"),
    step: Optional[float] = typer.Option(None, "--step", help="Motion per frame, meters"),
    speed: Optional[float] = typer.Option(None, "--speed", help="Vehicle speed, m/s"),
    image_format: str = typer.Option("pnm", "--format", help="pnm or png"),
):
    """Render a synthetic snippet into a bundle directory."""
    loader = _load_config(config)
    settings = loader.synth_settings() if loader else {
        "scene": "default", "n_frames": 3, "step": 0.5, "speed": 5.0,
        "direction": [1.0, 0.0, 0.0], "channels": 1, "frame_interval": 0.1,
    }
    if scene != "default":
        settings["scene"] = scene
    n_frames = frames if frames is not None else settings["n_frames"]
    step = step if step is not None else settings["step"]
    speed = speed if speed is not None else settings["speed"]

    if intrinsics:
        K = load_intrinsics(intrinsics)
        if not isinstance(K, FisheyeIntrinsics):
            raise FdnetError("render needs fisheye intrinsics")
    else:
        K = loader.camera() if loader else reference_intrinsics()
    name = settings["scene"]
    world = BUILTIN_SCENES[name]() if name in BUILTIN_SCENES else load_scene(name)
    lut = build_theta_lut(K, loader.lut_entries() if loader else 4096)

    trajectory = straight_trajectory(step, speed, n_frames, settings["direction"])
    snippet = make_snippet(world, K, trajectory, lut=lut, frame_interval=settings["frame_interval"],
                           channels=settings["channels"])
    write_bundle(snippet, out, image_format)
    write_json({
        "output": str(out),
        "frames": snippet.n_frames,
        "size": [K.width, K.height],
        "odometry": [{"t": s.timestamp, "v": s.v} for s in snippet.odometry],
    })


@app.command()
def warp(
    bundle: str = typer.Argument(..., help="Bundle directory"),
    target: int = typer.Option(1, "--target", help="Target frame index"),
    source: int = typer.Option(0, "--source", help="Source frame index"),
    pose: Optional[str] = typer.Option(None, "--pose", help="T_target->source as 'roll pitch yaw tx ty tz'"),
    distance: Optional[str] = typer.Option(None, "--distance", help="Target distance PFM (default: bundle ground truth)"),
    out: Optional[str] = typer.Option(None, "--out", help="Reconstructed image path"),
    diagnostics: bool = typer.Option(False, "--diagnostics", help="Write pe/omega/mask maps"),
):
    """Reconstruct a target frame from a source frame."""
    snippet = read_bundle(bundle)
    n = snippet.n_frames
    if not (0 <= target < n and 0 <= source < n):
        raise FdnetError(f"Frame indices must lie in [0, {n}), got target={target} source={source}")

    if pose is not None:
        T = parse_pose(pose)
    elif snippet.poses is not None:
        T = relative_pose(snippet.poses, target, source)
    else:
        raise BundleError("Bundle has no poses.txt; pass --pose")

    if distance is not None:
        D_t = read_pfm(distance)
    elif snippet.distances is not None:
        D_t = snippet.distances[target]
    else:
        raise BundleError("Bundle has no ground-truth distances; pass --distance")

    K = snippet.intrinsics
    recon, mask = synthesize_view(D_t, snippet.images[source], T, K, build_theta_lut(K))
    diff = np.abs(recon.data - snippet.images[target].data).mean(axis=2)
    mean_error = float(diff[mask.data].mean()) if mask.data.any() else None

    suffix = "pgm" if recon.channels == 1 else "ppm"
    out = out or get_visualization_path("warp", f"recon_t{target}_s{source}", extension=suffix)
    write_image(out, recon)
    result = {"output": str(out), "valid_fraction": mask.fraction, "mean_abs_error": mean_error}

    if diagnostics:
        maps = {"mask": mask.data.astype(float), "abs_error": np.where(mask.data, diff, 0.0)}
        if snippet.poses is not None and snippet.distances is not None and n >= 2:
            weights = LossWeights(n_scales=2)
            pyramids = [build_pyramid(D, weights.n_scales) for D in snippet.distances]
            report = total_loss(snippet, pyramids, snippet.poses, weights, iteration=weights.automask_warmup)
            maps.update(report.maps)
            result["loss"] = report.to_dict()
        result["diagnostics"] = _save_diagnostics(maps, "warp", Path(bundle).name)
    write_json(result)


def _bundle_poses(snippet, scale: str):
    if snippet.poses is None:
        raise BundleError("Bundle has no poses.txt")
    if scale == "odometry":
        return odometry_scaled_poses(snippet.poses, snippet.odometry)
    if scale == "given":
        return list(snippet.poses)
    raise typer.BadParameter(f"Unknown scale source {scale!r}, use odometry or given", param_hint="--scale")


@app.command()
def optimize(
    bundle: str = typer.Argument(..., help="Bundle directory"),
    config: Optional[str] = typer.Option(None, "--config", help="Configuration JSON file"),
    out: Optional[str] = typer.Option(None, "--out", help="Recovered center-frame distance PFM"),
    trace: Optional[str] = typer.Option(None, "--trace", help="Loss trace JSON file"),
    iterations: Optional[int] = typer.Option(None, "--iterations", help="Override optimizer.iterations"),
    step_size: Optional[float] = typer.Option(None, "--step-size", help="Override optimizer.step_size"),
    init_distance: Optional[float] = typer.Option(None, "--init-distance", help="Override optimizer.init_distance"),
    scale: str = typer.Option("odometry", "--scale", help="Pose scale source: odometry or given"),
    diagnostics: bool = typer.Option(False, "--diagnostics", help="Write pe/omega/mask maps"),
):
    """Recover distance maps of a bundle by direct optimization."""
    snippet = read_bundle(bundle)
    poses = _bundle_poses(snippet, scale)
    loader = _load_config(config)
    cfg = loader.optim_config() if loader else OptimConfig()
    overrides = {k: v for k, v in (("iterations", iterations), ("step_size", step_size),
                                   ("init_distance", init_distance)) if v is not None}
    if overrides:
        cfg = replace(cfg, **overrides)

    result = optimize_distance(snippet, poses, cfg)
    center = snippet.n_frames // 2
    out = out or get_export_path("distance", {"iters": cfg.iterations})
    write_pfm(out, result.distances[center])
    if trace:
        write_json(result.to_dict(), trace)

    summary = {
        "output": str(out),
        "iterations": cfg.iterations,
        "initial_total": result.trace[0],
        "final_total": result.report.total,
        "initial_photometric": result.photometric_trace[0],
        "final_photometric": result.report.photometric,
    }
    if snippet.distances is not None:
        summary["metrics"] = evaluate(result.distances[center], snippet.distances[center]).to_dict()
    if diagnostics:
        summary["diagnostics"] = _save_diagnostics(result.report.maps, "loss", Path(bundle).name)
    write_json(summary)


@app.command()
def gradcheck(
    bundle: str = typer.Argument(..., help="Bundle directory"),
    config: Optional[str] = typer.Option(None, "--config", help="Configuration JSON file"),
    samples: int = typer.Option(50, "--samples", help="Entries to check"),
    epsilon: float = typer.Option(1e-6, "--epsilon", help="Relative finite-difference step"),
    noise: float = typer.Option(0.1, "--noise", help="Relative perturbation of the check point"),
    n_scales: Optional[int] = typer.Option(None, "--n-scales", help="Override loss.n_scales"),
    seed: int = typer.Option(0, "--seed", help="Sampling seed"),
    scale: str = typer.Option("odometry", "--scale", help="Pose scale source: odometry or given"),
):
    """Compare the analytic loss gradient with central differences."""
    snippet = read_bundle(bundle)
    poses = _bundle_poses(snippet, scale)
    loader = _load_config(config)
    weights = loader.loss_weights() if loader else LossWeights()
    if n_scales is not None:
        weights = replace(weights, n_scales=n_scales)

    rng = np.random.default_rng(seed)
    shape = snippet.images[0].shape
    base = snippet.distances or [DistanceMap(np.full(shape, 5.0)) for _ in snippet.images]
    D = [DistanceMap(np.clip(d.data * (1.0 + noise * rng.standard_normal(shape)), 0.5, None)) for d in base]

    context = ObjectiveContext.build(snippet, poses, weights)
    objective = frozen_objective(snippet, D, poses, weights, context=context)
    report = grad_check(objective.fn, objective.x0, epsilon=epsilon, n_samples=samples, seed=seed)
    write_json(report.to_dict())


@app.command("eval")
def eval_command(
    pred: str = typer.Argument(..., help="Predicted distance PFM"),
    gt: str = typer.Argument(..., help="Ground-truth distance PFM"),
    cap: float = typer.Option(80.0, "--cap", help="Distance cap, meters"),
    median_scale: bool = typer.Option(False, "--median-scale", help="Scale prediction by median ground truth"),
):
    """Evaluate a predicted distance map against ground truth."""
    report = evaluate(read_pfm_array(pred), read_pfm_array(gt), cap, median_scale)
    write_json(report.to_dict())


def main(argv: Optional[List[str]] = None) -> int:
    """
    Run the CLI and return its exit code.

    Args:
        argv: Arguments without the program name (sys.argv[1:] when None)

    Returns:
        int: 0 on success, 1 on usage errors, 2 on data errors
    """
    command = typer.main.get_command(app)
    try:
        command.main(args=argv, prog_name="fdnet", standalone_mode=True)
    except SystemExit as e:
        code = e.code if isinstance(e.code, int) else (0 if e.code is None else 1)
        # usage errors leave the command layer with status 2
        return 1 if code == 2 else code
    except (FdnetError, ValueError, OSError) as e:
        logger.error(f"{type(e).__name__}: {e}")
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
