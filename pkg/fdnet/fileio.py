"""
File formats: PFM distance maps, 8-bit PGM/PPM/PNG images, JSON and the
snippet bundle directory.

Bundle layout::

    frame_000.pgm | frame_000.ppm | frame_000.png
    frame_000_dist.pfm      (optional ground truth)
    ...
    intrinsics.json
    odometry.json           [{"t": seconds, "v": m/s}, ...]
    poses.txt               (optional) "roll pitch yaw tx ty tz" per frame,
                            world-from-camera relative to the first frame
"""

import json
import logging
import re
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
from PIL import Image as PILImage

from fdnet.camera import FisheyeIntrinsics, intrinsics_to_dict, load_intrinsics
from fdnet.errors import BundleError, FormatError
from fdnet.se3 import dump_odometry, dump_poses, load_odometry, load_poses
from fdnet.synth import SequenceSnippet
from fdnet.warp import DistanceMap, Image

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

# Largest accepted image side.
MAX_DIMENSION = 1 << 16

_FRAME_PATTERN = re.compile(r"^frame_(\d{3})\.(pgm|ppm|png)$")
_PNM_SUFFIXES = {".pgm", ".ppm", ".pnm"}


def _read_header(data: bytes, count: int, comments: bool) -> Tuple[List[bytes], int]:
    """
    Split the first ``count`` whitespace-separated header tokens.

    Returns the tokens and the offset of the payload, which starts after
    exactly one whitespace byte following the last token.
    """
    tokens = []
    pos = 0
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if comments and data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(f"Truncated header: expected {count} fields, found {len(tokens)}")
        tokens.append(data[start:pos])
    if pos >= n or not data[pos:pos + 1].isspace():
        raise FormatError("Header is not terminated by whitespace")
    return tokens, pos + 1


def _parse_dimensions(w: bytes, h: bytes) -> Tuple[int, int]:
    try:
        width, height = int(w), int(h)
    except ValueError:
        raise FormatError(f"Malformed dimensions: {w!r} {h!r}")
    if not (0 < width <= MAX_DIMENSION and 0 < height <= MAX_DIMENSION):
        raise FormatError(f"Dimensions out of range: {width}x{height}")
    return width, height


def read_pfm_array(path: PathLike) -> np.ndarray:
    """
    Read a grayscale little-endian Portable FloatMap as a float array.

    Zero, negative and infinite entries are kept; ground-truth maps use
    them for pixels without a measurement.

    Raises:
        FileNotFoundError: If the file does not exist
        FormatError: On a malformed header, a big-endian scale, a payload of
            the wrong size or NaN entries
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"PFM file not found: {path}")
    data = path.read_bytes()
    tokens, offset = _read_header(data, 4, comments=False)
    magic, w, h, scale_token = tokens
    if magic == b"PF":
        raise FormatError(f"{path}: color PFM ('PF') is not supported, expected 'Pf'")
    if magic != b"Pf":
        raise FormatError(f"{path}: bad PFM magic {magic!r}")
    width, height = _parse_dimensions(w, h)
    try:
        scale = float(scale_token)
    except ValueError:
        raise FormatError(f"{path}: malformed PFM scale {scale_token!r}")
    if scale >= 0:
        raise FormatError(f"{path}: big-endian PFM (scale {scale_token.decode(errors='replace')}) is not supported")

    expected = width * height * 4
    payload = data[offset:]
    if len(payload) != expected:
        raise FormatError(f"{path}: expected {expected} bytes of float data for {width}x{height}, got {len(payload)}")
    values = np.frombuffer(payload, dtype="<f4").reshape(height, width)[::-1]
    if np.any(np.isnan(values)):
        raise FormatError(f"{path}: PFM contains NaN entries")
    return values.astype(float)


def read_pfm(path: PathLike) -> DistanceMap:
    """
    Read a PFM distance map; every entry must be positive and finite.

    Raises:
        FileNotFoundError: If the file does not exist
        FormatError: On malformed contents
        ImageError: On zero, negative or infinite entries
    """
    return DistanceMap(read_pfm_array(path))


def write_pfm(path: PathLike, D: Union[DistanceMap, np.ndarray]) -> None:
    """Write a map as little-endian float32 PFM, bottom row first."""
    values = np.asarray(D.data if isinstance(D, DistanceMap) else D, dtype="<f4")
    if values.ndim != 2:
        raise FormatError(f"PFM holds 2-D maps, got shape {values.shape}")
    height, width = values.shape
    with open(path, "wb") as f:
        f.write(f"Pf\n{width} {height}\n-1.0\n".encode("ascii"))
        f.write(np.ascontiguousarray(values[::-1]).tobytes())


def _read_pnm(path: Path) -> np.ndarray:
    data = path.read_bytes()
    tokens, offset = _read_header(data, 4, comments=True)
    magic, w, h, maxval_token = tokens
    if magic not in (b"P5", b"P6"):
        raise FormatError(f"{path}: unsupported PNM magic {magic!r}, expected binary P5 or P6")
    width, height = _parse_dimensions(w, h)
    try:
        maxval = int(maxval_token)
    except ValueError:
        raise FormatError(f"{path}: malformed maxval {maxval_token!r}")
    if maxval != 255:
        raise FormatError(f"{path}: only 8-bit images (maxval 255) are supported, got {maxval}")
    channels = 1 if magic == b"P5" else 3
    expected = width * height * channels
    payload = data[offset:offset + expected]
    if len(payload) != expected:
        raise FormatError(f"{path}: truncated payload, expected {expected} bytes, got {len(payload)}")
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width, channels)


def read_image(path: PathLike) -> Image:
    """
    Read an 8-bit PGM (P5), PPM (P6) or PNG image as intensities in [0, 1].

    Raises:
        FileNotFoundError: If the file does not exist
        FormatError: On malformed or unsupported contents
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Image file not found: {path}")
    if path.suffix.lower() == ".png":
        try:
            with PILImage.open(path) as img:
                mode = "L" if img.mode in ("1", "L", "I", "I;16", "F", "LA") else "RGB"
                raw = np.asarray(img.convert(mode), dtype=np.uint8)
        except OSError as e:
            raise FormatError(f"{path}: unreadable PNG: {e}")
    else:
        raw = _read_pnm(path)
    return Image(raw.astype(float) / 255.0)


def _quantize(image: Image) -> np.ndarray:
    return np.round(image.data * 255.0).astype(np.uint8)


def write_image(path: PathLike, image: Image) -> None:
    """
    Write an image as 8-bit PGM, PPM or PNG by file suffix.

    Gray images written as .ppm are replicated to three channels; color
    images cannot be written as .pgm.
    """
    path = Path(path)
    suffix = path.suffix.lower()
    pixels = _quantize(image)
    if suffix == ".png":
        mode_data = pixels[..., 0] if image.channels == 1 else pixels
        PILImage.fromarray(mode_data).save(path)
        return
    if suffix == ".pgm":
        if image.channels != 1:
            raise FormatError(f"{path}: cannot write a {image.channels}-channel image as PGM")
        magic = b"P5"
    elif suffix in (".ppm", ".pnm"):
        magic = b"P6" if (suffix == ".ppm" or image.channels == 3) else b"P5"
        if magic == b"P6" and image.channels == 1:
            pixels = np.repeat(pixels, 3, axis=2)
    else:
        raise FormatError(f"Unsupported image suffix {suffix!r}, expected .pgm, .ppm or .png")
    with open(path, "wb") as f:
        f.write(magic + f"\n{image.width} {image.height}\n255\n".encode("ascii"))
        f.write(np.ascontiguousarray(pixels).tobytes())


def write_json(data: Any, path: Optional[PathLike] = None) -> None:
    """Write JSON to a file, or to stdout when path is None."""
    text = json.dumps(data, indent=2)
    if path is None:
        sys.stdout.write(text + "\n")
        sys.stdout.flush()
        return
    with open(path, "w") as f:
        f.write(text + "\n")


def write_bundle(snippet: SequenceSnippet, directory: PathLike, image_format: str = "pnm") -> Path:
    """
    Write a snippet as a bundle directory.

    Args:
        snippet: Snippet to write
        directory: Target directory (created)
        image_format: "pnm" (PGM for gray, PPM for color) or "png"

    Returns:
        The bundle directory
    """
    if image_format not in ("pnm", "png"):
        raise ValueError(f"Unknown image format: {image_format}. Must be one of ['pnm', 'png']")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i, image in enumerate(snippet.images):
        suffix = "png" if image_format == "png" else ("pgm" if image.channels == 1 else "ppm")
        write_image(directory / f"frame_{i:03d}.{suffix}", image)
        if snippet.distances is not None:
            write_pfm(directory / f"frame_{i:03d}_dist.pfm", snippet.distances[i])
    with open(directory / "intrinsics.json", "w") as f:
        json.dump(intrinsics_to_dict(snippet.intrinsics), f, indent=2)
    dump_odometry(snippet.odometry, directory / "odometry.json")
    if snippet.poses is not None:
        dump_poses(snippet.poses, directory / "poses.txt")
    logger.info(f"Wrote {snippet.n_frames}-frame bundle to {directory}")
    return directory


def read_bundle(directory: PathLike) -> SequenceSnippet:
    """
    Load a bundle directory.

    Raises:
        FileNotFoundError: If the directory or a required file is missing
        BundleError: If frames are missing, sizes disagree or counts do not match
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"Bundle directory not found: {directory}")

    frames: Dict[int, Path] = {}
    for entry in sorted(directory.iterdir()):
        match = _FRAME_PATTERN.match(entry.name)
        if match:
            index = int(match.group(1))
            if index in frames:
                raise BundleError(f"Frame {index} appears twice: {frames[index].name} and {entry.name}")
            frames[index] = entry
    if not frames:
        raise BundleError(f"No frame_NNN images in {directory}")
    if sorted(frames) != list(range(len(frames))):
        raise BundleError(f"Frame numbers must run from 000 without gaps, found {sorted(frames)}")

    intrinsics_path = directory / "intrinsics.json"
    if not intrinsics_path.exists():
        raise FileNotFoundError(f"Bundle is missing intrinsics.json: {directory}")
    K = load_intrinsics(intrinsics_path)
    if not isinstance(K, FisheyeIntrinsics):
        raise BundleError("Bundle intrinsics must describe a fisheye camera")

    images = [read_image(frames[i]) for i in range(len(frames))]
    for i, image in enumerate(images):
        if image.shape != (K.height, K.width):
            raise BundleError(f"Frame {i} is {image.width}x{image.height}, intrinsics say {K.width}x{K.height}")

    dist_paths = [directory / f"frame_{i:03d}_dist.pfm" for i in range(len(frames))]
    present = [p.exists() for p in dist_paths]
    distances = None
    if all(present):
        distances = [read_pfm(p) for p in dist_paths]
        for i, D in enumerate(distances):
            if D.shape != (K.height, K.width):
                raise BundleError(f"Distance map {i} has size {D.shape}, expected {(K.height, K.width)}")
    elif any(present):
        raise BundleError("Ground-truth distance maps must be present for all frames or none")

    odometry_path = directory / "odometry.json"
    if not odometry_path.exists():
        raise FileNotFoundError(f"Bundle is missing odometry.json: {directory}")
    odometry = load_odometry(odometry_path)
    if len(odometry) != len(images):
        raise BundleError(f"odometry.json has {len(odometry)} entries for {len(images)} frames")

    poses = None
    poses_path = directory / "poses.txt"
    if poses_path.exists():
        poses = load_poses(poses_path)
        if len(poses) != len(images):
            raise BundleError(f"poses.txt has {len(poses)} poses for {len(images)} frames")

    logger.debug(f"Read bundle {directory}: {len(images)} frames, "
                 f"ground truth {'yes' if distances else 'no'}, poses {'yes' if poses else 'no'}")
    return SequenceSnippet(images=images, intrinsics=K, odometry=odometry, poses=poses, distances=distances)
