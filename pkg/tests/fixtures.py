"""
Shared fixtures for the test-suite: small cameras, scenes and rendered snippets.
"""

import math
import os
import sys
from functools import lru_cache

import numpy as np

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
if ROOT not in sys.path:
    sys.path.insert(0, ROOT)

from fdnet.camera import FisheyeIntrinsics, reference_intrinsics  # noqa: E402
from fdnet.se3 import Pose  # noqa: E402
from fdnet.synth import (  # noqa: E402
    NoiseTexture,
    Plane,
    Scene,
    Sphere,
    default_scene,
    dome_scene,
    make_snippet,
    straight_trajectory,
)
from fdnet.warp import Image  # noqa: E402

SLOW_ENV = "FDNET_SLOW_TESTS"


def slow_tests_enabled() -> bool:
    return os.environ.get(SLOW_ENV, "") not in ("", "0")


def identity_like_intrinsics(width: int = 4, height: int = 4, theta_max: float = 1.5) -> FisheyeIntrinsics:
    """rho(theta) = theta, principal point at the origin pixel."""
    return FisheyeIntrinsics(k1=1.0, k2=0.0, k3=0.0, k4=0.0, c_x=0.0, c_y=0.0,
                             width=width, height=height, theta_max=theta_max)


def centered_intrinsics(width: int = 32, height: int = 20) -> FisheyeIntrinsics:
    """Reference lens with the principal point on a pixel center."""
    ref = reference_intrinsics(width, height)
    return FisheyeIntrinsics(k1=ref.k1, k2=ref.k2, k3=ref.k3, k4=ref.k4,
                             c_x=float(width // 2), c_y=float(height // 2),
                             width=width, height=height, theta_max=ref.theta_max)


def plane_scene(z: float = 6.0, frequency: float = 0.3, seed: int = 3) -> Scene:
    return Scene(primitives=[
        Plane(point=[0.0, 0.0, z], normal=[0.0, 0.0, -1.0],
              texture=NoiseTexture(frequency=frequency, octaves=2, contrast=0.8, seed=seed)),
    ])


def smooth_scene() -> Scene:
    """Wall with a sphere in front of it, low-frequency textures; bilinear resampling is nearly exact on it."""
    return Scene(primitives=[
        Plane(point=[0.0, 0.0, 6.0], normal=[0.0, 0.0, -1.0],
              texture=NoiseTexture(frequency=0.25, octaves=2, contrast=0.8, seed=5)),
        Sphere(center=[0.9, 0.2, 3.5], radius=0.8,
               texture=NoiseTexture(frequency=0.5, octaves=1, contrast=0.6, seed=6)),
    ])


@lru_cache(maxsize=None)
def lateral_snippet(width: int = 64, height: int = 40, n_frames: int = 3, step: float = 0.25,
                    speed: float = 2.5, scene_name: str = "default"):
    """Camera sliding sideways along +x; cached, do not mutate."""
    scenes = {"default": default_scene, "dome": dome_scene, "smooth": smooth_scene, "plane": plane_scene}
    K = reference_intrinsics(width, height)
    trajectory = straight_trajectory(step, speed, n_frames, direction=(1.0, 0.0, 0.0))
    return make_snippet(scenes[scene_name](), K, trajectory)


@lru_cache(maxsize=None)
def static_snippet(width: int = 16, height: int = 8, n_frames: int = 3):
    """Identical frames from one camera position with zero speeds."""
    K = reference_intrinsics(width, height)
    trajectory = [(Pose.identity(), 0.0)] * n_frames
    return make_snippet(default_scene(), K, trajectory)


def random_image(height: int, width: int, channels: int = 1, seed: int = 0) -> Image:
    rng = np.random.default_rng(seed)
    return Image(rng.uniform(0.0, 1.0, size=(height, width, channels)))


def ramp_image(height: int, width: int) -> Image:
    """Intensity u / (width - 1), constant down each column."""
    row = np.arange(width, dtype=float) / (width - 1)
    return Image(np.tile(row, (height, 1)))


QUARTER_PI = math.pi / 4
