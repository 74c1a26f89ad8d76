#!/usr/bin/env python3
"""
Tests for the fisheye and pinhole camera models.
"""

import math
import os
import sys
import unittest

import numpy as np

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from fixtures import QUARTER_PI, centered_intrinsics, identity_like_intrinsics  # noqa: E402

from fdnet.camera import (  # noqa: E402
    CylindricalSpec,
    FisheyeIntrinsics,
    PinholeIntrinsics,
    build_theta_lut,
    fov_mask,
    intrinsics_from_dict,
    intrinsics_to_dict,
    pixel_rays,
    project_fisheye,
    project_fisheye_array,
    project_pinhole,
    rectification_map,
    reference_intrinsics,
    scale_intrinsics,
    sigma_to_distance,
    solve_theta,
    unproject_fisheye,
    unproject_pinhole,
)
from fdnet.errors import CameraModelError, IntrinsicsError  # noqa: E402
from fdnet.warp import sample_bilinear  # noqa: E402


class TestProjectFisheye(unittest.TestCase):
    """Forward projection through the quartic lens."""

    def setUp(self):
        self.K = identity_like_intrinsics()

    def test_optical_axis_hits_principal_point(self):
        pixel, valid = project_fisheye(np.array([0.0, 0.0, 1.0]), self.K)
        self.assertEqual(pixel[0], 0.0)
        self.assertEqual(pixel[1], 0.0)
        self.assertTrue(valid)

    def test_forty_five_degrees_along_x(self):
        pixel, _ = project_fisheye(np.array([1.0, 0.0, 1.0]), self.K)
        self.assertAlmostEqual(pixel[0], QUARTER_PI, places=12)
        self.assertAlmostEqual(pixel[1], 0.0, places=12)

    def test_forty_five_degrees_along_y(self):
        pixel, _ = project_fisheye(np.array([0.0, 1.0, 1.0]), self.K)
        self.assertAlmostEqual(pixel[0], 0.0, places=12)
        self.assertAlmostEqual(pixel[1], QUARTER_PI, places=12)

    def test_zero_and_non_finite_points_rejected(self):
        with self.assertRaises(CameraModelError):
            project_fisheye(np.zeros(3), self.K)
        with self.assertRaises(CameraModelError):
            project_fisheye(np.array([np.nan, 0.0, 1.0]), self.K)

    def test_beyond_theta_max_is_invalid(self):
        K = reference_intrinsics()
        _, valid = project_fisheye(np.array([0.0, 0.0, -1.0]), K)
        self.assertFalse(valid)

    def test_array_variant_flags_instead_of_raising(self):
        pixels, valid = project_fisheye_array(np.array([[0.0, 0.0, 0.0], [0.0, 0.0, 1.0]]), self.K)
        self.assertFalse(valid[0])
        self.assertTrue(np.all(np.isnan(pixels[0])))
        self.assertTrue(valid[1])


class TestSolveTheta(unittest.TestCase):
    """Root solving and the lookup table built from it."""

    def test_zero_radius(self):
        self.assertEqual(solve_theta(0.0, reference_intrinsics()), 0.0)

    def test_linear_lens(self):
        self.assertAlmostEqual(solve_theta(0.5, identity_like_intrinsics()), 0.5, places=10)

    def test_quadratic_lens(self):
        K = FisheyeIntrinsics(k1=1.0, k2=0.1, k3=0.0, k4=0.0, c_x=0.0, c_y=0.0,
                              width=4, height=4, theta_max=1.5)
        self.assertAlmostEqual(solve_theta(K.rho(0.6), K), 0.6, delta=1e-9)

    def test_radius_outside_calibration(self):
        K = identity_like_intrinsics()
        with self.assertRaises(CameraModelError):
            solve_theta(2.0, K)
        with self.assertRaises(CameraModelError):
            solve_theta(-0.1, K)

    def test_lut_linear_lens_is_exact(self):
        K = identity_like_intrinsics()
        lut = build_theta_lut(K, 64)
        for rho in (0.0, 0.3, 0.77, 1.2):
            self.assertAlmostEqual(lut.lookup(rho), rho, places=12)

    def test_lut_matches_solver(self):
        K = reference_intrinsics()
        lut = build_theta_lut(K, 4096)
        rho = K.rho(0.3)
        self.assertAlmostEqual(lut.lookup(rho), solve_theta(rho, K), delta=1e-6)

    def test_lut_needs_two_entries(self):
        with self.assertRaises(CameraModelError):
            build_theta_lut(reference_intrinsics(), 1)

    def test_lut_range_stops_at_image_corner(self):
        K = reference_intrinsics(64, 40)
        lut = build_theta_lut(K, 128)
        self.assertLessEqual(lut.rho_top, K.rho_max)
        self.assertTrue(math.isnan(lut.lookup(lut.rho_top * 1.01)))


class TestUnprojectFisheye(unittest.TestCase):
    """Lifting pixels to points at a Euclidean distance."""

    def test_principal_pixel(self):
        K = centered_intrinsics()
        X = unproject_fisheye(np.array([K.c_x, K.c_y]), 5.0, K, build_theta_lut(K))
        np.testing.assert_allclose(X, [0.0, 0.0, 5.0], atol=1e-12)

    def test_round_trip_single_point(self):
        K = reference_intrinsics()
        lut = build_theta_lut(K)
        X = np.array([1.0, 2.0, 3.0])
        pixel, valid = project_fisheye(X, K)
        self.assertTrue(valid)
        back = unproject_fisheye(pixel, np.linalg.norm(X), K, lut)
        self.assertLess(np.linalg.norm(back - X) / np.linalg.norm(X), 1e-6)

    def test_inverts_projection_example(self):
        K = identity_like_intrinsics()
        X = unproject_fisheye(np.array([QUARTER_PI, 0.0]), math.sqrt(2.0), K, build_theta_lut(K))
        np.testing.assert_allclose(X, [1.0, 0.0, 1.0], atol=1e-9)

    def test_round_trip_property(self):
        K = reference_intrinsics()
        lut = build_theta_lut(K)
        rng = np.random.default_rng(0)
        theta = rng.uniform(0.0, K.theta_max, 20000)
        phi = rng.uniform(-math.pi, math.pi, theta.size)
        dist = rng.uniform(0.5, 50.0, theta.size)
        X = np.stack([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)], axis=-1)
        X *= dist[:, None]
        pixels, valid = project_fisheye_array(X, K)
        self.assertGreater(valid.sum(), 10000)
        back = unproject_fisheye(pixels[valid], dist[valid], K, lut)
        rel = np.linalg.norm(back - X[valid], axis=-1) / dist[valid]
        self.assertLess(rel.max(), 1e-6)
        np.testing.assert_allclose(np.linalg.norm(back, axis=-1), dist[valid], rtol=1e-12)

    def test_bad_distance_and_radius(self):
        K = identity_like_intrinsics()
        lut = build_theta_lut(K)
        with self.assertRaises(CameraModelError):
            unproject_fisheye(np.array([0.1, 0.1]), 0.0, K, lut)
        with self.assertRaises(CameraModelError):
            unproject_fisheye(np.array([3.0, 3.0]), 1.0, K, lut)

    def test_fov_mask_excludes_corners(self):
        K = reference_intrinsics(64, 40)
        mask = fov_mask(K, build_theta_lut(K))
        self.assertTrue(mask[20, 32])
        self.assertFalse(mask[0, 0])
        rays, _ = pixel_rays(K, build_theta_lut(K))
        np.testing.assert_allclose(np.linalg.norm(rays, axis=-1), 1.0, atol=1e-12)


class TestPinhole(unittest.TestCase):
    """The pinhole model used by rectification and the sigma convention."""

    def setUp(self):
        self.K = PinholeIntrinsics(f_x=100.0, f_y=100.0, c_x=50.0, c_y=50.0, width=100, height=100)

    def test_projection_examples(self):
        pixel, valid = project_pinhole(np.array([0.0, 0.0, 2.0]), self.K)
        np.testing.assert_allclose(pixel, [50.0, 50.0])
        self.assertTrue(valid)
        pixel, _ = project_pinhole(np.array([1.0, 0.0, 2.0]), self.K)
        np.testing.assert_allclose(pixel, [100.0, 50.0])

    def test_round_trip(self):
        X = unproject_pinhole(np.array([30.0, 70.0]), 4.0, self.K)
        pixel, _ = project_pinhole(X, self.K)
        np.testing.assert_allclose(pixel, [30.0, 70.0], atol=1e-9)

    def test_point_behind_is_invalid(self):
        _, valid = project_pinhole(np.array([0.0, 0.0, -1.0]), self.K)
        self.assertFalse(valid)


class TestSigmaToDistance(unittest.TestCase):
    def test_fisheye_defaults(self):
        self.assertAlmostEqual(sigma_to_distance(0.0), 0.1, places=12)
        self.assertAlmostEqual(sigma_to_distance(1.0), 100.0, places=10)

    def test_pinhole_defaults(self):
        self.assertAlmostEqual(sigma_to_distance(1.0, model="pinhole"), 0.1, places=10)
        self.assertAlmostEqual(sigma_to_distance(0.0, model="pinhole"), 100.0, places=8)

    def test_explicit_coefficients(self):
        self.assertEqual(sigma_to_distance(0.5, a=1.0, b=0.0), 0.5)

    def test_out_of_range(self):
        with self.assertRaises(CameraModelError):
            sigma_to_distance(1.5)


class TestRectification(unittest.TestCase):
    """Rectilinear and cylindrical undistortion grids."""

    def setUp(self):
        self.K = reference_intrinsics(64, 40)

    def _read_grid(self, grid, target_pixels):
        coords = np.asarray(target_pixels, dtype=float)[None]
        valid = np.ones(coords.shape[:2], dtype=bool)
        sample = sample_bilinear(grid.coords, coords, valid)
        self.assertTrue(sample.valid.all())
        return sample.values[0]

    def test_principal_ray_maps_to_principal_point(self):
        pinhole = PinholeIntrinsics(f_x=20.0, f_y=20.0, c_x=16.0, c_y=10.0, width=33, height=21)
        cylinder = CylindricalSpec(f_x=10.0, f_y=10.0, c_x=16.0, c_y=10.0, width=33, height=21)
        for target, mode in ((pinhole, "rectilinear"), (cylinder, "cylindrical")):
            grid = rectification_map(self.K, target, mode)
            self.assertTrue(grid.valid[10, 16])
            np.testing.assert_allclose(grid.coords[10, 16], [self.K.c_x, self.K.c_y], atol=1e-9)

    def test_rectilinear_keeps_lines_straight(self):
        pinhole = PinholeIntrinsics(f_x=18.0, f_y=18.0, c_x=31.5, c_y=19.5, width=64, height=40)
        grid = rectification_map(self.K, pinhole, "rectilinear")
        # A 3-D segment projects to a straight pinhole line; the grid must send
        # every point of that line to the fisheye image of the same 3-D point.
        s = np.linspace(0.0, 1.0, 15)[:, None]
        X = np.array([-1.0, -0.4, 3.0]) * (1 - s) + np.array([1.2, 0.5, 4.0]) * s
        target, valid = project_pinhole(X, pinhole)
        self.assertTrue(valid.all())
        fisheye, _ = project_fisheye_array(X, self.K)
        deviation = np.linalg.norm(self._read_grid(grid, target) - fisheye, axis=-1)
        self.assertLess(deviation.max(), 0.5)

    def test_cylindrical_keeps_verticals_vertical(self):
        f = 64 / (2 * math.radians(90.0))
        cylinder = CylindricalSpec(f_x=f, f_y=f, c_x=31.5, c_y=19.5, width=64, height=40)
        grid = rectification_map(self.K, cylinder, "cylindrical")
        y = np.linspace(-0.8, 0.8, 11)
        X = np.stack([np.full_like(y, 1.5), y, np.full_like(y, 3.0)], axis=-1)
        radius = math.hypot(1.5, 3.0)
        u = cylinder.c_x + cylinder.f_x * math.atan2(1.5, 3.0)
        target = np.stack([np.full_like(y, u), cylinder.c_y + cylinder.f_y * y / radius], axis=-1)
        self.assertLess(np.ptp(target[:, 0]), 1e-12)
        fisheye, _ = project_fisheye_array(X, self.K)
        deviation = np.linalg.norm(self._read_grid(grid, target) - fisheye, axis=-1)
        self.assertLess(deviation.max(), 0.5)

    def test_wide_rectilinear_view_loses_pixels(self):
        pinhole = PinholeIntrinsics(f_x=4.0, f_y=4.0, c_x=31.5, c_y=19.5, width=64, height=40)
        grid = rectification_map(self.K, pinhole, "rectilinear")
        self.assertLess(grid.valid_fraction, 1.0)

    def test_mode_target_mismatch(self):
        pinhole = PinholeIntrinsics(f_x=20.0, f_y=20.0, c_x=16.0, c_y=10.0, width=33, height=21)
        with self.assertRaises(CameraModelError):
            rectification_map(self.K, pinhole, "cylindrical")


class TestIntrinsics(unittest.TestCase):
    """Validation, pyramid scaling and the JSON form."""

    def test_reference_values(self):
        K = reference_intrinsics(64, 40)
        np.testing.assert_allclose(K.k, (16.0, -0.75, 0.04, -0.001), rtol=1e-12)
        self.assertAlmostEqual(K.c_x, 31.5, places=12)
        self.assertAlmostEqual(K.c_y, 19.5, places=12)
        self.assertAlmostEqual(K.theta_max, 1.745, places=12)

    def test_non_monotone_lens_rejected(self):
        with self.assertRaises(IntrinsicsError):
            FisheyeIntrinsics(k1=1.0, k2=-1.0, k3=0.0, k4=0.0, c_x=0.0, c_y=0.0,
                              width=4, height=4, theta_max=1.5)

    def test_scale_keeps_pixel_centers_aligned(self):
        K = reference_intrinsics(64, 40)
        half = scale_intrinsics(K, 2)
        self.assertEqual((half.width, half.height), (32, 20))
        self.assertEqual((half.c_x, half.c_y), (15.5, 9.5))
        self.assertAlmostEqual(half.k1, 8.0)
        with self.assertRaises(IntrinsicsError):
            scale_intrinsics(reference_intrinsics(30, 20), 4)

    def test_dict_round_trip(self):
        K = reference_intrinsics(64, 40)
        self.assertEqual(intrinsics_from_dict(intrinsics_to_dict(K)), K)
        pinhole = PinholeIntrinsics(f_x=10.0, f_y=12.0, c_x=5.0, c_y=6.0, width=11, height=13)
        self.assertEqual(intrinsics_from_dict(intrinsics_to_dict(pinhole)), pinhole)

    def test_inconsistent_dict_rejected(self):
        d = intrinsics_to_dict(reference_intrinsics())
        with self.assertRaises(IntrinsicsError):
            intrinsics_from_dict({**d, "f": [1.0, 1.0]})
        with self.assertRaises(IntrinsicsError):
            intrinsics_from_dict({k: v for k, v in d.items() if k != "k"})
        with self.assertRaises(IntrinsicsError):
            intrinsics_from_dict({**d, "model": "orthographic"})


if __name__ == "__main__":
    unittest.main()
