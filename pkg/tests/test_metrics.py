#!/usr/bin/env python3
"""
Tests for the distance evaluation metrics.
"""

import math
import os
import sys
import unittest

import numpy as np

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import fixtures  # noqa: E402,F401

from fdnet.errors import FdnetError  # noqa: E402
from fdnet.metrics import cap_presets, evaluate, evaluate_caps  # noqa: E402
from fdnet.warp import DistanceMap  # noqa: E402


class TestEvaluate(unittest.TestCase):
    """Error measures over the capped ground truth."""

    def test_identical_maps(self):
        gt = np.random.default_rng(0).uniform(1.0, 50.0, (6, 7))
        report = evaluate(gt.copy(), gt)
        self.assertEqual(report.abs_rel, 0.0)
        self.assertEqual(report.rmse, 0.0)
        self.assertEqual(report.delta1, 1.0)
        self.assertEqual(report.n_pixels, 42)

    def test_uniform_over_estimate(self):
        gt = np.array([[1.0, 2.0, 4.0, 8.0]])
        report = evaluate(1.25 * gt, gt)
        self.assertEqual(report.delta1, 0.0)
        self.assertEqual(report.delta2, 1.0)
        self.assertAlmostEqual(report.abs_rel, 0.25, places=12)
        self.assertAlmostEqual(report.rmse_log, math.log(1.25), places=12)

    def test_two_pixel_example(self):
        report = evaluate(np.array([1.0, 8.0]), np.array([2.0, 4.0]))
        self.assertAlmostEqual(report.abs_rel, 0.75, places=12)
        self.assertAlmostEqual(report.sq_rel, 2.25, places=12)
        self.assertAlmostEqual(report.rmse, math.sqrt(8.5), places=12)
        self.assertAlmostEqual(report.rmse, 2.9155, places=4)

    def test_cap_selects_pixels(self):
        gt = np.array([10.0, 35.0, 60.0, 90.0])
        pred = gt.copy()
        counts = {cap: evaluate(pred, gt, cap).n_pixels for cap in cap_presets()}
        self.assertEqual(counts, {30.0: 1, 40.0: 2, 80.0: 3})

    def test_zero_ground_truth_is_ignored(self):
        gt = np.array([0.0, 5.0])
        report = evaluate(np.array([3.0, 5.0]), gt)
        self.assertEqual(report.n_pixels, 1)
        self.assertEqual(report.abs_rel, 0.0)

    def test_median_scaling_removes_global_scale(self):
        rng = np.random.default_rng(1)
        gt = rng.uniform(2.0, 20.0, (5, 5))
        pred = gt * rng.uniform(0.9, 1.1, gt.shape)
        plain = evaluate(pred, gt, median_scale=True)
        scaled = evaluate(3.7 * pred, gt, median_scale=True)
        self.assertAlmostEqual(plain.abs_rel, scaled.abs_rel, places=12)
        self.assertTrue(scaled.median_scaled)

    def test_accepts_distance_maps(self):
        gt = DistanceMap(np.full((2, 2), 4.0))
        self.assertEqual(evaluate(gt, gt).abs_rel, 0.0)

    def test_empty_valid_set(self):
        with self.assertRaises(FdnetError):
            evaluate(np.ones(3), np.full(3, 100.0), cap=80.0)

    def test_shape_mismatch(self):
        with self.assertRaises(ValueError):
            evaluate(np.ones((2, 2)), np.ones((2, 3)))

    def test_evaluate_caps_skips_empty(self):
        gt = np.array([35.0, 60.0])
        with self.assertLogs("fdnet.metrics", level="WARNING"):
            reports = evaluate_caps(gt, gt)
        self.assertEqual(sorted(reports), [40.0, 80.0])
        self.assertIn("abs_rel", reports[80.0].to_dict())


if __name__ == "__main__":
    unittest.main()
