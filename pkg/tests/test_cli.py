#!/usr/bin/env python3
"""
Tests for the fdnet command-line interface: JSON on stdout and exit codes.
"""

import io
import json
import os
import shutil
import sys
import tempfile
import unittest
from contextlib import redirect_stderr, redirect_stdout
from unittest import mock

import numpy as np

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from fixtures import ROOT  # noqa: E402

from fdnet.camera import intrinsics_to_dict, reference_intrinsics  # noqa: E402
from fdnet.cli import main  # noqa: E402
from fdnet.fileio import write_image, write_pfm  # noqa: E402
from fdnet.warp import Image  # noqa: E402
from utils.file_management import OUTPUT_ENV  # noqa: E402

DESK_CONFIG = os.path.join(ROOT, "config", "desk_config.json")


class CliTestCase(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.mkdtemp()
        patcher = mock.patch.dict(os.environ, {OUTPUT_ENV: os.path.join(self.tmp, "output")})
        patcher.start()
        self.addCleanup(patcher.stop)

    def tearDown(self):
        shutil.rmtree(self.tmp, ignore_errors=True)

    def path(self, name: str) -> str:
        return os.path.join(self.tmp, name)

    def run_cli(self, *args):
        """Returns (exit code, parsed stdout JSON or None)."""
        out, err = io.StringIO(), io.StringIO()
        with redirect_stdout(out), redirect_stderr(err):
            code = main(list(args))
        text = out.getvalue().strip()
        return code, (json.loads(text) if text else None)

    def write_intrinsics(self, name: str, data) -> str:
        path = self.path(name)
        with open(path, "w") as f:
            json.dump(data, f)
        return path

    def render_bundle(self, name: str = "bundle") -> str:
        k_path = self.write_intrinsics("k32.json", intrinsics_to_dict(reference_intrinsics(32, 20)))
        bundle = self.path(name)
        code, result = self.run_cli("render", "--out", bundle, "--intrinsics", k_path)
        self.assertEqual(code, 0)
        self.assertEqual(result["frames"], 3)
        return bundle


class TestGeometryCommands(CliTestCase):
    def test_project_identity_lens(self):
        k_path = self.write_intrinsics("k.json", {"model": "fisheye", "k": [1, 0, 0, 0], "principal": [0, 0],
                                                  "size": [4, 4], "theta_max": 1.5})
        code, result = self.run_cli("project", "--intrinsics", k_path, "--point", "0", "0", "1")
        self.assertEqual(code, 0)
        self.assertEqual(result, {"u": 0.0, "v": 0.0, "valid": True})

        code, result = self.run_cli("project", "--intrinsics", k_path, "--point", "0", "0", "-1")
        self.assertEqual(code, 0)
        self.assertFalse(result["valid"])

    def test_unproject_principal_pixel(self):
        k_path = os.path.join(ROOT, "config", "reference_intrinsics.json")
        code, result = self.run_cli("unproject", "--intrinsics", k_path, "--pixel", "31.5", "19.5", "--distance", "5")
        self.assertEqual(code, 0)
        np.testing.assert_allclose([result["x"], result["y"], result["z"]], [0.0, 0.0, 5.0], atol=1e-9)

    def test_pinhole_intrinsics(self):
        k_path = self.write_intrinsics("p.json", {"model": "pinhole", "f": [10, 10], "principal": [5, 5],
                                                  "size": [11, 11]})
        code, result = self.run_cli("project", "--intrinsics", k_path, "--point", "1", "0", "2")
        self.assertEqual(code, 0)
        self.assertAlmostEqual(result["u"], 10.0, places=12)

    def test_rectify(self):
        k_path = os.path.join(ROOT, "config", "reference_intrinsics.json")
        image = self.path("fish.pgm")
        write_image(image, Image(np.random.default_rng(0).uniform(0.0, 1.0, (40, 64))))
        for mode in ("rectilinear", "cylindrical"):
            with self.subTest(mode=mode):
                out = self.path(f"{mode}.pgm")
                code, result = self.run_cli("rectify", image, "--intrinsics", k_path, "--mode", mode, "--out", out)
                self.assertEqual(code, 0)
                self.assertTrue(os.path.exists(out))
                self.assertGreater(result["valid_fraction"], 0.5)

    def test_rectify_unknown_mode(self):
        k_path = os.path.join(ROOT, "config", "reference_intrinsics.json")
        image = self.path("fish.pgm")
        write_image(image, Image(np.zeros((40, 64))))
        code, _ = self.run_cli("rectify", image, "--intrinsics", k_path, "--mode", "spherical")
        self.assertEqual(code, 1)


class TestPipelineCommands(CliTestCase):
    def test_render_warp_optimize_eval(self):
        bundle = self.render_bundle()
        self.assertTrue(os.path.exists(os.path.join(bundle, "frame_002.pgm")))

        code, result = self.run_cli("warp", bundle, "--out", self.path("recon.pgm"))
        self.assertEqual(code, 0)
        self.assertGreater(result["valid_fraction"], 0.3)
        self.assertLess(result["mean_abs_error"], 0.5)

        distance = self.path("distance.pfm")
        trace = self.path("trace.json")
        code, result = self.run_cli("optimize", bundle, "--config", DESK_CONFIG, "--iterations", "2",
                                    "--out", distance, "--trace", trace)
        self.assertEqual(code, 0)
        self.assertEqual(result["iterations"], 2)
        self.assertIn("abs_rel", result["metrics"])
        with open(trace) as f:
            self.assertEqual(len(json.load(f)["trace"]), 2)

        gt = os.path.join(bundle, "frame_001_dist.pfm")
        code, result = self.run_cli("eval", gt, gt, "--cap", "40")
        self.assertEqual(code, 0)
        self.assertEqual(result["abs_rel"], 0.0)
        code, result = self.run_cli("eval", distance, gt)
        self.assertEqual(code, 0)
        self.assertGreater(result["n_pixels"], 0)

    def test_warp_diagnostics(self):
        bundle = self.render_bundle()
        code, result = self.run_cli("warp", bundle, "--pose", "0 0 0 0 0 0", "--source", "1", "--diagnostics")
        self.assertEqual(code, 0)
        self.assertLess(result["mean_abs_error"], 1e-9)
        self.assertTrue(result["diagnostics"])
        for path in result["diagnostics"]:
            self.assertTrue(os.path.exists(path))

    def test_gradcheck(self):
        bundle = self.render_bundle()
        code, result = self.run_cli("gradcheck", bundle, "--samples", "3", "--n-scales", "2")
        self.assertEqual(code, 0)
        self.assertEqual(result["n_samples"], 3)
        self.assertLess(result["max_rel_error"], 1e-3)

    def test_eval_skips_pixels_without_ground_truth(self):
        gt = self.path("gt.pfm")
        pred = self.path("pred.pfm")
        write_pfm(gt, np.array([[2.0, 4.0], [0.0, 6.0]]))
        write_pfm(pred, np.array([[2.0, 4.0], [1.0, 6.0]]))
        code, result = self.run_cli("eval", pred, gt)
        self.assertEqual(code, 0)
        self.assertEqual(result["n_pixels"], 3)
        self.assertEqual(result["abs_rel"], 0.0)


class TestExitCodes(CliTestCase):
    def test_unknown_command(self):
        code, _ = self.run_cli("train")
        self.assertEqual(code, 1)

    def test_missing_option(self):
        code, _ = self.run_cli("project", "--point", "0", "0", "1")
        self.assertEqual(code, 1)

    def test_option_without_value(self):
        code, _ = self.run_cli("project", "--intrinsics")
        self.assertEqual(code, 1)

    def test_unknown_rectify_mode(self):
        k_path = os.path.join(ROOT, "config", "reference_intrinsics.json")
        code, _ = self.run_cli("rectify", self.path("img.pgm"), "--intrinsics", k_path, "--mode", "polar")
        self.assertEqual(code, 1)

    def test_unknown_scale_source(self):
        bundle = self.render_bundle()
        code, _ = self.run_cli("optimize", bundle, "--scale", "lidar", "--iterations", "1")
        self.assertEqual(code, 1)

    def test_missing_file_is_data_error(self):
        code, _ = self.run_cli("eval", self.path("a.pfm"), self.path("b.pfm"))
        self.assertEqual(code, 2)

    def test_bad_pfm_is_data_error(self):
        bad = self.path("bad.pfm")
        with open(bad, "wb") as f:
            f.write(b"Pf\n1 1\n+1.0\n" + bytes(4))
        code, _ = self.run_cli("eval", bad, bad)
        self.assertEqual(code, 2)

    def test_frame_index_out_of_range(self):
        bundle = self.render_bundle()
        code, _ = self.run_cli("warp", bundle, "--target", "5")
        self.assertEqual(code, 2)

    def test_empty_evaluation_is_data_error(self):
        far = self.path("far.pfm")
        write_pfm(far, np.full((2, 2), 100.0))
        code, _ = self.run_cli("eval", far, far)
        self.assertEqual(code, 2)


if __name__ == "__main__":
    unittest.main()
