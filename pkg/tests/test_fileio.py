#!/usr/bin/env python3
"""
Tests for PFM, PNM/PNG and bundle input/output.
"""

import json
import os
import shutil
import sys
import tempfile
import unittest

import numpy as np

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from fixtures import lateral_snippet, random_image  # noqa: E402

from fdnet.errors import BundleError, FormatError, ImageError  # noqa: E402
from fdnet.fileio import (  # noqa: E402
    read_bundle,
    read_image,
    read_pfm,
    read_pfm_array,
    write_bundle,
    write_image,
    write_pfm,
)
from fdnet.warp import DistanceMap  # noqa: E402


class FileTestCase(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.tmp, ignore_errors=True)

    def path(self, name: str) -> str:
        return os.path.join(self.tmp, name)

    def write_bytes(self, name: str, data: bytes) -> str:
        path = self.path(name)
        with open(path, "wb") as f:
            f.write(data)
        return path


class TestPFM(FileTestCase):
    """Little-endian grayscale float maps."""

    def test_float32_round_trip_is_exact(self):
        D = np.random.default_rng(0).uniform(0.5, 80.0, (3, 4)).astype(np.float32).astype(float)
        write_pfm(self.path("d.pfm"), DistanceMap(D))
        np.testing.assert_array_equal(read_pfm(self.path("d.pfm")).data, D)

    def test_hand_written_file(self):
        values = np.arange(1, 13, dtype="<f4")
        path = self.write_bytes("hand.pfm", b"Pf\n4 3\n-1.0\n" + values.tobytes())
        D = read_pfm(path).data
        self.assertEqual(D.shape, (3, 4))
        # bottom row first
        np.testing.assert_array_equal(D[2], [1.0, 2.0, 3.0, 4.0])
        np.testing.assert_array_equal(D[0], [9.0, 10.0, 11.0, 12.0])

    def test_header_bytes(self):
        write_pfm(self.path("h.pfm"), np.full((3, 4), 2.0))
        with open(self.path("h.pfm"), "rb") as f:
            data = f.read()
        self.assertTrue(data.startswith(b"Pf\n4 3\n-1.0\n"))
        self.assertEqual(len(data), len(b"Pf\n4 3\n-1.0\n") + 48)

    def test_rejected_files(self):
        payload = np.ones(12, dtype="<f4").tobytes()
        nan_payload = np.full(12, np.nan, dtype="<f4").tobytes()
        cases = {
            "big_endian.pfm": b"Pf\n4 3\n+1.0\n" + payload,
            "color.pfm": b"PF\n4 3\n-1.0\n" + payload,
            "short.pfm": b"Pf\n4 3\n-1.0\n" + payload[:40],
            "nan.pfm": b"Pf\n4 3\n-1.0\n" + nan_payload,
            "magic.pfm": b"P7\n4 3\n-1.0\n" + payload,
        }
        for name, data in cases.items():
            with self.subTest(name=name):
                with self.assertRaises(FormatError):
                    read_pfm(self.write_bytes(name, data))

    def test_missing_file(self):
        with self.assertRaises(FileNotFoundError):
            read_pfm(self.path("missing.pfm"))

    def test_raw_array_keeps_missing_measurements(self):
        path = self.path("gt.pfm")
        write_pfm(path, np.array([[2.0, 4.0], [0.0, 6.0]]))
        np.testing.assert_array_equal(read_pfm_array(path), [[2.0, 4.0], [0.0, 6.0]])
        with self.assertRaises(ImageError):
            read_pfm(path)


class TestImages(FileTestCase):
    """8-bit PGM, PPM and PNG."""

    def test_hand_written_pgm(self):
        path = self.write_bytes("g.pgm", b"P5\n2 2\n255\n" + bytes([0, 255, 128, 64]))
        img = read_image(path)
        np.testing.assert_allclose(img.data[..., 0], [[0.0, 1.0], [128 / 255, 64 / 255]], atol=1e-12)
        self.assertAlmostEqual(img.data[1, 0, 0], 0.50196, places=5)
        self.assertAlmostEqual(img.data[1, 1, 0], 0.25098, places=5)

    def test_header_comment(self):
        path = self.write_bytes("c.pgm", b"P5\n# written by hand\n1 1\n255\n" + bytes([51]))
        self.assertAlmostEqual(read_image(path).data[0, 0, 0], 0.2, places=12)

    def test_quantization_error(self):
        img = random_image(5, 6, seed=2)
        for name in ("q.pgm", "q.png"):
            write_image(self.path(name), img)
            back = read_image(self.path(name))
            self.assertLessEqual(np.abs(back.data - img.data).max(), 1.0 / 510 + 1e-12)

    def test_color_round_trip(self):
        img = random_image(4, 3, channels=3, seed=3)
        write_image(self.path("c.ppm"), img)
        self.assertEqual(read_image(self.path("c.ppm")).channels, 3)
        with self.assertRaises(FormatError):
            write_image(self.path("c.pgm"), img)

    def test_rejected_files(self):
        cases = {
            "truncated.ppm": b"P6\n2 2\n255\n" + bytes(5),
            "ascii.pgm": b"P2\n1 1\n255\n0\n",
            "deep.pgm": b"P5\n1 1\n65535\n" + bytes(2),
            "dims.pgm": b"P5\n0 1\n255\n",
        }
        for name, data in cases.items():
            with self.subTest(name=name):
                with self.assertRaises(FormatError):
                    read_image(self.write_bytes(name, data))
        with self.assertRaises(FormatError):
            write_image(self.path("x.bmp"), random_image(2, 2))


class TestBundle(FileTestCase):
    """Snippet directories."""

    def setUp(self):
        super().setUp()
        self.snippet = lateral_snippet(16, 8)

    def test_round_trip(self):
        for fmt in ("pnm", "png"):
            with self.subTest(fmt=fmt):
                directory = write_bundle(self.snippet, self.path(fmt), fmt)
                back = read_bundle(directory)
                self.assertEqual(back.n_frames, 3)
                self.assertEqual(back.intrinsics, self.snippet.intrinsics)
                self.assertEqual(back.odometry, self.snippet.odometry)
                np.testing.assert_allclose(back.poses[2].as_matrix(), self.snippet.poses[2].as_matrix(), atol=1e-9)
                np.testing.assert_allclose(back.distances[1].data, self.snippet.distances[1].data, rtol=1e-6)
                self.assertLessEqual(np.abs(back.images[0].data - self.snippet.images[0].data).max(), 1.0 / 510 + 1e-12)

    def test_frame_gap(self):
        directory = write_bundle(self.snippet, self.path("gap"))
        os.remove(os.path.join(directory, "frame_001.pgm"))
        with self.assertRaises(BundleError):
            read_bundle(directory)

    def test_partial_ground_truth(self):
        directory = write_bundle(self.snippet, self.path("partial"))
        os.remove(os.path.join(directory, "frame_002_dist.pfm"))
        with self.assertRaises(BundleError):
            read_bundle(directory)

    def test_odometry_count(self):
        directory = write_bundle(self.snippet, self.path("odo"))
        with open(os.path.join(directory, "odometry.json"), "w") as f:
            json.dump([{"t": 0.0, "v": 1.0}], f)
        with self.assertRaises(BundleError):
            read_bundle(directory)

    def test_size_mismatch(self):
        directory = write_bundle(self.snippet, self.path("size"))
        write_image(os.path.join(directory, "frame_000.pgm"), random_image(4, 4))
        with self.assertRaises(BundleError):
            read_bundle(directory)

    def test_missing_pieces(self):
        with self.assertRaises(FileNotFoundError):
            read_bundle(self.path("nowhere"))
        directory = write_bundle(self.snippet, self.path("intr"))
        os.remove(os.path.join(directory, "intrinsics.json"))
        with self.assertRaises(FileNotFoundError):
            read_bundle(directory)
        os.makedirs(self.path("empty"))
        with self.assertRaises(BundleError):
            read_bundle(self.path("empty"))

    def test_unknown_format(self):
        with self.assertRaises(ValueError):
            write_bundle(self.snippet, self.path("bad"), "tiff")


if __name__ == "__main__":
    unittest.main()
