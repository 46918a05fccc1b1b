"""Byte-level tests for the PFM/PGM/PPM readers and writers.

PFM layout under test: ASCII header "Pf" (1 channel) or "PF" (3 channels),
then "width height", then the scale whose sign encodes endianness
(negative = little-endian), then raw float32 rows stored bottom-to-top.
PGM/PPM are the binary variants P5/P6 with maxval 255.
"""

from __future__ import annotations

import struct

import numpy as np
import pytest

from rocpose.errors import FormatError
from rocpose.netpbm import (
    read_pfm,
    read_pgm,
    read_ppm,
    write_pfm,
    write_pgm,
    write_ppm,
)


# ---------------------------------------------------------------------------
# PFM


class TestPfm:
    def test_hand_built_single_row(self, tmp_path):
        # 2x1 grayscale, little-endian (negative scale), one bottom row.
        payload = struct.pack("<2f", 1.5, -2.0)
        p = tmp_path / "hand.pfm"
        p.write_bytes(b"Pf\n2 1\n-1.0\n" + payload)
        img = read_pfm(p)
        assert img.dtype == np.float32
        np.testing.assert_array_equal(img, [[1.5, -2.0]])

    def test_rows_stored_bottom_up(self, tmp_path):
        img = np.array([[1.0, 2.0], [3.0, 4.0]], dtype=np.float32)
        p = tmp_path / "rows.pfm"
        write_pfm(p, img)
        raw = p.read_bytes()
        header_end = raw.index(b"-1.0\n") + len(b"-1.0\n")
        # Bottom row (3,4) must come first in the payload.
        np.testing.assert_array_equal(
            np.frombuffer(raw[header_end:], dtype="<f4"), [3.0, 4.0, 1.0, 2.0]
        )
        np.testing.assert_array_equal(read_pfm(p), img)

    def test_round_trip_random(self, tmp_path):
        rng = np.random.default_rng(0)
        img = rng.normal(size=(17, 23)).astype(np.float32)
        p = tmp_path / "r.pfm"
        write_pfm(p, img)
        np.testing.assert_array_equal(read_pfm(p), img)

    def test_three_channel_round_trip(self, tmp_path):
        rng = np.random.default_rng(1)
        img = rng.normal(size=(5, 7, 3)).astype(np.float32)
        p = tmp_path / "c.pfm"
        write_pfm(p, img)
        loaded = read_pfm(p)
        assert loaded.shape == (5, 7, 3)
        np.testing.assert_array_equal(loaded, img)

    def test_header_comments_skipped(self, tmp_path):
        payload = struct.pack("<1f", 9.0)
        p = tmp_path / "comment.pfm"
        p.write_bytes(b"Pf\n# a comment\n1 1\n-1.0\n" + payload)
        np.testing.assert_array_equal(read_pfm(p), [[9.0]])

    def test_truncated_payload_raises(self, tmp_path):
        p = tmp_path / "trunc.pfm"
        p.write_bytes(b"Pf\n2 2\n-1.0\n" + struct.pack("<3f", 1, 2, 3))
        with pytest.raises(FormatError) as e:
            read_pfm(p)
        assert "16" in str(e.value) and "12" in str(e.value)  # expected vs got bytes

    def test_wrong_magic_raises(self, tmp_path):
        p = tmp_path / "bad.pfm"
        p.write_bytes(b"P5\n1 1\n255\n\x00")
        with pytest.raises(FormatError):
            read_pfm(p)

    def test_float64_input_written_as_float32(self, tmp_path):
        img = np.array([[0.1]], dtype=np.float64)
        p = tmp_path / "f64.pfm"
        write_pfm(p, img)
        loaded = read_pfm(p)
        assert loaded.dtype == np.float32
        assert loaded[0, 0] == np.float32(0.1)


# ---------------------------------------------------------------------------
# PGM


class TestPgm:
    def test_hand_built(self, tmp_path):
        p = tmp_path / "hand.pgm"
        p.write_bytes(b"P5\n3 2\n255\n" + bytes([0, 128, 255, 1, 2, 3]))
        np.testing.assert_array_equal(
            read_pgm(p), [[0, 128, 255], [1, 2, 3]]
        )

    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(2)
        img = rng.integers(0, 256, size=(9, 4), dtype=np.uint8)
        p = tmp_path / "r.pgm"
        write_pgm(p, img)
        loaded = read_pgm(p)
        assert loaded.dtype == np.uint8
        np.testing.assert_array_equal(loaded, img)

    def test_maxval_other_than_255_rejected(self, tmp_path):
        p = tmp_path / "m.pgm"
        p.write_bytes(b"P5\n1 1\n65535\n\x00\x00")
        with pytest.raises(FormatError):
            read_pgm(p)

    def test_truncated_raises(self, tmp_path):
        p = tmp_path / "t.pgm"
        p.write_bytes(b"P5\n4 4\n255\n" + bytes(5))
        with pytest.raises(FormatError):
            read_pgm(p)


# ---------------------------------------------------------------------------
# PPM


class TestPpm:
    def test_hand_built_single_pixel(self, tmp_path):
        p = tmp_path / "hand.ppm"
        p.write_bytes(b"P6\n1 1\n255\n" + bytes([10, 20, 30]))
        np.testing.assert_array_equal(read_ppm(p), [[[10, 20, 30]]])

    def test_exact_bytes_written(self, tmp_path):
        img = np.array([[[1, 2, 3], [4, 5, 6]]], dtype=np.uint8)  # 1 row, 2 cols
        p = tmp_path / "b.ppm"
        write_ppm(p, img)
        assert p.read_bytes() == b"P6\n2 1\n255\n" + bytes([1, 2, 3, 4, 5, 6])

    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(3)
        img = rng.integers(0, 256, size=(6, 5, 3), dtype=np.uint8)
        p = tmp_path / "r.ppm"
        write_ppm(p, img)
        np.testing.assert_array_equal(read_ppm(p), img)

    def test_wrong_channel_count_rejected(self, tmp_path):
        with pytest.raises(FormatError):
            write_ppm(tmp_path / "x.ppm", np.zeros((2, 2), dtype=np.uint8))
