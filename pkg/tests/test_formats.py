import struct

import numpy as np
import pytest

from termembed import FormatError
from termembed.pointio import (
    detect_format,
    read_points,
    read_points_bin,
    read_points_csv,
    write_points_bin,
    write_points_csv,
)


@pytest.fixture
def arr():
    return np.random.default_rng(0).standard_normal((5, 3))


def test_csv_round_trip_bit_exact(tmp_path, arr):
    path = tmp_path / "p.csv"
    write_points_csv(path, arr)
    back = read_points_csv(path)
    assert np.array_equal(back, arr)


def test_bin_round_trip_bit_exact(tmp_path, arr):
    path = tmp_path / "p.bin"
    write_points_bin(path, arr)
    back = read_points_bin(path)
    assert np.array_equal(back, arr)


def test_bin_header_is_16_bytes(tmp_path, arr):
    path = tmp_path / "p.bin"
    write_points_bin(path, arr)
    blob = path.read_bytes()
    assert len(blob) == 16 + 8 * arr.size
    magic, n, d, reserved = struct.unpack_from("<4sIII", blob, 0)
    assert magic == b"TEPT" and (n, d) == arr.shape and reserved == 0


def test_bin_bad_magic(tmp_path):
    path = tmp_path / "p.bin"
    path.write_bytes(b"NOPE" + b"\x00" * 12)
    with pytest.raises(FormatError, match="magic"):
        read_points_bin(path)


def test_bin_truncated_payload(tmp_path):
    path = tmp_path / "p.bin"
    path.write_bytes(struct.pack("<4sIII", b"TEPT", 2, 2, 0) + b"\x00" * 8)
    with pytest.raises(FormatError, match="payload"):
        read_points_bin(path)


def test_csv_error_carries_line_number(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("1.0,2.0\n1.0,oops\n")
    with pytest.raises(FormatError, match=":2:"):
        read_points_csv(path)


def test_csv_ragged_row_reported(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("1.0,2.0\n3.0\n")
    with pytest.raises(FormatError, match="columns"):
        read_points_csv(path)


def test_empty_csv_gives_zero_points(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("")
    assert read_points_csv(path).shape == (0, 0)


def test_detect_format(tmp_path):
    assert detect_format("x.csv") == "csv"
    assert detect_format("x.bin") == "bin"
    assert detect_format("x.dat", "csv") == "csv"
    with pytest.raises(FormatError):
        detect_format("x.dat")


def test_read_points_dispatch(tmp_path, arr):
    c, b = tmp_path / "p.csv", tmp_path / "p.bin"
    write_points_csv(c, arr)
    write_points_bin(b, arr)
    assert np.array_equal(read_points(c), read_points(b))
