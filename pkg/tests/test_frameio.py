"""Binary frame round-trips and corruption handling."""

import struct

import numpy as np
import pytest

from hdgap.errors import DataError
from hdgap.frameio import read_frame, write_frame
from conftest import small_frame


def test_round_trip_exact(tmp_path):
    frame = small_frame(seed=42)
    write_frame(frame, tmp_path / "f")
    back = read_frame(tmp_path / "f")
    np.testing.assert_array_equal(back.y, frame.y)
    np.testing.assert_array_equal(back.d, frame.d)
    np.testing.assert_array_equal(back.X, frame.X)
    np.testing.assert_array_equal(back.Z, frame.Z)
    assert back.x_labels == frame.x_labels
    assert back.z_labels == frame.z_labels
    assert back.provenance == frame.provenance


def test_rewrite_is_byte_identical(tmp_path):
    frame = small_frame(seed=43)
    write_frame(frame, tmp_path / "a")
    write_frame(frame, tmp_path / "b")
    assert (tmp_path / "a" / "design.bin").read_bytes() == (
        tmp_path / "b" / "design.bin"
    ).read_bytes()
    assert (tmp_path / "a" / "labels.txt").read_bytes() == (
        tmp_path / "b" / "labels.txt"
    ).read_bytes()


def test_missing_design(tmp_path):
    with pytest.raises(DataError, match="no design.bin"):
        read_frame(tmp_path)


def test_bad_magic(tmp_path):
    frame = small_frame(seed=44)
    d = write_frame(frame, tmp_path / "f")
    blob = bytearray((d / "design.bin").read_bytes())
    blob[:4] = b"NOPE"
    (d / "design.bin").write_bytes(bytes(blob))
    with pytest.raises(DataError, match="bad magic"):
        read_frame(d)


def test_unknown_version(tmp_path):
    frame = small_frame(seed=45)
    d = write_frame(frame, tmp_path / "f")
    blob = bytearray((d / "design.bin").read_bytes())
    blob[4:8] = struct.pack("<I", 99)
    (d / "design.bin").write_bytes(bytes(blob))
    with pytest.raises(DataError, match="version 99"):
        read_frame(d)


def test_truncated_payload(tmp_path):
    frame = small_frame(seed=46)
    d = write_frame(frame, tmp_path / "f")
    blob = (d / "design.bin").read_bytes()
    (d / "design.bin").write_bytes(blob[:-16])
    with pytest.raises(DataError, match="payload"):
        read_frame(d)


def test_label_count_mismatch(tmp_path):
    frame = small_frame(seed=47)
    d = write_frame(frame, tmp_path / "f")
    lines = (d / "labels.txt").read_text().splitlines()
    (d / "labels.txt").write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(DataError, match="labels.txt"):
        read_frame(d)


def test_dimension_mismatch_detected(tmp_path):
    import json

    frame = small_frame(seed=48)
    d = write_frame(frame, tmp_path / "f")
    dims = json.loads((d / "dimensions.json").read_text())
    dims["p1"] = dims["p1"] + 1
    (d / "dimensions.json").write_text(json.dumps(dims))
    with pytest.raises(DataError, match="dimensions.json"):
        read_frame(d)


def test_dropped_rows_carried(tmp_path):
    frame = small_frame(seed=49)
    frame.log.rows_missing = 3
    frame.log.rows_filtered = 4
    d = write_frame(frame, tmp_path / "f")
    back = read_frame(d)
    assert back.log.dropped_rows == 7
