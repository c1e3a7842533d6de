"""On-disk container for prepared model frames.

A frame directory holds three files:

* ``design.bin`` -- magic ``HDGF``, a little-endian u32 format version, u64
  row and column counts, then all columns (y, d, X block, Z block) as
  little-endian float64 in column-major order;
* ``labels.txt`` -- one label per column, newline-delimited, with ``y``,
  ``d``, ``x:`` and ``z:`` prefixes marking the blocks;
* ``dimensions.json`` -- the dimension report (n, p1, p2, p, dropped
  columns and rows) plus provenance.

Endianness and layout are pinned so a frame written on one platform reads
back bit-identically on any other.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .dataprep import ModelFrame, PrepLog
from .errors import DataError

MAGIC = b"HDGF"
VERSION = 1

_F64LE = np.dtype("<f8")


def write_frame(frame: ModelFrame, directory) -> Path:
    """Serialize a model frame into ``directory`` (created if needed)."""
    frame.validate()
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    matrix = np.column_stack([frame.y, frame.d, frame.X, frame.Z])
    n, ncols = matrix.shape
    with open(directory / "design.bin", "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<QQ", n, ncols))
        fh.write(np.asfortranarray(matrix, dtype=_F64LE).tobytes(order="F"))

    labels = ["y", "d"]
    labels += [f"x:{lab}" for lab in frame.x_labels]
    labels += [f"z:{lab}" for lab in frame.z_labels]
    (directory / "labels.txt").write_text("\n".join(labels) + "\n", encoding="utf-8")

    report = frame.dimension_report()
    report["provenance"] = frame.provenance
    (directory / "dimensions.json").write_text(
        json.dumps(report, indent=2) + "\n", encoding="utf-8"
    )
    return directory


def read_frame(directory) -> ModelFrame:
    """Load a frame directory back into a ModelFrame.

    Raises DataError on a bad magic, unknown version, truncated payload, or
    any inconsistency between the three files.
    """
    directory = Path(directory)
    design = directory / "design.bin"
    if not design.exists():
        raise DataError(f"frame directory {directory} has no design.bin")

    blob = design.read_bytes()
    if len(blob) < 24:
        raise DataError(f"design.bin in {directory} is truncated")
    if blob[:4] != MAGIC:
        raise DataError(f"design.bin in {directory} has bad magic {blob[:4]!r}")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != VERSION:
        raise DataError(f"design.bin format version {version} is not supported")
    n, ncols = struct.unpack_from("<QQ", blob, 8)
    expected = 24 + 8 * n * ncols
    if len(blob) != expected:
        raise DataError(
            f"design.bin payload is {len(blob)} bytes, expected {expected} for {n}x{ncols}"
        )
    matrix = np.frombuffer(blob, dtype=_F64LE, offset=24).reshape((n, ncols), order="F")
    matrix = np.ascontiguousarray(matrix)

    label_lines = (directory / "labels.txt").read_text(encoding="utf-8").splitlines()
    labels = [line for line in label_lines if line]
    if len(labels) != ncols:
        raise DataError(f"labels.txt lists {len(labels)} columns, design.bin holds {ncols}")
    if labels[0] != "y" or labels[1] != "d":
        raise DataError("labels.txt must start with 'y' and 'd'")
    x_labels = [lab[2:] for lab in labels if lab.startswith("x:")]
    z_labels = [lab[2:] for lab in labels if lab.startswith("z:")]
    if 2 + len(x_labels) + len(z_labels) != ncols:
        raise DataError("labels.txt contains column labels outside the y/d/x:/z: blocks")

    dims = json.loads((directory / "dimensions.json").read_text(encoding="utf-8"))
    p1 = len(x_labels)
    p2 = len(z_labels) - 1
    for key, got in (("n", int(n)), ("p1", p1), ("p2", p2), ("p", p1 + p2 + 1)):
        if key in dims and dims[key] != got:
            raise DataError(
                f"dimensions.json reports {key}={dims[key]} but the frame has {key}={got}"
            )

    log = PrepLog(dropped_columns=list(dims.get("dropped_columns", [])))
    # Reloaded frames carry the aggregate drop count under rows_filtered.
    log.rows_filtered = int(dims.get("dropped_rows", 0))

    frame = ModelFrame(
        y=matrix[:, 0],
        d=matrix[:, 1],
        X=matrix[:, 2 : 2 + p1],
        Z=matrix[:, 2 + p1 :],
        x_labels=tuple(x_labels),
        z_labels=tuple(z_labels),
        log=log,
        provenance=str(dims.get("provenance", "")),
    )
    frame.validate()
    return frame
