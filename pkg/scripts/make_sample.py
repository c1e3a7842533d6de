#!/usr/bin/env python3
"""Regenerate the bundled synthetic sample CSV.

The file is committed; rerun this only when the generator changes, and
expect frozen test dimensions to need re-freezing afterwards.
"""

from pathlib import Path

from hdgap.synth import write_acs_like_csv

SEED = 20240801
ROWS = 1000

if __name__ == "__main__":
    out = Path(__file__).resolve().parent.parent / "data" / "synthetic_sample.csv"
    out.parent.mkdir(exist_ok=True)
    write_acs_like_csv(out, ROWS, SEED)
    print(f"wrote {out}")
