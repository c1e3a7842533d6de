"""Recompute the frozen oracle objectives in tests/oracle_fixtures.py.

Runs the naive proximal-gradient minimizer for one million iterations on
each fixture and prints the objective tuple to paste into the test module.
Takes a minute or two; only needed when a fixture definition changes.
"""

import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))

from oracle_fixtures import _CASES, build_fixture, objective  # noqa: E402

from hdgap.synth import prox_oracle  # noqa: E402


def main() -> None:
    print("ORACLE_OBJECTIVES = (")
    for k in range(len(_CASES)):
        prob, loads = build_fixture(k)
        coef = prox_oracle(prob, loads, iters=1_000_000)
        obj = objective(prob, loads, coef)
        nnz = int(np.count_nonzero(coef[prob.penalize]))
        print(f"    {obj!r},   # support {nnz}")
    print(")")


if __name__ == "__main__":
    main()
