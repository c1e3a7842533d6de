"""Frozen solver-verification fixtures.

Five small penalized regression instances, each fully determined by a seed,
paired with the objective value of an independent proximal-gradient
minimizer run for one million iterations (scripts/make_fixtures.py).  The
values are frozen here so the test suite never depends on the slow oracle.
"""

import numpy as np

from hdgap.lasso import LassoProblem, PenaltyLoadings, estimate_loadings
from hdgap.rng import substream

FIXTURE_SEED = 20240501

# (lam, c, unpenalized columns, correlated design)
_CASES = (
    (2.0, 1.1, (), False),
    (3.0, 1.1, (0,), False),
    (None, 0.5, (), False),      # theory penalty at the robustness constant
    (8.0, 1.1, (), False),       # heavy penalty, sparse support
    (0.5, 1.1, (0,), True),      # light penalty on correlated columns
)

# Objective of the proximal oracle after 1e6 iterations, one per case.
# Regenerate with: python3 scripts/make_fixtures.py
ORACLE_OBJECTIVES = (
    1.5391706429412833,
    0.3358485715793881,
    4.25202780022884,
    3.7786053854905957,
    0.06815655260911072,
)


def build_fixture(k: int) -> tuple[LassoProblem, PenaltyLoadings]:
    """Rebuild fixture ``k`` exactly as the freezing script does."""
    lam, c, unpen, correlated = _CASES[k]
    rng = substream(FIXTURE_SEED, k)
    W = rng.standard_normal((8, 5))
    if correlated:
        W[:, 2] = 0.9 * W[:, 1] + 0.1 * W[:, 2]
    if unpen:
        W[:, list(unpen)] = 1.0
    beta = np.array([1.5, 0.0, -1.0, 0.0, 0.5])
    y = W @ beta + 0.3 * rng.standard_normal(8)
    penalize = np.ones(5, dtype=bool)
    for j in unpen:
        penalize[j] = False
    prob = LassoProblem(y, W, penalize)
    loads = estimate_loadings(prob, None, c=c)
    if lam is not None:
        from dataclasses import replace

        loads = replace(loads, lam=float(lam))
    return prob, loads


def objective(prob: LassoProblem, loads: PenaltyLoadings, coef: np.ndarray) -> float:
    resid = prob.y - prob.W @ coef
    pen = np.sum(loads.psi[prob.penalize] * np.abs(coef[prob.penalize]))
    return float(resid @ resid / prob.n + loads.lam / prob.n * pen)
