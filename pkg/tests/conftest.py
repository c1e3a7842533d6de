"""Shared fixtures, including the expensive Monte Carlo studies.

The two simulation studies below are session-scoped because they take tens
of seconds each; the acceptance tests and several statistical invariant
tests read different summaries off the same runs.
"""

import numpy as np
import pytest

from hdgap.dataprep import ModelFrame, PrepLog
from hdgap.rng import substream
from hdgap.synth import DgpSpec, MonteCarloSpec, monte_carlo

# Null study: no treatment effect anywhere, so the joint test's rejection
# rate estimates its size and the per-target z-scores are asymptotically
# standard normal.
NULL_DGP = DgpSpec(
    n=500,
    p1=10,
    p2=200,
    beta=(0.0,) * 10,
    delta_support=(0, 5, 10),
    delta_values=(1.0, -0.8, 0.6),
    rho=0.5,
    noise="heteroscedastic",
    sigma=1.0,
)

# Signal study: two nonzero interaction coefficients, used for band
# coverage and for a power sanity check.
SIGNAL_DGP = DgpSpec(
    n=500,
    p1=5,
    p2=150,
    beta=(0.3, -0.2, 0.0, 0.0, 0.0),
    delta_support=(2, 7, 12),
    delta_values=(0.9, -0.7, 0.5),
    rho=0.5,
    noise="homoscedastic",
    sigma=1.0,
)


@pytest.fixture(scope="session")
def null_mc():
    spec = MonteCarloSpec(
        dgp=NULL_DGP, replications=500, seed=303, bootstrap_replications=500
    )
    return monte_carlo(spec)


@pytest.fixture(scope="session")
def signal_mc():
    spec = MonteCarloSpec(
        dgp=SIGNAL_DGP,
        replications=200,
        seed=404,
        bootstrap_replications=200,
        profile=True,
    )
    return monte_carlo(spec)


def small_frame(seed: int = 5, n: int = 120, p1: int = 3, p2: int = 12) -> ModelFrame:
    """Low-dimensional frame for exact-algebra tests (saturated refits work)."""
    rng = substream(seed, 0)
    X = np.hstack([np.ones((n, 1)), rng.standard_normal((n, p1 - 1))])
    Z = np.hstack([X, rng.standard_normal((n, p2 - (p1 - 1)))])
    d = (rng.random(n) < 0.5).astype(np.float64)
    beta = np.linspace(0.5, -0.5, p1)
    y = X @ beta * d + Z[:, 1:] @ rng.normal(0.0, 0.3, p2) + rng.standard_normal(n)
    x_labels = ("const",) + tuple(f"x{j}" for j in range(1, p1))
    z_labels = ("const",) + tuple(f"x{j}" for j in range(1, p1)) + tuple(
        f"w{j}" for j in range(p2 - (p1 - 1))
    )
    return ModelFrame(
        y=y, d=d, X=X, Z=Z,
        x_labels=x_labels, z_labels=z_labels,
        log=PrepLog(), provenance="test frame",
    )


@pytest.fixture
def frame_small():
    return small_frame()
