"""Multiplier bootstrap for joint tests and simultaneous critical values.

Everything here works on per-observation influence rows (scores) of the
target coefficients.  One bootstrap draw multiplies the scores by i.i.d.
mean-zero unit-variance weights, and the sup of the studentized column
sums across draws calibrates critical values for the whole coefficient
vector at once, or for the whole curve of per-individual effects.

Replication b always draws its weights from an independent substream keyed
by (seed, b), so results are identical however the replications are
batched or scheduled.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .dsinfer import DoubleSelectionFit
from .errors import ConfigurationError, NumericalError
from .rng import check_seed, substream

logger = logging.getLogger(__name__)

MULTIPLIERS = ("normal", "mammen")

#: Replications are evaluated in batches of this many draws to bound the
#: peak memory at O(n * block) regardless of the total count.
_BLOCK = 64

_GOLDEN = np.sqrt(5.0)


@dataclass(frozen=True)
class BootstrapConfig:
    """Replication count, seed, coverage level, and multiplier law."""

    replications: int = 1000
    seed: int = 0
    level: float = 0.95
    multiplier: str = "normal"

    def __post_init__(self):
        if self.replications < 1:
            raise ConfigurationError("bootstrap needs at least one replication")
        if not (0.0 < self.level < 1.0):
            raise ConfigurationError(f"level must be in (0,1), got {self.level}")
        if self.multiplier not in MULTIPLIERS:
            raise ConfigurationError(
                f"multiplier must be one of {MULTIPLIERS}, got {self.multiplier!r}"
            )
        check_seed(self.seed)
        if self.replications < 100:
            logger.warning(
                "only %d bootstrap replications; reported inference is unreliable",
                self.replications,
            )


@dataclass
class JointTestResult:
    """Observed sup-t statistic with its bootstrap calibration."""

    statistic: float
    critical_value: float
    p_value: float
    cv_coefficients: float
    cv_profile: float | None = None
    replications: int = 0
    level: float = 0.95
    excluded_targets: tuple = ()


def score_matrix(fit: DoubleSelectionFit) -> np.ndarray:
    """Per-observation influence rows for the target coefficients.

    Row i is sqrt(n/(n-k)) * (M^{-1} g_i e_i) restricted to the target
    positions, so that (1/n) sum psi_i psi_i' equals the HC1 sandwich on
    the sqrt(n) scale (n times the stored coefficient-scale omega) and
    sum_i psi_i = 0 by the refit normal equations.
    """
    G = fit.refit_design
    e = fit.refit_residuals
    n, k = G.shape
    if fit.bread.shape != (k, k):
        raise NumericalError(
            f"bread has shape {fit.bread.shape}, refit design has {k} columns"
        )
    idx = np.asarray(fit.target_idx, dtype=np.intp)
    # (M^{-1} g_i)_targets for all i at once
    influence = (G @ fit.bread[:, idx]) * e[:, None]
    return np.sqrt(fit.hc1_factor) * influence


def _draw(gen: np.random.Generator, n: int, law: str) -> np.ndarray:
    if law == "normal":
        return gen.standard_normal(n)
    # Mammen two-point law: mean 0, variance 1
    lo = -(_GOLDEN - 1.0) / 2.0
    hi = (_GOLDEN + 1.0) / 2.0
    p_lo = (_GOLDEN + 1.0) / (2.0 * _GOLDEN)
    u = gen.random(n)
    return np.where(u < p_lo, lo, hi)


def _sup_draws(scores_std: np.ndarray, cfg: BootstrapConfig) -> np.ndarray:
    """Sup over columns of |(1/sqrt(n)) sum_i xi_i s_ij| for each draw.

    ``scores_std`` must already be studentized (unit asymptotic SD per
    column).  Draws are generated per replication from substream
    (seed, b) and evaluated in blocks.
    """
    n = scores_std.shape[0]
    stats = np.empty(cfg.replications)
    root_n = np.sqrt(n)
    for start in range(0, cfg.replications, _BLOCK):
        stop = min(start + _BLOCK, cfg.replications)
        xi = np.empty((stop - start, n))
        for b in range(start, stop):
            xi[b - start] = _draw(substream(cfg.seed, b), n, cfg.multiplier)
        block = np.abs(xi @ scores_std) / root_n
        stats[start:stop] = block.max(axis=1)
    return stats


def _critical_value(draws: np.ndarray, level: float) -> float:
    """Empirical level-quantile, floored at the pointwise normal quantile.

    The floor makes simultaneous intervals contain pointwise ones by
    construction even at small replication counts.
    """
    empirical = float(np.quantile(draws, level, method="higher"))
    return max(empirical, float(norm.ppf(0.5 + level / 2.0)))


def multiplier_bootstrap(scores: np.ndarray, beta: np.ndarray,
                         config: BootstrapConfig | None = None) -> JointTestResult:
    """Joint sup-t test that all target coefficients are zero.

    Studentization uses the score-implied standard errors (columns of the
    score matrix have asymptotic variance n * se_j^2), so rescaling data,
    scores, and estimates together leaves the test invariant.  Targets
    whose scale is exactly zero are excluded from the sup with a warning.
    """
    config = config or BootstrapConfig()
    scores = np.asarray(scores, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    if scores.ndim != 2 or scores.shape[1] != beta.shape[0]:
        raise NumericalError(
            f"scores have shape {scores.shape}, expected (n, {beta.shape[0]})"
        )
    n = scores.shape[0]
    sigma = np.sqrt((scores * scores).mean(axis=0))
    alive = sigma > 0.0
    excluded = tuple(int(j) for j in np.flatnonzero(~alive))
    if excluded:
        logger.warning("excluding %d zero-scale targets from the sup: %s", len(excluded), excluded)
    if not alive.any():
        raise NumericalError("every target has zero scale; nothing to test")

    scores_std = scores[:, alive] / sigma[alive]
    draws = _sup_draws(scores_std, config)
    cv = _critical_value(draws, config.level)
    observed = float(np.max(np.sqrt(n) * np.abs(beta[alive]) / sigma[alive]))
    p_value = float(np.mean(draws >= observed))
    return JointTestResult(
        statistic=observed,
        critical_value=cv,
        p_value=p_value,
        cv_coefficients=cv,
        replications=config.replications,
        level=config.level,
        excluded_targets=excluded,
    )


def simultaneous_profile_cv(scores: np.ndarray, X: np.ndarray,
                            config: BootstrapConfig | None = None) -> float:
    """Simultaneous critical value over the per-individual effects x_i'beta.

    The sup runs over the rows of ``X`` (the realized individuals); rows
    whose effect has exactly zero variance are excluded with a warning.
    """
    config = config or BootstrapConfig()
    scores = np.asarray(scores, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != scores.shape[1]:
        raise NumericalError(
            f"moderator matrix has shape {X.shape}, scores have {scores.shape[1]} columns"
        )
    # profile scores: row i of X paired with observation k gives x_i' psi_k
    profile = scores @ X.T
    scale = np.sqrt((profile * profile).mean(axis=0))
    alive = scale > 0.0
    if not alive.all():
        logger.warning("excluding %d zero-variance profile rows from the sup", int((~alive).sum()))
    if not alive.any():
        raise NumericalError("every profile row has zero variance")
    draws = _sup_draws(profile[:, alive] / scale[alive], config)
    return _critical_value(draws, config.level)


def joint_inference(fit: DoubleSelectionFit, X: np.ndarray | None = None,
                    config: BootstrapConfig | None = None) -> JointTestResult:
    """Convenience wrapper: scores, joint test, and both critical values."""
    config = config or BootstrapConfig()
    scores = score_matrix(fit)
    result = multiplier_bootstrap(scores, fit.beta, config)
    if X is not None:
        result.cv_profile = simultaneous_profile_cv(scores, X, config)
    return result
