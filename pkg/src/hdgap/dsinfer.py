"""Double-selection inference for the interacted treatment coefficients.

The model is y_i = (d_i x_i)'beta + z_i'delta + eps_i where d is a binary
treatment, x_i the p1 moderator columns (constant first), and z_i a
high-dimensional control vector.  All p1 interaction coefficients beta_j are
inference targets; controls are chosen by lasso in two passes (outcome
equation, then one auxiliary equation per target regressor) and the final
estimate is ordinary least squares on the targets plus the union of the
selected controls, with a heteroscedasticity-robust covariance.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .dataprep import ModelFrame
from .errors import ConfigurationError, DataError, NumericalError
from .lasso import LassoProblem, fit_auto

logger = logging.getLogger(__name__)

#: Relative tolerance for declaring a refit column collinear with the
#: columns already accepted.
_COLLIN_RTOL = 1e-9

_COND_LIMIT = 1e12

METHODS = ("double", "single")


@dataclass(frozen=True)
class PenaltyConfig:
    """Penalty settings shared by every selection regression.

    ``c`` scales the theory-based level, ``gamma`` is the slack probability
    (default 0.1/log n), and ``refinements`` counts the residual-based
    loading updates.  The penalty itself is recomputed per regression since
    the loadings depend on that regression's residuals.  ``lam`` pins the
    penalty level instead (``lam=0`` turns every selection step into plain
    least squares, sensible only when p < n).
    """

    c: float = 1.1
    gamma: float | None = None
    refinements: int = 2
    lam: float | None = None

    def __post_init__(self):
        if not (self.c > 0):
            raise ConfigurationError(f"penalty constant c must be positive, got {self.c}")
        if self.refinements < 0:
            raise ConfigurationError("refinements must be nonnegative")
        if self.lam is not None and self.lam < 0:
            raise ConfigurationError(f"lambda must be nonnegative, got {self.lam}")


@dataclass
class DoubleSelectionFit:
    """Targets, robust covariance, and the refit artifacts behind them.

    ``omega`` is on the coefficient scale (the sandwich divided by n), so
    ``se = sqrt(diag(omega))`` directly.  ``union_support`` and the
    per-equation supports are index sets into Z's columns.  The refit
    design, coefficients, residuals and bread are retained because the
    bootstrap rebuilds per-observation scores from them.
    """

    beta: np.ndarray
    se: np.ndarray
    omega: np.ndarray
    target_labels: tuple
    union_support: tuple
    outcome_support: tuple
    per_target_supports: tuple
    dropped_controls: tuple
    refit_design: np.ndarray
    refit_coef: np.ndarray
    refit_residuals: np.ndarray
    refit_labels: tuple
    target_idx: tuple
    bread: np.ndarray
    hc1_factor: float
    cond: float
    method: str = "double"
    diagnostics: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.refit_design.shape[0]

    @property
    def p1(self) -> int:
        return self.beta.shape[0]

    @property
    def refit_n_params(self) -> int:
        return self.refit_design.shape[1]

    def control_coefficients(self) -> dict:
        """Refit coefficients of the retained controls, by label."""
        out = {}
        tset = set(self.target_idx)
        for pos, label in enumerate(self.refit_labels):
            if pos not in tset:
                out[label] = float(self.refit_coef[pos])
        return out


@dataclass
class RobustCovariance:
    """HC1 sandwich pieces for a least-squares refit."""

    omega: np.ndarray
    bread: np.ndarray
    hc1_factor: float
    cond: float


@dataclass
class EffectProfile:
    """Per-individual effects x_i'beta with pointwise and simultaneous bands."""

    effects: np.ndarray
    se_pointwise: np.ndarray
    band_halfwidth: np.ndarray
    cv: float
    significant: np.ndarray
    quantile_levels: np.ndarray
    quantile_effect: np.ndarray
    quantile_lower: np.ndarray
    quantile_upper: np.ndarray


def _select(y, W, unpenalized, penalty: PenaltyConfig, tag, diagnostics):
    penalize = np.ones(W.shape[1], dtype=bool)
    for j in unpenalized:
        penalize[j] = False
    prob = LassoProblem(y, W, penalize)
    fit, loads = fit_auto(
        prob, c=penalty.c, gamma=penalty.gamma, lam=penalty.lam,
        refinements=penalty.refinements, post=False,
    )
    diagnostics[tag] = {
        "lam": loads.lam,
        "support_size": len(fit.support),
        "sweeps": fit.report.sweeps,
        "kkt_violation": fit.report.kkt_violation,
    }
    return set(int(j) for j in fit.support)


def _greedy_independent(columns, labels, n_targets):
    """Accept columns left to right, dropping ones collinear with the basis.

    Targets (the first ``n_targets`` columns) may never be dropped: a target
    that fails the rank check raises instead.  Returns (kept indices,
    dropped labels).
    """
    n = columns[0].shape[0]
    basis = np.empty((n, len(columns)))
    kept, dropped = [], []
    r = 0
    for idx, col in enumerate(columns):
        v = col.astype(np.float64, copy=True)
        nv = np.linalg.norm(v)
        if r:
            v -= basis[:, :r] @ (basis[:, :r].T @ v)
            # second orthogonalization pass for numerical safety
            v -= basis[:, :r] @ (basis[:, :r].T @ v)
        res = np.linalg.norm(v)
        if nv == 0.0 or res <= _COLLIN_RTOL * nv:
            if idx < n_targets:
                raise DataError(
                    f"target regressor {labels[idx]!r} is collinear with the "
                    "other targets and selected controls"
                )
            dropped.append(labels[idx])
            continue
        basis[:, r] = v / res
        kept.append(idx)
        r += 1
    return kept, dropped


def robust_vcov(design: np.ndarray, residuals: np.ndarray, target_idx) -> RobustCovariance:
    """Heteroscedasticity-consistent covariance of a least-squares refit.

    Sandwich M^{-1} S M^{-1} with M = (1/n)G'G and S = (1/n)sum g g' e^2,
    multiplied by the small-sample factor n/(n-k), then divided by n so the
    returned target block is on the coefficient scale.
    """
    G = np.asarray(design, dtype=np.float64)
    e = np.asarray(residuals, dtype=np.float64)
    n, k = G.shape
    if e.shape != (n,):
        raise NumericalError(f"residual vector has shape {e.shape}, expected ({n},)")
    if n <= k:
        raise NumericalError(
            f"HC1 correction undefined: n={n} parameters k={k} leave no degrees of freedom"
        )
    M = (G.T @ G) / n
    cond = float(np.linalg.cond(M))
    if not np.isfinite(cond) or cond > _COND_LIMIT:
        raise NumericalError(
            f"refit design is numerically singular (condition number {cond:.3e})"
        )
    bread = np.linalg.inv(M)
    Ge = G * (e * e)[:, None]
    S = (G.T @ Ge) / n
    hc1 = n / (n - k)
    full = bread @ S @ bread * hc1
    idx = np.asarray(list(target_idx), dtype=np.intp)
    omega = full[np.ix_(idx, idx)] / n
    omega = (omega + omega.T) / 2.0
    return RobustCovariance(omega=omega, bread=bread, hc1_factor=hc1, cond=cond)


def double_selection(frame: ModelFrame, penalty: PenaltyConfig | None = None,
                     method: str = "double") -> DoubleSelectionFit:
    """Select controls, refit by OLS, and return targets with robust SEs.

    Step 1 runs a lasso of y on Z.  Step 2 (skipped when
    ``method="single"``) runs, for each target regressor d*x_j, a lasso of
    that regressor on Z plus the other target regressors.  Step 3 refits y
    by least squares on all p1 target regressors plus the union of the
    selected Z columns.  Z's constant is never penalized, so it is always
    part of the union.
    """
    if method not in METHODS:
        raise ConfigurationError(f"selection method must be one of {METHODS}, got {method!r}")
    penalty = penalty or PenaltyConfig()
    frame.validate()

    y, d, X, Z = frame.y, frame.d, frame.X, frame.Z
    n, p1 = X.shape
    T = d[:, None] * X
    target_labels = tuple(f"d*{lab}" for lab in frame.x_labels)
    for j in range(p1):
        if np.all(T[:, j] == T[0, j]):
            raise DataError(
                f"target regressor {target_labels[j]!r} has zero variance; "
                "its coefficient is not identified"
            )

    diagnostics: dict = {}
    outcome_support = _select(y, Z, (0,), penalty, "outcome", diagnostics)
    union = set(outcome_support)

    per_target: list = []
    if method == "double":
        z_width = Z.shape[1]
        for j in range(p1):
            mask = np.ones(p1, dtype=bool)
            mask[j] = False
            W_aux = np.hstack([Z, T[:, mask]])
            sup = _select(T[:, j], W_aux, (0,), penalty, f"aux_{j}", diagnostics)
            sup_z = tuple(sorted(s for s in sup if s < z_width))
            per_target.append(sup_z)
            union.update(sup_z)
    else:
        per_target = [() for _ in range(p1)]

    union_sorted = tuple(sorted(union))
    columns = [T[:, j] for j in range(p1)] + [Z[:, j] for j in union_sorted]
    labels = list(target_labels) + [frame.z_labels[j] for j in union_sorted]
    kept_idx, dropped = _greedy_independent(columns, labels, p1)
    if dropped:
        logger.info("dropped %d collinear control columns at refit: %s", len(dropped), dropped)

    G = np.column_stack([columns[i] for i in kept_idx])
    refit_labels = tuple(labels[i] for i in kept_idx)
    kept_union = tuple(
        union_sorted[i - p1] for i in kept_idx if i >= p1
    )
    k = G.shape[1]
    if n <= k:
        raise DataError(
            f"sample too small after selection: n={n}, p1={p1}, |union|={len(kept_union)}"
        )

    Q, R = np.linalg.qr(G)
    coef = solve_triangular(R, Q.T @ y, lower=False)
    residuals = y - G @ coef

    target_idx = tuple(range(p1))
    vc = robust_vcov(G, residuals, target_idx)
    beta = coef[:p1].copy()
    se = np.sqrt(np.diag(vc.omega))

    return DoubleSelectionFit(
        beta=beta,
        se=se,
        omega=vc.omega,
        target_labels=target_labels,
        union_support=kept_union,
        outcome_support=tuple(sorted(outcome_support)),
        per_target_supports=tuple(per_target),
        dropped_controls=tuple(dropped),
        refit_design=G,
        refit_coef=coef,
        refit_residuals=residuals,
        refit_labels=refit_labels,
        target_idx=target_idx,
        bread=vc.bread,
        hc1_factor=vc.hc1_factor,
        cond=vc.cond,
        method=method,
        diagnostics=diagnostics,
    )


DEFAULT_QUANTILE_LEVELS = np.arange(1, 100, dtype=np.float64) / 100.0


def order_statistic_band(effects: np.ndarray, halfwidth: np.ndarray,
                         levels: np.ndarray) -> tuple:
    """Quantile curve with each individual's band carried along by rank.

    Effects are sorted and the level-q curve value is the order statistic
    at rank ceil(q n); the band endpoints at that level are the endpoints
    of that same individual, not independent quantiles of the endpoint
    arrays.  Returns (effect, lower, upper) arrays over ``levels``.
    """
    levels = np.asarray(levels, dtype=np.float64)
    if levels.ndim != 1 or levels.size == 0 or np.any((levels <= 0) | (levels >= 1)):
        raise ConfigurationError("quantile levels must lie strictly inside (0,1)")
    if np.any(np.diff(levels) <= 0):
        raise ConfigurationError("quantile levels must be strictly increasing")
    n = effects.shape[0]
    order = np.argsort(effects, kind="stable")
    ranks = np.clip(np.ceil(levels * n).astype(np.intp) - 1, 0, n - 1)
    eff_s = effects[order]
    lo_s = (effects - halfwidth)[order]
    hi_s = (effects + halfwidth)[order]
    return eff_s[ranks], lo_s[ranks], hi_s[ranks]


def profile_from_components(effects: np.ndarray, se: np.ndarray, cv: float) -> EffectProfile:
    """Assemble an EffectProfile from effects and pointwise SEs.

    Used both by :func:`effect_profile` and to rebuild a profile from its
    serialized per-individual table.
    """
    if cv < 0:
        raise ConfigurationError(f"critical value must be nonnegative, got {cv}")
    effects = np.asarray(effects, dtype=np.float64)
    se = np.asarray(se, dtype=np.float64)
    if effects.shape != se.shape or effects.ndim != 1 or effects.size == 0:
        raise ConfigurationError("effects and pointwise SEs must be matching 1-d arrays")
    if np.any(se < 0):
        raise ConfigurationError("pointwise SEs must be nonnegative")
    half = cv * se
    significant = (effects - half > 0.0) | (effects + half < 0.0)
    levels = DEFAULT_QUANTILE_LEVELS.copy()
    eff_q, lo_q, up_q = order_statistic_band(effects, half, levels)
    return EffectProfile(
        effects=effects,
        se_pointwise=se,
        band_halfwidth=half,
        cv=float(cv),
        significant=significant,
        quantile_levels=levels,
        quantile_effect=eff_q,
        quantile_lower=lo_q,
        quantile_upper=up_q,
    )


def effect_profile(fit: DoubleSelectionFit, X: np.ndarray, cv: float) -> EffectProfile:
    """Per-individual effect estimates x_i'beta with confidence bands.

    ``cv`` is the simultaneous critical value (from the bootstrap); the
    halfwidth at row i is cv * sqrt(x_i' omega x_i).  The quantile grid
    carries each ranked individual's own band endpoints (see
    :func:`order_statistic_band`).
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != fit.p1:
        raise ConfigurationError(
            f"moderator matrix has shape {X.shape}, expected (*, {fit.p1})"
        )
    effects = X @ fit.beta
    quad = np.einsum("ij,jk,ik->i", X, fit.omega, X)
    se = np.sqrt(np.maximum(quad, 0.0))
    return profile_from_components(effects, se, cv)


def marginal_effects_table(fit: DoubleSelectionFit, cv_sim: float,
                           level: float = 0.95) -> list:
    """Per-target rows with pointwise and simultaneous intervals.

    A negative coefficient on a moderator means the gap widens with that
    variable.  The significance flag uses the simultaneous interval, so it
    is coherent with the joint test at the same level.
    """
    from scipy.stats import norm

    if not (0.0 < level < 1.0):
        raise ConfigurationError(f"level must be in (0,1), got {level}")
    if cv_sim < 0:
        raise ConfigurationError(f"critical value must be nonnegative, got {cv_sim}")
    z = float(norm.ppf(0.5 + level / 2.0))
    rows = []
    for j, label in enumerate(fit.target_labels):
        b, s = float(fit.beta[j]), float(fit.se[j])
        rows.append({
            "label": label,
            "estimate": b,
            "se": s,
            "ci_lower": b - z * s,
            "ci_upper": b + z * s,
            "sim_lower": b - cv_sim * s,
            "sim_upper": b + cv_sim * s,
            "significant": bool(b - cv_sim * s > 0.0 or b + cv_sim * s < 0.0),
        })
    return rows
