"""Weighted L1-penalized least squares via cyclic coordinate descent.

Solves

    min_b  (1/n) ||y - W b||^2  +  (lambda/n) sum_j psi_j |b_j|

where the sum runs over penalized columns only (an intercept is handled as an
unpenalized column of ones).  The penalty level follows the theory-based rule

    lambda = 2 c sqrt(n) PhiInv(1 - gamma / (2 p))

with defaults c = 1.1 and gamma = 0.1 / log(n), and per-column loadings

    psi_j = sqrt( (1/n) sum_i w_ij^2 e_i^2 )

re-estimated from residuals for a small number of refinement passes.  The
loadings absorb heteroscedasticity; no homoscedasticity assumption is made.

Columns are centered nowhere and scaled to unit root-mean-square internally
only; reported coefficients, objective values, and stationarity checks are on
the original scale of the inputs.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.stats import norm

from .errors import ConfigurationError, ConvergenceError

logger = logging.getLogger(__name__)

__all__ = [
    "LassoProblem",
    "PenaltyLoadings",
    "SolverReport",
    "LassoFit",
    "soft_threshold",
    "default_gamma",
    "compute_penalty",
    "estimate_loadings",
    "fit_lasso",
    "post_lasso_refit",
    "fit_auto",
]

#: Relative diagonal threshold below which a QR factor is treated as rank
#: deficient in the post-selection refit.
_RANK_TOL = 1e-12


@dataclass(frozen=True)
class LassoProblem:
    """A penalized regression instance.

    ``penalize`` marks which columns carry the L1 penalty; unpenalized columns
    (typically the intercept) are fit by pure least-squares stationarity.
    """

    y: np.ndarray
    W: np.ndarray
    penalize: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=np.float64)
        W = np.asarray(self.W, dtype=np.float64)
        pen = np.asarray(self.penalize, dtype=bool)
        if W.ndim != 2:
            raise ValueError("W must be a 2-d array")
        n, p = W.shape
        if y.shape != (n,):
            raise ValueError(f"y has shape {y.shape}, expected ({n},)")
        if pen.shape != (p,):
            raise ValueError(f"penalize has shape {pen.shape}, expected ({p},)")
        if n < 2 or p < 1:
            raise ValueError(f"need n >= 2 and p >= 1, got n={n}, p={p}")
        scale = np.sqrt(np.mean(W * W, axis=0))
        if np.any(scale == 0.0):
            dead = np.flatnonzero(scale == 0.0)
            raise ValueError(f"all-zero columns at indices {dead.tolist()}")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "penalize", pen)

    @property
    def n(self) -> int:
        return self.W.shape[0]

    @property
    def p(self) -> int:
        return self.W.shape[1]


@dataclass(frozen=True)
class PenaltyLoadings:
    """Penalty level and per-column loadings.

    ``iterations`` counts how many estimation passes produced ``psi`` (1 for
    the initial pass based on centered-response residuals).
    """

    psi: np.ndarray
    lam: float
    c: float
    gamma: float
    iterations: int = 1


@dataclass(frozen=True)
class SolverReport:
    """Diagnostics from one coordinate-descent run."""

    sweeps: int
    kkt_violation: float
    lam: float
    support_size: int
    converged: bool
    objective_trace: tuple[float, ...] = ()


@dataclass(frozen=True)
class LassoFit:
    """Solution of a :class:`LassoProblem`.

    ``coefficients`` are on the original column scale; entries outside
    ``support`` are exactly zero.  ``support`` holds the nonzero penalized
    columns plus every unpenalized column.  ``post`` (when present) is the
    least-squares re-estimate on the support, zeros elsewhere.
    """

    coefficients: np.ndarray
    support: np.ndarray
    objective: float
    report: SolverReport
    post: np.ndarray | None = None

    def residuals(self, prob: LassoProblem, use_post: bool = False) -> np.ndarray:
        coef = self.post if (use_post and self.post is not None) else self.coefficients
        return prob.y - prob.W @ coef


def soft_threshold(z: float, t: float) -> float:
    """Return sign(z) * max(|z| - t, 0); t must be nonnegative."""
    if t < 0:
        raise ValueError(f"threshold must be nonnegative, got {t}")
    if z > t:
        return z - t
    if z < -t:
        return z + t
    return 0.0


def default_gamma(n: int) -> float:
    """Tail probability 0.1 / log(n) used when none is supplied."""
    return 0.1 / math.log(n)


def compute_penalty(n: int, p: int, c: float = 1.1, gamma: float | None = None) -> float:
    """Penalty level 2 c sqrt(n) PhiInv(1 - gamma/(2p)).

    ``p`` is the number of penalized candidate columns.  With gamma -> 1 and
    p = 1 the quantile collapses to the median and the penalty vanishes.
    """
    if n < 2 or p < 1:
        raise ConfigurationError(f"need n >= 2 and p >= 1, got n={n}, p={p}")
    if c <= 0:
        raise ConfigurationError(f"penalty constant c must be positive, got {c}")
    if gamma is None:
        gamma = default_gamma(n)
    if not 0.0 < gamma < 1.0:
        raise ConfigurationError(f"gamma must lie in (0, 1), got {gamma}")
    return 2.0 * c * math.sqrt(n) * norm.ppf(1.0 - gamma / (2.0 * p))


def estimate_loadings(
    prob: LassoProblem,
    fit: LassoFit | None = None,
    *,
    c: float = 1.1,
    gamma: float | None = None,
    iterations: int = 1,
) -> PenaltyLoadings:
    """Estimate per-column penalty loadings from residuals.

    psi_j = sqrt((1/n) sum_i w_ij^2 e_i^2), with e the residuals of ``fit``
    when given and the centered response otherwise.  A perfect fit (all
    residuals zero) falls back to plain column root-mean-squares with a
    warning, as do individual columns whose loading would vanish.
    """
    if gamma is None:
        gamma = default_gamma(prob.n)
    if fit is None:
        resid = prob.y - prob.y.mean()
    else:
        resid = fit.residuals(prob)
    col_rms = np.sqrt(np.mean(prob.W * prob.W, axis=0))
    if not np.any(resid):
        logger.warning("zero residual vector; falling back to column-norm loadings")
        psi = col_rms.copy()
    else:
        psi = np.sqrt(np.mean(prob.W * prob.W * (resid * resid)[:, None], axis=0))
        floored = psi <= 0.0
        if np.any(floored & prob.penalize):
            names = np.flatnonzero(floored & prob.penalize).tolist()
            logger.warning("flooring vanishing loadings at columns %s", names)
        psi[floored] = col_rms[floored]
    n_pen = int(prob.penalize.sum())
    # nothing penalized means plain least squares; the level is irrelevant
    lam = 0.0 if n_pen == 0 else compute_penalty(prob.n, n_pen, c=c, gamma=gamma)
    return PenaltyLoadings(psi=psi, lam=lam, c=c, gamma=gamma, iterations=iterations)


def _objective(prob: LassoProblem, loads: PenaltyLoadings, coef: np.ndarray) -> float:
    resid = prob.y - prob.W @ coef
    pen = np.sum(loads.psi[prob.penalize] * np.abs(coef[prob.penalize]))
    return float(resid @ resid / prob.n + loads.lam / prob.n * pen)


def kkt_violation(prob: LassoProblem, loads: PenaltyLoadings, coef: np.ndarray) -> float:
    """Worst stationarity violation of ``coef`` on the original scale.

    For penalized columns: |grad_j| <= (lambda/n) psi_j at zeros, equality
    with matching sign at nonzeros.  Unpenalized columns must have zero
    gradient.  The gradient is that of the quadratic term, -(2/n) W'(y - Wb).
    """
    n = prob.n
    grad = -2.0 / n * (prob.W.T @ (prob.y - prob.W @ coef))
    bound = loads.lam / n * loads.psi
    worst = 0.0
    for j in range(prob.p):
        if not prob.penalize[j]:
            worst = max(worst, abs(grad[j]))
        elif coef[j] == 0.0:
            worst = max(worst, abs(grad[j]) - bound[j])
        else:
            worst = max(worst, abs(grad[j] + math.copysign(bound[j], coef[j])))
    return worst


def fit_lasso(
    prob: LassoProblem,
    loads: PenaltyLoadings,
    *,
    tol: float = 1e-7,
    max_sweeps: int = 10_000,
) -> LassoFit:
    """Solve the penalized problem by cyclic coordinate descent.

    Columns are scaled to unit root-mean-square internally; convergence is
    declared when the largest coefficient change in a full sweep falls below
    ``tol`` on that standardized scale.  Between full sweeps the solver
    iterates over the active set only.  Updates are cyclic in fixed column
    order, so results are deterministic.
    """
    if np.any(loads.psi[prob.penalize] <= 0.0):
        raise ValueError("loadings must be strictly positive on penalized columns")
    if loads.lam < 0.0:
        raise ValueError(f"lambda must be nonnegative, got {loads.lam}")

    n, p = prob.n, prob.p
    scale = np.sqrt(np.mean(prob.W * prob.W, axis=0))
    Ws = prob.W / scale
    thresh = np.where(prob.penalize, loads.lam / (2.0 * n) * loads.psi / scale, 0.0)

    # Gram updates cost O(p) per changed coordinate and are independent of n;
    # residual updates cost O(n) per coordinate.  Pick whichever is cheaper.
    use_gram = p <= max(n, 512)
    b = np.zeros(p)
    yty = float(prob.y @ prob.y)
    gb = r = None
    if use_gram:
        q = Ws.T @ prob.y / n
        G = Ws.T @ Ws / n
        gb = np.zeros(p)
    else:
        r = prob.y.copy()

    def rss() -> float:
        if use_gram:
            return max(yty / n - 2.0 * float(q @ b) + float(b @ gb), 0.0)
        return float(r @ r) / n

    # Penalty on the standardized scale equals the original-scale penalty, so
    # the traced objective matches _objective up to float error.
    def objective_now() -> float:
        pen = float((thresh * 2.0 * n) @ np.abs(b)) / n
        return rss() + pen

    def sweep(indices) -> float:
        nonlocal gb, r
        max_delta = 0.0
        if use_gram:
            for j in indices:
                bj = b[j]
                cj = q[j] - gb[j] + bj
                nj = soft_threshold(cj, thresh[j])
                if nj != bj:
                    gb = gb + G[:, j] * (nj - bj)
                    b[j] = nj
                    d = abs(nj - bj)
                    if d > max_delta:
                        max_delta = d
        else:
            for j in indices:
                bj = b[j]
                cj = float(Ws[:, j] @ r) / n + bj
                nj = soft_threshold(cj, thresh[j])
                if nj != bj:
                    r = r - Ws[:, j] * (nj - bj)
                    b[j] = nj
                    d = abs(nj - bj)
                    if d > max_delta:
                        max_delta = d
        return max_delta

    all_idx = range(p)
    sweeps = 0
    trace: list[float] = []
    converged = False
    while sweeps < max_sweeps:
        delta = sweep(all_idx)
        sweeps += 1
        trace.append(objective_now())
        if delta < tol:
            converged = True
            break
        # Active-set phase: nonzeros plus unpenalized columns.
        active = np.flatnonzero((b != 0.0) | ~prob.penalize)
        while sweeps < max_sweeps:
            delta = sweep(active)
            sweeps += 1
            if delta < tol:
                break
        trace.append(objective_now())

    coef = b / scale
    kkt = kkt_violation(prob, loads, coef)
    if not converged:
        raise ConvergenceError(
            f"coordinate descent did not converge in {max_sweeps} sweeps "
            f"(kkt violation {kkt:.3e})",
            coefficients=coef,
            kkt_violation=kkt,
        )
    support = np.flatnonzero((coef != 0.0) | ~prob.penalize)
    report = SolverReport(
        sweeps=sweeps,
        kkt_violation=kkt,
        lam=loads.lam,
        support_size=int(support.size),
        converged=True,
        objective_trace=tuple(trace),
    )
    return LassoFit(
        coefficients=coef,
        support=support,
        objective=_objective(prob, loads, coef),
        report=report,
    )


def post_lasso_refit(prob: LassoProblem, fit: LassoFit) -> LassoFit:
    """Least-squares re-estimate on the selected support.

    Uses a QR solve on the support columns; a rank-deficient support (or more
    support columns than rows) degrades to the minimum-norm solution with a
    logged warning, never silently.  Coefficients off the support stay zero.
    """
    support = fit.support
    post = np.zeros(prob.p)
    if support.size == 0:
        return replace(fit, post=post)
    Wsup = prob.W[:, support]
    min_norm = Wsup.shape[1] > prob.n
    if not min_norm:
        Q, R = np.linalg.qr(Wsup)
        diag = np.abs(np.diag(R))
        if diag.min() <= _RANK_TOL * max(diag.max(), 1.0):
            min_norm = True
        else:
            sol = np.linalg.solve(R, Q.T @ prob.y)
    if min_norm:
        logger.warning(
            "post-selection refit is rank deficient (%d columns, %d rows); "
            "returning the minimum-norm solution",
            Wsup.shape[1],
            prob.n,
        )
        sol = np.linalg.lstsq(Wsup, prob.y, rcond=None)[0]
    post[support] = sol
    return replace(fit, post=post)


def fit_auto(
    prob: LassoProblem,
    *,
    c: float = 1.1,
    gamma: float | None = None,
    lam: float | None = None,
    refinements: int = 2,
    loading_rtol: float = 1e-4,
    post: bool = True,
    tol: float = 1e-7,
    max_sweeps: int = 10_000,
) -> tuple[LassoFit, PenaltyLoadings]:
    """Fit with data-driven penalty and refined loadings.

    Runs the initial loading pass (centered-response residuals), then up to
    ``refinements`` re-estimations from lasso residuals, stopping early when
    the largest relative loading change drops below ``loading_rtol``.  Pass
    ``lam`` to pin the penalty level (``lam=0`` recovers least squares).
    """
    loads = estimate_loadings(prob, None, c=c, gamma=gamma)
    if lam is not None:
        if lam < 0:
            raise ConfigurationError(f"lambda must be nonnegative, got {lam}")
        loads = replace(loads, lam=float(lam))
    fit = fit_lasso(prob, loads, tol=tol, max_sweeps=max_sweeps)
    for k in range(refinements):
        psi_new = estimate_loadings(prob, fit, c=c, gamma=loads.gamma).psi
        rel = float(np.max(np.abs(psi_new - loads.psi) / np.maximum(loads.psi, 1e-30)))
        loads = replace(loads, psi=psi_new, iterations=k + 2)
        if rel < loading_rtol:
            break
        fit = fit_lasso(prob, loads, tol=tol, max_sweeps=max_sweeps)
    if post:
        fit = post_lasso_refit(prob, fit)
    return fit, loads
