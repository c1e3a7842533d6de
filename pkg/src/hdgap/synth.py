"""Synthetic data with known truth, brute-force oracles, and Monte Carlo.

The main DGP draws an AR(1)-correlated Gaussian control block z, takes the
leading columns (plus a constant) as moderators x, assigns a binary
treatment d (independent or propensity-driven), and builds

    y = alpha + (x'beta) d + z'delta + eps.

Everything is keyed to counter-based substreams so frames and Monte Carlo
tables are reproducible across platforms and worker counts.  Substream
paths: (seed, 0) covariates, (seed, 1) treatment, (seed, 2) noise.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import norm

from .bootstrap import BootstrapConfig, multiplier_bootstrap, score_matrix, simultaneous_profile_cv
from .dataprep import ModelFrame, PrepLog
from .dsinfer import PenaltyConfig, double_selection
from .errors import ConfigurationError
from .lasso import LassoProblem, PenaltyLoadings
from .rng import check_seed, substream

logger = logging.getLogger(__name__)

NOISE_KINDS = ("homoscedastic", "heteroscedastic")


@dataclass(frozen=True)
class DgpSpec:
    """A linear interacted-treatment data-generating process.

    ``delta_support``/``delta_values`` give the sparse control
    coefficients.  ``propensity`` is a tuple of (control index, weight)
    pairs; when empty the treatment is an independent coin flip with
    probability ``treat_prob``, otherwise d = 1{sum_k w_k z_k + u > 0}
    with standard normal u.  ``noise`` is homoscedastic (sd ``sigma``) or
    heteroscedastic with sd_i = sigma * sqrt((1 + z_i1^2)/2), which keeps
    the average variance at sigma^2.
    """

    n: int
    p1: int
    p2: int
    beta: tuple
    delta_support: tuple = ()
    delta_values: tuple = ()
    alpha: float = 0.0
    rho: float = 0.0
    noise: str = "homoscedastic"
    sigma: float = 1.0
    treat_prob: float = 0.5
    propensity: tuple = ()
    seed: int = 0

    def __post_init__(self):
        if self.n < 2 or self.p1 < 1 or self.p2 < 1:
            raise ConfigurationError("dimensions must be positive (n >= 2)")
        if self.p1 - 1 > self.p2:
            raise ConfigurationError(
                f"p1={self.p1} moderators need at least p1-1 control columns, got p2={self.p2}"
            )
        if len(self.beta) != self.p1:
            raise ConfigurationError(f"beta has length {len(self.beta)}, expected p1={self.p1}")
        if len(self.delta_support) != len(self.delta_values):
            raise ConfigurationError("delta_support and delta_values lengths differ")
        if len(self.delta_support) > self.p2:
            raise ConfigurationError("delta support exceeds p2")
        if any(not (0 <= j < self.p2) for j in self.delta_support):
            raise ConfigurationError("delta_support index out of range")
        if len(set(self.delta_support)) != len(self.delta_support):
            raise ConfigurationError("delta_support has duplicate indices")
        if not (-1.0 < self.rho < 1.0):
            raise ConfigurationError(f"rho must be in (-1,1), got {self.rho}")
        if self.noise not in NOISE_KINDS:
            raise ConfigurationError(f"noise must be one of {NOISE_KINDS}")
        if self.sigma < 0:
            raise ConfigurationError("sigma must be nonnegative")
        if not (0.0 < self.treat_prob < 1.0):
            raise ConfigurationError("treat_prob must be in (0,1)")
        if any(not (0 <= j < self.p2) for j, _ in self.propensity):
            raise ConfigurationError("propensity index out of range")
        check_seed(self.seed)

    @property
    def delta(self) -> np.ndarray:
        out = np.zeros(self.p2)
        for j, v in zip(self.delta_support, self.delta_values):
            out[j] = v
        return out


@dataclass
class Truth:
    """Ground-truth record accompanying a generated frame."""

    beta: np.ndarray
    delta: np.ndarray
    alpha: float
    effects: np.ndarray
    noise_sd: np.ndarray
    seed: int


def generate(spec: DgpSpec) -> tuple:
    """Draw one frame from the DGP; returns (ModelFrame, Truth)."""
    n, p1, p2 = spec.n, spec.p1, spec.p2

    g_cov = substream(spec.seed, 0)
    shocks = g_cov.standard_normal((n, p2))
    z = np.empty((n, p2))
    z[:, 0] = shocks[:, 0]
    if p2 > 1:
        scale = np.sqrt(1.0 - spec.rho * spec.rho)
        for j in range(1, p2):
            z[:, j] = spec.rho * z[:, j - 1] + scale * shocks[:, j]

    X = np.hstack([np.ones((n, 1)), z[:, : p1 - 1]])

    g_treat = substream(spec.seed, 1)
    if spec.propensity:
        score = np.zeros(n)
        for j, w in spec.propensity:
            score += w * z[:, j]
        d = (score + g_treat.standard_normal(n) > 0.0).astype(np.float64)
    else:
        d = (g_treat.random(n) < spec.treat_prob).astype(np.float64)

    g_noise = substream(spec.seed, 2)
    if spec.noise == "homoscedastic":
        sd = np.full(n, spec.sigma)
    else:
        sd = spec.sigma * np.sqrt((1.0 + z[:, 0] ** 2) / 2.0)
    eps = sd * g_noise.standard_normal(n)

    beta = np.asarray(spec.beta, dtype=np.float64)
    delta = spec.delta
    effects = X @ beta
    y = spec.alpha + effects * d + z @ delta + eps

    width = len(str(p2))
    z_names = tuple(f"z{j + 1:0{width}d}" for j in range(p2))
    frame = ModelFrame(
        y=y,
        d=d,
        X=X,
        Z=np.hstack([np.ones((n, 1)), z]),
        x_labels=("const",) + z_names[: p1 - 1],
        z_labels=("const",) + z_names,
        log=PrepLog(),
        provenance=f"synthetic dgp seed={spec.seed}",
    )
    truth = Truth(beta=beta, delta=delta, alpha=spec.alpha,
                  effects=effects, noise_sd=sd, seed=spec.seed)
    return frame, truth


def prox_oracle(prob: LassoProblem, loads: PenaltyLoadings,
                iters: int = 200_000, step: float | None = None) -> np.ndarray:
    """Proximal-gradient minimizer of the penalized objective.

    Deliberately naive (dense gradient every iteration, fixed step at or
    below 1/L): slow but independent of the production solver, which is
    the point of an oracle.  Meant for tiny instances only.
    """
    W, y = prob.W, prob.y
    n, p = W.shape
    L = 2.0 / n * np.linalg.norm(W, ord=2) ** 2
    if step is None:
        step = 1.0 / L
    elif step > 1.0 / L:
        raise ConfigurationError(f"step {step} exceeds 1/L = {1.0 / L:.3e}")
    thresh = step * loads.lam * loads.psi / n
    thresh[~prob.penalize] = 0.0
    b = np.zeros(p)
    for _ in range(iters):
        grad = (2.0 / n) * (W.T @ (W @ b - y))
        z = b - step * grad
        b = np.sign(z) * np.maximum(np.abs(z) - thresh, 0.0)
    return b


@dataclass(frozen=True)
class MonteCarloSpec:
    """One Monte Carlo study: a DGP plus estimator and budget settings.

    ``bootstrap_replications = 0`` disables the joint test (and the
    profile bands); coverage of the pointwise intervals is always
    recorded.
    """

    dgp: DgpSpec
    replications: int = 200
    seed: int = 0
    method: str = "double"
    penalty: PenaltyConfig = field(default_factory=PenaltyConfig)
    bootstrap_replications: int = 200
    level: float = 0.95
    profile: bool = False
    workers: int = 1

    def __post_init__(self):
        if self.replications < 1:
            raise ConfigurationError("need at least one replication")
        if self.workers < 1:
            raise ConfigurationError("workers must be >= 1")
        check_seed(self.seed)


@dataclass
class MonteCarloResult:
    """Coverage/size/power summaries with binomial Monte Carlo SEs."""

    replications: int
    level: float
    target_labels: tuple
    coverage: np.ndarray
    coverage_se: np.ndarray
    z_scores: np.ndarray
    joint_rejection_rate: float | None = None
    joint_rejection_se: float | None = None
    p_values: np.ndarray | None = None
    profile_coverage: float | None = None
    profile_coverage_se: float | None = None

    def table(self) -> list:
        rows = []
        for j, label in enumerate(self.target_labels):
            rows.append({
                "statistic": f"coverage[{label}]",
                "value": float(self.coverage[j]),
                "mc_se": float(self.coverage_se[j]),
            })
        if self.joint_rejection_rate is not None:
            rows.append({
                "statistic": "joint_rejection_rate",
                "value": self.joint_rejection_rate,
                "mc_se": self.joint_rejection_se,
            })
        if self.profile_coverage is not None:
            rows.append({
                "statistic": "profile_band_coverage",
                "value": self.profile_coverage,
                "mc_se": self.profile_coverage_se,
            })
        return rows


def _child_seed(seed: int, *path: int) -> int:
    ss = np.random.SeedSequence((seed,) + tuple(path))
    return int(ss.generate_state(1, np.uint64)[0])


def _mc_replication(spec: MonteCarloSpec, rep: int) -> dict:
    dgp = replace(spec.dgp, seed=_child_seed(spec.seed, rep, 0))
    frame, truth = generate(dgp)
    fit = double_selection(frame, spec.penalty, method=spec.method)

    err = fit.beta - truth.beta
    z_pt = norm.ppf(0.5 + spec.level / 2.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        z_scores = np.where(fit.se > 0, err / fit.se,
                            np.where(err == 0.0, 0.0, np.inf))
    covered = np.abs(err) <= z_pt * fit.se + 1e-15

    out = {"z_scores": z_scores, "covered": covered}
    if spec.bootstrap_replications > 0:
        cfg = BootstrapConfig(
            replications=spec.bootstrap_replications,
            seed=_child_seed(spec.seed, rep, 1),
            level=spec.level,
        )
        scores = score_matrix(fit)
        test = multiplier_bootstrap(scores, fit.beta, cfg)
        out["p_value"] = test.p_value
        out["reject"] = test.p_value <= 1.0 - spec.level
        if spec.profile:
            # band and coverage both over the treated rows, as in the
            # production pipeline
            rows = frame.d == 1.0
            Xp = frame.X[rows]
            cv = simultaneous_profile_cv(scores, Xp, cfg)
            eff_err = np.abs(Xp @ fit.beta - truth.effects[rows])
            quad = np.einsum("ij,jk,ik->i", Xp, fit.omega, Xp)
            half = cv * np.sqrt(np.maximum(quad, 0.0))
            out["profile_covered"] = bool(np.all(eff_err <= half + 1e-15))
    return out


def monte_carlo(spec: MonteCarloSpec) -> MonteCarloResult:
    """Run the study and aggregate coverage, size, and band coverage.

    Replication r derives its DGP seed from (seed, r, 0) and its bootstrap
    seed from (seed, r, 1), so results do not depend on worker count or
    scheduling; workers > 1 fans replications out to processes.
    """
    reps = range(spec.replications)
    if spec.workers == 1:
        results = [_mc_replication(spec, r) for r in reps]
    else:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            results = list(pool.map(_mc_replication, [spec] * spec.replications, reps))

    p1 = len(spec.dgp.beta)
    covered = np.array([r["covered"] for r in results], dtype=np.float64)
    z_scores = np.array([r["z_scores"] for r in results])
    coverage = covered.mean(axis=0)
    R = spec.replications
    coverage_se = np.sqrt(coverage * (1.0 - coverage) / R)

    width = len(str(spec.dgp.p2))
    labels = ("d*const",) + tuple(
        f"d*z{j:0{width}d}" for j in range(1, p1)
    )
    result = MonteCarloResult(
        replications=R,
        level=spec.level,
        target_labels=labels,
        coverage=coverage,
        coverage_se=coverage_se,
        z_scores=z_scores,
    )
    if spec.bootstrap_replications > 0:
        rejects = np.array([r["reject"] for r in results], dtype=np.float64)
        rate = float(rejects.mean())
        result.joint_rejection_rate = rate
        result.joint_rejection_se = float(np.sqrt(rate * (1.0 - rate) / R))
        result.p_values = np.array([r["p_value"] for r in results])
        if spec.profile:
            prof = np.array([r["profile_covered"] for r in results], dtype=np.float64)
            pc = float(prof.mean())
            result.profile_coverage = pc
            result.profile_coverage_se = float(np.sqrt(pc * (1.0 - pc) / R))
    return result


# ---------------------------------------------------------------------------
# ACS-flavored categorical sample for the bundled dataset and pipeline tests.

_MARITAL = ("divorced", "married", "nevermarried", "widowed")
_MARITAL_P = (0.12, 0.55, 0.28, 0.05)
_RACE = ("asian", "black", "other", "white")
_RACE_P = (0.06, 0.12, 0.05, 0.77)
_ENGLISH = ("fair", "good", "native")
_ENGLISH_P = (0.05, 0.15, 0.80)
_INDUSTRY = ("construction", "manufacturing", "public", "services", "trade")
_INDUSTRY_P = (0.08, 0.18, 0.12, 0.44, 0.18)
_OCCUPATION = ("clerical", "manager", "production", "professional", "sales")
_OCCUPATION_P = (0.2, 0.18, 0.22, 0.25, 0.15)
_REGION = ("midwest", "northeast", "south", "west")
_REGION_P = (0.23, 0.18, 0.36, 0.23)
_REGION_EFFECT = {"midwest": 0.0, "northeast": 0.09, "south": -0.03, "west": 0.07}
_EDUC = (8.0, 10.0, 12.0, 12.0, 12.0, 13.0, 14.0, 16.0, 16.0, 18.0, 20.0)

_OCC_EFFECT = {"clerical": -0.05, "manager": 0.18, "production": 0.0,
               "professional": 0.22, "sales": -0.02}
_IND_EFFECT = {"construction": 0.05, "manufacturing": 0.08, "public": 0.02,
               "services": 0.0, "trade": -0.04}

ACS_HEADER = (
    "wage", "female", "age", "marital", "child_le4", "race", "hispanic",
    "english", "yearseduc", "experience", "veteran", "industry",
    "occupation", "hours", "weeks", "region",
)


def acs_like_rows(n: int, seed: int = 0) -> list:
    """Rows (lists of strings) for a plausible-looking ACS-flavored CSV.

    Wages are annual dollars with a built-in gender gap; a sprinkle of
    missing cells and out-of-range ages/hours exercises the ingestion and
    filter paths.  String formatting is fixed so output is reproducible.
    """
    g = substream(seed, 7)
    rows = []
    for _ in range(n):
        female = int(g.random() < 0.5)
        age = int(g.integers(22, 67))
        educ = float(g.choice(_EDUC))
        exper = max(age - educ - 6.0, 0.0)
        marital = str(g.choice(_MARITAL, p=_MARITAL_P))
        child = int(g.random() < 0.25)
        race = str(g.choice(_RACE, p=_RACE_P))
        hispanic = int(g.random() < 0.15)
        english = str(g.choice(_ENGLISH, p=_ENGLISH_P))
        veteran = int(g.random() < 0.08)
        industry = str(g.choice(_INDUSTRY, p=_INDUSTRY_P))
        occupation = str(g.choice(_OCCUPATION, p=_OCCUPATION_P))
        hours = int(np.clip(round(41 + 7 * g.standard_normal()), 10, 80))
        weeks = int(g.choice((40, 50, 52, 52, 52, 52, 52, 52)))
        region = str(g.choice(_REGION, p=_REGION_P))

        log_weekly = (
            6.05
            + 0.060 * (educ - 12.0)
            + 0.016 * exper
            - 0.010 * exper * exper / 50.0
            + _OCC_EFFECT[occupation]
            + _IND_EFFECT[industry]
            + _REGION_EFFECT[region]
            + 0.03 * (marital == "married")
            + female * (-0.13 - 0.05 * child + 0.005 * (educ - 12.0))
            + 0.35 * g.standard_normal()
        )
        annual = np.exp(log_weekly) * 52.0

        cells = [
            f"{annual:.2f}", str(female), str(age), marital, str(child), race,
            str(hispanic), english, f"{educ:g}", f"{exper:.1f}", str(veteran),
            industry, occupation, str(hours), str(weeks), region,
        ]
        if g.random() < 0.010:
            cells[7] = "NA"      # english
        if g.random() < 0.005:
            cells[13] = ""       # hours
        rows.append(cells)
    return rows


def write_acs_like_csv(path, n: int, seed: int = 0) -> None:
    """Write the bundled-sample CSV (UTF-8, comma-separated, LF endings)."""
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(ACS_HEADER)
        writer.writerows(acs_like_rows(n, seed))
