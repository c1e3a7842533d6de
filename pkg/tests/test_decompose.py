"""Mean-gap decomposition identities and the effect reconciliation."""

import numpy as np
import pytest

from hdgap.dataprep import ModelFrame, PrepLog
from hdgap.decompose import (
    group_regressions,
    oaxaca_blinder,
    reconcile_mean_effect,
    wage_ratio,
)
from hdgap.dsinfer import PenaltyConfig, double_selection
from hdgap.errors import ConfigurationError, DataError
from hdgap.rng import substream
from hdgap.synth import DgpSpec, generate


def _wage_frame(seed: int = 31, n: int = 300) -> ModelFrame:
    """Frame with labeled moderators resembling the production schema."""
    rng = substream(seed, 0)
    educ = rng.choice([10.0, 12.0, 14.0, 16.0, 18.0], size=n)
    exper = rng.uniform(0.0, 30.0, size=n)
    expsq = exper * exper / 50.0
    married = (rng.random(n) < 0.5).astype(np.float64)
    X = np.column_stack([np.ones(n), educ, exper, expsq, married])
    x_labels = ("const", "yearseduc", "experience", "expsq", "marital=married")
    d = (rng.random(n) < 0.5).astype(np.float64)
    Z = np.column_stack([X, rng.standard_normal((n, 3))])
    z_labels = x_labels + ("w1", "w2", "w3")
    y = (
        5.5 + 0.07 * educ + 0.02 * exper - 0.01 * expsq + 0.05 * married
        + d * (-0.15 + 0.004 * (educ - 12.0))
        + 0.3 * rng.standard_normal(n)
    )
    return ModelFrame(
        y=y, d=d, X=X, Z=Z, x_labels=x_labels, z_labels=z_labels,
        log=PrepLog(), provenance="decompose test",
    )


def test_identity_total_equals_parts():
    frame = _wage_frame()
    for spec in ("unconditional", "human_capital", "full"):
        res = oaxaca_blinder(frame, spec)
        assert res.explained + res.unexplained == pytest.approx(res.total_gap, abs=1e-10)


def test_total_gap_is_mean_difference():
    frame = _wage_frame()
    res = oaxaca_blinder(frame, "full")
    fem = frame.d == 1.0
    want = float(frame.y[~fem].mean() - frame.y[fem].mean())
    assert res.total_gap == pytest.approx(want, abs=1e-10)


def test_unconditional_nothing_explained():
    frame = _wage_frame()
    res = oaxaca_blinder(frame, "unconditional")
    assert res.explained == pytest.approx(0.0, abs=1e-12)
    assert res.unexplained == pytest.approx(res.total_gap, abs=1e-12)
    assert res.ratio_conditional == pytest.approx(res.ratio_unconditional, abs=1e-12)


def test_reference_flip_preserves_total():
    frame = _wage_frame()
    male = oaxaca_blinder(frame, "full", reference="male")
    female = oaxaca_blinder(frame, "full", reference="female")
    assert male.total_gap == pytest.approx(female.total_gap, abs=1e-12)
    assert male.explained + male.unexplained == pytest.approx(
        female.explained + female.unexplained, abs=1e-10
    )
    # the split itself moves when the pricing vector changes
    assert male.explained != pytest.approx(female.explained, abs=1e-6)


def test_human_capital_columns():
    frame = _wage_frame()
    res = oaxaca_blinder(frame, "human_capital")
    assert set(res.group.labels) == {"const", "yearseduc", "experience", "expsq"}
    custom = oaxaca_blinder(frame, "human_capital", variables=("yearseduc",))
    assert set(custom.group.labels) == {"const", "yearseduc"}
    with pytest.raises(ConfigurationError, match="no moderator columns"):
        oaxaca_blinder(frame, "human_capital", variables=("nonexistent",))


def test_wage_ratio_construction():
    frame = _wage_frame()
    res = oaxaca_blinder(frame, "full")
    reg = res.group
    want = float(np.exp(reg.xbar_f @ reg.gamma_f - reg.xbar_f @ reg.gamma_m))
    assert wage_ratio(frame, "full") == pytest.approx(want, abs=1e-12)
    # unconditional ratio is the raw geometric mean ratio
    fem = frame.d == 1.0
    raw = float(np.exp(frame.y[fem].mean() - frame.y[~fem].mean()))
    assert wage_ratio(frame, "unconditional") == pytest.approx(raw, abs=1e-12)


def test_group_regression_guards():
    frame = _wage_frame()
    with pytest.raises(ConfigurationError, match="constant"):
        group_regressions(frame, columns=[1, 2])
    all_female = ModelFrame(
        y=frame.y, d=np.ones(frame.n), X=frame.X, Z=frame.Z,
        x_labels=frame.x_labels, z_labels=frame.z_labels,
        log=PrepLog(), provenance="",
    )
    with pytest.raises(DataError):
        group_regressions(all_female)


def test_joint_collinearity_dropping():
    frame = _wage_frame()
    X = np.hstack([frame.X, frame.X[:, 1:2]])  # duplicate educ
    dup = ModelFrame(
        y=frame.y, d=frame.d, X=X, Z=frame.Z,
        x_labels=frame.x_labels + ("educcopy",),
        z_labels=frame.z_labels, log=PrepLog(), provenance="",
    )
    reg = group_regressions(dup)
    assert "educcopy" in reg.dropped
    assert len(reg.labels) == frame.p1
    base = group_regressions(frame)
    np.testing.assert_allclose(reg.gamma_m, base.gamma_m, atol=1e-10)


def test_reconciliation_exact_without_selection():
    """With lam=0 and controls spanned by moderators, the female-sample mean
    effect equals the negative unexplained gap exactly."""
    dgp = DgpSpec(
        n=200, p1=6, p2=5,
        beta=(-0.2, 0.1, 0.0, 0.05, 0.0, -0.1),
        delta_support=(0, 3), delta_values=(0.5, -0.4),
        rho=0.3, seed=17,
    )
    frame, _ = generate(dgp)
    fit = double_selection(frame, PenaltyConfig(lam=0.0, refinements=0))
    rec = reconcile_mean_effect(fit, frame)
    assert abs(rec["difference_female"]) <= 1e-8
    # the all-sample mean is a diagnostic, not an identity
    assert "difference_all" in rec


def test_reconciliation_label_mismatch():
    frame = _wage_frame()
    dgp = DgpSpec(n=100, p1=3, p2=4, beta=(0.1, 0.0, 0.0), seed=3)
    other, _ = generate(dgp)
    fit = double_selection(other, PenaltyConfig(lam=0.0, refinements=0))
    with pytest.raises(ConfigurationError, match="different covariate sets"):
        reconcile_mean_effect(fit, frame)
