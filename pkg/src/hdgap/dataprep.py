"""Tabular ingestion, sample-composition filters, encoding, and interactions.

Turns a raw CSV plus a declared column schema into the numerical design used
downstream: outcome y on the log scale, a binary treatment d, a moderator
block X (constant first) whose columns enter the per-individual effect, and a
control block Z holding a constant, the encoded initial regressors, and all
their surviving two-way interactions.

Column ordering is deterministic everywhere (lexicographic by label) so that
selected supports and seeded runs are reproducible bit for bit.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from itertools import combinations
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DataError, ParseError, SchemaError

logger = logging.getLogger(__name__)

KINDS = ("continuous", "binary", "categorical")
ROLES = ("outcome", "treatment", "moderator", "metadata")
INCOME_FORMS = ("weekly", "annual")

#: Cell contents treated as missing values.
MISSING_TOKENS = frozenset({"", "NA", "N/A", "NaN", "nan", "."})

FILTER_KINDS = (
    "min_age",
    "max_age",
    "min_annual_income",
    "full_time_hours",
    "full_year_weeks",
    "custom_predicate",
)

#: Weeks per year used to move between annual and weekly earnings.
WEEKS_PER_YEAR = 52.0


@dataclass(frozen=True)
class ColumnSchema:
    """Declared type and role of one input column."""

    name: str
    kind: str
    role: str
    baseline: str | None = None
    income_form: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown column kind {self.kind!r} for {self.name!r}")
        if self.role not in ROLES:
            raise ConfigurationError(f"unknown column role {self.role!r} for {self.name!r}")
        if self.kind == "categorical" and self.baseline is None:
            raise ConfigurationError(f"categorical column {self.name!r} needs a baseline")
        if self.kind != "categorical" and self.baseline is not None:
            raise ConfigurationError(f"baseline declared for non-categorical {self.name!r}")
        if self.income_form is not None and self.income_form not in INCOME_FORMS:
            raise ConfigurationError(
                f"income_form for {self.name!r} must be one of {INCOME_FORMS}"
            )


@dataclass(frozen=True)
class DerivedColumn:
    """A moderator computed from an existing continuous column.

    The only transform is ``square_scaled``: source squared, divided by
    ``scale`` (experience squared enters rescaled by 1/50).
    """

    name: str
    source: str
    transform: str = "square_scaled"
    scale: float = 50.0

    def __post_init__(self):
        if self.transform != "square_scaled":
            raise ConfigurationError(f"unknown derived transform {self.transform!r}")
        if not (math.isfinite(self.scale) and self.scale > 0):
            raise ConfigurationError(f"derived scale must be positive, got {self.scale}")

    def compute(self, col: np.ndarray) -> np.ndarray:
        return col * col / self.scale


@dataclass(frozen=True)
class FilterRule:
    """One sample-composition rule.

    ``column`` names the column the rule reads.  ``custom_predicate`` rules
    carry a callable mapping the column dict to a boolean keep-mask instead
    of a threshold.
    """

    kind: str
    column: str | None = None
    threshold: float | None = None
    predicate: object = None

    def __post_init__(self):
        if self.kind not in FILTER_KINDS:
            raise ConfigurationError(f"unknown filter kind {self.kind!r}")
        if self.kind == "custom_predicate":
            if not callable(self.predicate):
                raise ConfigurationError("custom_predicate rule needs a callable predicate")
            return
        if self.column is None:
            raise ConfigurationError(f"filter {self.kind!r} needs a column name")
        if self.threshold is None or not math.isfinite(self.threshold) or self.threshold < 0:
            raise ConfigurationError(
                f"filter {self.kind!r} needs a finite nonnegative threshold"
            )

    def label(self) -> str:
        if self.kind == "custom_predicate":
            return "custom_predicate"
        return f"{self.kind}({self.column}, {self.threshold:g})"


@dataclass
class PrepLog:
    """Bookkeeping of everything removed on the way to a model frame."""

    missing_by_column: dict = field(default_factory=dict)
    rows_missing: int = 0
    filter_drops: dict = field(default_factory=dict)
    rows_filtered: int = 0
    rows_nonpositive_outcome: int = 0
    dropped_columns: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    @property
    def dropped_rows(self) -> int:
        return self.rows_missing + self.rows_filtered + self.rows_nonpositive_outcome

    def copy(self) -> "PrepLog":
        return PrepLog(
            missing_by_column=dict(self.missing_by_column),
            rows_missing=self.rows_missing,
            filter_drops=dict(self.filter_drops),
            rows_filtered=self.rows_filtered,
            rows_nonpositive_outcome=self.rows_nonpositive_outcome,
            dropped_columns=list(self.dropped_columns),
            notes=list(self.notes),
        )


@dataclass
class Dataset:
    """Typed columns plus the schema they conform to.

    Rows with missing values in any declared column have already been
    dropped (and counted in ``log``) by the time a Dataset exists.
    """

    schema: tuple
    columns: dict
    provenance: str = ""
    log: PrepLog = field(default_factory=PrepLog)

    @property
    def n(self) -> int:
        first = next(iter(self.columns.values()))
        return len(first)

    def column_schema(self, name: str) -> ColumnSchema:
        for cs in self.schema:
            if cs.name == name:
                return cs
        raise SchemaError(f"column {name!r} is not declared in the schema")

    def single_role(self, role: str) -> ColumnSchema:
        found = [cs for cs in self.schema if cs.role == role]
        if len(found) != 1:
            raise ConfigurationError(
                f"expected exactly one column with role {role!r}, found {len(found)}"
            )
        return found[0]

    def validate(self) -> None:
        if not self.columns or self.n == 0:
            raise DataError("dataset has no rows")
        self.single_role("outcome")
        treat = self.single_role("treatment")
        if treat.kind != "binary":
            raise ConfigurationError(f"treatment column {treat.name!r} must be binary")
        tvals = self.columns[treat.name]
        if not np.all((tvals == 0.0) | (tvals == 1.0)):
            raise DataError(f"treatment column {treat.name!r} has values outside {{0,1}}")
        for cs in self.schema:
            if cs.kind == "categorical":
                if cs.baseline not in set(self.columns[cs.name].tolist()):
                    raise ConfigurationError(
                        f"baseline {cs.baseline!r} of column {cs.name!r} "
                        "does not occur in the data"
                    )

    def take(self, mask: np.ndarray) -> "Dataset":
        cols = {name: col[mask] for name, col in self.columns.items()}
        return Dataset(self.schema, cols, self.provenance, self.log.copy())


def load_csv(path, schema, provenance: str | None = None) -> Dataset:
    """Read a UTF-8 CSV with a header row into a typed Dataset.

    Every schema column must appear in the header; extra file columns are
    ignored.  Cells failing to parse are collected and raised together as a
    ParseError with (row, column) coordinates; rows containing missing
    values in any declared column are dropped and counted per column.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"input file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"input file is empty: {path}") from None
        rows = list(reader)

    header = [h.strip() for h in header]
    missing_cols = [cs.name for cs in schema if cs.name not in header]
    if missing_cols:
        raise SchemaError(f"file {path} is missing declared columns: {missing_cols}")
    col_idx = {cs.name: header.index(cs.name) for cs in schema}

    n = len(rows)
    raw = {cs.name: [None] * n for cs in schema}
    missing_mask = np.zeros(n, dtype=bool)
    missing_by_column: dict[str, int] = {cs.name: 0 for cs in schema}
    cell_errors: list[tuple[int, str, str]] = []

    for i, row in enumerate(rows):
        for cs in schema:
            j = col_idx[cs.name]
            cell = row[j].strip() if j < len(row) else ""
            if cell in MISSING_TOKENS:
                missing_mask[i] = True
                missing_by_column[cs.name] += 1
                continue
            if cs.kind == "categorical":
                raw[cs.name][i] = cell
                continue
            try:
                value = float(cell)
            except ValueError:
                cell_errors.append((i + 1, cs.name, f"not a number: {cell!r}"))
                continue
            if cs.kind == "binary" and value not in (0.0, 1.0):
                cell_errors.append((i + 1, cs.name, f"binary value outside {{0,1}}: {cell!r}"))
                continue
            raw[cs.name][i] = value

    if cell_errors:
        shown = "; ".join(f"row {r}, column {c}: {m}" for r, c, m in cell_errors[:10])
        more = "" if len(cell_errors) <= 10 else f" (+{len(cell_errors) - 10} more)"
        raise ParseError(f"{len(cell_errors)} unparseable cells in {path}: {shown}{more}", cell_errors)

    keep = ~missing_mask
    columns: dict[str, np.ndarray] = {}
    for cs in schema:
        vals = [raw[cs.name][i] for i in range(n) if keep[i]]
        if cs.kind == "categorical":
            columns[cs.name] = np.array(vals, dtype=object)
        else:
            columns[cs.name] = np.array(vals, dtype=np.float64)

    log = PrepLog(
        missing_by_column={k: v for k, v in missing_by_column.items() if v},
        rows_missing=int(missing_mask.sum()),
    )
    if log.rows_missing:
        logger.info(
            "dropped %d rows with missing values (%s)",
            log.rows_missing,
            ", ".join(f"{k}: {v}" for k, v in log.missing_by_column.items()),
        )
    ds = Dataset(tuple(schema), columns, provenance or str(path), log)
    ds.validate()
    return ds


def _rule_mask(ds: Dataset, rule: FilterRule) -> np.ndarray:
    if rule.kind == "custom_predicate":
        mask = np.asarray(rule.predicate(ds.columns), dtype=bool)
        if mask.shape != (ds.n,):
            raise ConfigurationError("custom predicate returned a mask of the wrong length")
        return mask
    if rule.column not in ds.columns:
        raise SchemaError(f"filter {rule.kind!r} references absent column {rule.column!r}")
    col = ds.columns[rule.column]
    if col.dtype == object:
        raise SchemaError(f"filter {rule.kind!r} needs a numeric column, {rule.column!r} is not")
    if rule.kind == "min_age":
        return col >= rule.threshold
    if rule.kind == "max_age":
        return col <= rule.threshold
    if rule.kind == "min_annual_income":
        cs = ds.column_schema(rule.column)
        factor = WEEKS_PER_YEAR if cs.income_form == "weekly" else 1.0
        return col * factor >= rule.threshold
    # full_time_hours / full_year_weeks: keep at or above the threshold
    return col >= rule.threshold


def apply_filters(ds: Dataset, rules) -> Dataset:
    """Apply sample-composition rules in order, counting drops per rule.

    After filtering, an outcome declared as annual income is converted to
    weekly earnings (annual / 52) and its schema flag updated, so both raw
    and pre-derived files feed the same downstream pipeline.
    """
    out = ds
    for rule in rules:
        mask = _rule_mask(out, rule)
        dropped = int((~mask).sum())
        out = out.take(mask)
        out.log.filter_drops[rule.label()] = dropped
        out.log.rows_filtered += dropped
        if dropped:
            logger.info("filter %s dropped %d rows", rule.label(), dropped)

    outcome = out.single_role("outcome")
    if outcome.income_form == "annual":
        cols = dict(out.columns)
        cols[outcome.name] = cols[outcome.name] / WEEKS_PER_YEAR
        schema = tuple(
            replace(cs, income_form="weekly") if cs.name == outcome.name else cs
            for cs in out.schema
        )
        log = out.log.copy()
        log.notes.append(f"derived weekly wage from annual {outcome.name!r} (annual/52)")
        out = Dataset(schema, cols, out.provenance, log)
    if out.n == 0:
        raise DataError("all rows removed by filters")
    return out


@dataclass(frozen=True)
class EncodedBlock:
    """A labeled numeric block: matrix columns aligned with ``labels``."""

    matrix: np.ndarray
    labels: tuple
    dropped: tuple = ()

    @property
    def width(self) -> int:
        return self.matrix.shape[1]


def label_variables(label: str) -> tuple:
    """Source variables encoded in a column label.

    ``"const"`` maps to no variable, ``"race=black"`` to ``("race",)``,
    ``"a*b"`` to the variables of both parents.  This parse is the inverse of
    the label construction in :func:`encode` and :func:`expand_interactions`.
    """
    if label == "const":
        return ()
    parts = label.split("*")
    return tuple(sorted({p.split("=", 1)[0] for p in parts}))


def encode(ds: Dataset, derived=()) -> EncodedBlock:
    """Encode the moderator columns into a numeric block.

    Categoricals become level-wise dummies with the baseline omitted
    (labels ``name=level``), binary and continuous columns pass through, and
    declared derived columns are appended.  Columns are ordered
    lexicographically by label; zero-variation columns are dropped and
    logged by name.
    """
    cols: list[tuple[str, np.ndarray]] = []
    for cs in ds.schema:
        if cs.role != "moderator":
            continue
        data = ds.columns[cs.name]
        if cs.kind == "categorical":
            levels = sorted(set(data.tolist()))
            if cs.baseline not in levels:
                raise ConfigurationError(
                    f"baseline {cs.baseline!r} of column {cs.name!r} does not occur in the data"
                )
            for level in levels:
                if level == cs.baseline:
                    continue
                cols.append((f"{cs.name}={level}", (data == level).astype(np.float64)))
        else:
            cols.append((cs.name, data.astype(np.float64)))

    existing = {name for name, _ in cols}
    for d in derived:
        if d.source not in ds.columns:
            raise ConfigurationError(f"derived column {d.name!r} needs absent source {d.source!r}")
        src = ds.column_schema(d.source)
        if src.kind != "continuous":
            raise ConfigurationError(f"derived column {d.name!r} needs a continuous source")
        if d.name in existing:
            raise ConfigurationError(f"derived column name {d.name!r} clashes with an encoded column")
        cols.append((d.name, d.compute(ds.columns[d.source])))

    cols.sort(key=lambda item: item[0])
    kept, dropped = [], []
    for label, col in cols:
        if np.all(col == col[0]):
            dropped.append(label)
        else:
            kept.append((label, col))
    if dropped:
        logger.info("dropped %d zero-variation encoded columns: %s", len(dropped), dropped)
    if not kept:
        raise DataError("no moderator columns survive encoding")
    matrix = np.column_stack([col for _, col in kept])
    return EncodedBlock(matrix, tuple(label for label, _ in kept), tuple(dropped))


def expand_interactions(block: EncodedBlock) -> EncodedBlock:
    """All two-way products of distinct encoded columns.

    Pairs are emitted in lexicographic order of the parent label pair
    (labels ``a*b``); products with zero variation (e.g. between mutually
    exclusive dummies of one categorical) are dropped and logged exactly.
    """
    k = block.width
    pairs = list(combinations(range(k), 2))
    n = block.matrix.shape[0]
    try:
        products = np.empty((n, len(pairs)), dtype=np.float64)
    except MemoryError:
        raise DataError(
            f"interaction expansion needs a {n} x {len(pairs)} matrix, out of memory"
        ) from None
    for m, (i, j) in enumerate(pairs):
        np.multiply(block.matrix[:, i], block.matrix[:, j], out=products[:, m])

    kept_idx, labels, dropped = [], [], []
    for m, (i, j) in enumerate(pairs):
        label = f"{block.labels[i]}*{block.labels[j]}"
        col = products[:, m]
        if np.all(col == col[0]):
            dropped.append(label)
        else:
            kept_idx.append(m)
            labels.append(label)
    if dropped:
        logger.info("dropped %d zero-variation interaction columns", len(dropped))
    return EncodedBlock(products[:, kept_idx], tuple(labels), tuple(dropped))


@dataclass
class ModelFrame:
    """The encoded design: y, d, moderators X (constant first), controls Z.

    Z holds a constant, the encoded initial regressors, and the surviving
    two-way interactions.  Reported dimensions follow the convention
    p = p1 + p2 + 1 where p1 counts the moderator columns (constant
    included), p2 the substantive control columns (constant excluded), and
    the extra 1 the regression intercept carried by Z's constant.
    """

    y: np.ndarray
    d: np.ndarray
    X: np.ndarray
    Z: np.ndarray
    x_labels: tuple
    z_labels: tuple
    log: PrepLog = field(default_factory=PrepLog)
    provenance: str = ""

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p1(self) -> int:
        return self.X.shape[1]

    @property
    def p2(self) -> int:
        return self.Z.shape[1] - 1

    @property
    def p(self) -> int:
        return self.p1 + self.p2 + 1

    def dimension_report(self) -> dict:
        return {
            "n": self.n,
            "p1": self.p1,
            "p2": self.p2,
            "p": self.p,
            "dropped_columns": list(self.log.dropped_columns),
            "dropped_rows": self.log.dropped_rows,
        }

    def validate(self) -> None:
        n = self.n
        for arr, want in ((self.d, (n,)), (self.X, (n, self.p1)), (self.Z, (n, self.p2 + 1))):
            if arr.shape != want:
                raise DataError(f"model frame block has shape {arr.shape}, expected {want}")
        if len(self.x_labels) != self.p1 or len(self.z_labels) != self.p2 + 1:
            raise DataError("model frame labels out of sync with matrices")
        for name, mat, labels in (("X", self.X, self.x_labels), ("Z", self.Z, self.z_labels)):
            for j in range(mat.shape[1]):
                col = mat[:, j]
                if labels[j] != "const" and np.all(col == col[0]):
                    raise DataError(f"zero-variation column {labels[j]!r} in {name}")


def build_model_frame(ds: Dataset, derived=()) -> ModelFrame:
    """Assemble the model frame from a filtered dataset.

    The outcome enters as log weekly wage; rows with nonpositive wages are
    rejected and counted (their log is undefined).  Emits the dimension
    report via the returned frame.
    """
    ds.validate()
    outcome = ds.single_role("outcome")
    treatment = ds.single_role("treatment")

    wage = ds.columns[outcome.name]
    bad = wage <= 0.0
    if bad.any():
        ds = ds.take(~bad)
        ds.log.rows_nonpositive_outcome += int(bad.sum())
        logger.warning("rejected %d rows with nonpositive wage", int(bad.sum()))
        if ds.n == 0:
            raise DataError("no rows with positive wage remain")

    d = ds.columns[treatment.name].astype(np.float64)
    if np.all(d == d[0]):
        raise DataError("treatment has zero variance")

    enc = encode(ds, derived)
    inter = expand_interactions(enc)
    n = ds.n
    ones = np.ones((n, 1))
    X = np.hstack([ones, enc.matrix])
    Z = np.hstack([ones, enc.matrix, inter.matrix])
    x_labels = ("const",) + enc.labels
    z_labels = ("const",) + enc.labels + inter.labels

    log = ds.log.copy()
    log.dropped_columns.extend(enc.dropped)
    log.dropped_columns.extend(inter.dropped)

    frame = ModelFrame(
        y=np.log(ds.columns[outcome.name]),
        d=d,
        X=X,
        Z=Z,
        x_labels=x_labels,
        z_labels=z_labels,
        log=log,
        provenance=ds.provenance,
    )
    frame.validate()
    logger.info(
        "model frame: n=%d p1=%d p2=%d p=%d (dropped %d columns, %d rows)",
        frame.n, frame.p1, frame.p2, frame.p, len(log.dropped_columns), log.dropped_rows,
    )
    return frame


def split_dataset(ds: Dataset, column: str) -> dict:
    """Partition a dataset by the levels of a categorical/metadata column."""
    if column not in ds.columns:
        raise SchemaError(f"subgroup column {column!r} is not in the data")
    col = ds.columns[column]
    groups = {}
    for level in sorted(set(col.tolist())):
        groups[str(level)] = ds.take(col == level)
    return groups


def summary_stats(ds: Dataset) -> list:
    """Generic per-column summaries, overall and by treatment group."""
    treatment = ds.single_role("treatment")
    tvals = ds.columns[treatment.name]
    groups = [("all", np.ones(ds.n, dtype=bool))]
    for g in (0.0, 1.0):
        mask = tvals == g
        if mask.any():
            groups.append((f"{treatment.name}={g:g}", mask))

    rows = []
    for cs in ds.schema:
        col = ds.columns[cs.name]
        for gname, mask in groups:
            sub = col[mask]
            if cs.kind == "categorical":
                levels, counts = np.unique(sub, return_counts=True)
                for level, count in zip(levels.tolist(), counts.tolist()):
                    rows.append({
                        "variable": cs.name, "level": level, "group": gname,
                        "n": int(count), "share": count / sub.size,
                    })
            else:
                rows.append({
                    "variable": cs.name, "level": "", "group": gname,
                    "n": int(sub.size), "mean": float(np.mean(sub)),
                    "sd": float(np.std(sub, ddof=1)) if sub.size > 1 else 0.0,
                    "median": float(np.median(sub)),
                })
    return rows
