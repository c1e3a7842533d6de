"""Declarative run configuration.

One TOML file drives the whole pipeline: data location and column schema,
sample filters, derived columns, penalty and bootstrap settings,
decomposition covariate sets, report options, optional subgroup strata,
and an optional simulation study.  Command-line flags override config
values; the precedence is flag > config > built-in default.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .dataprep import ColumnSchema, Dataset, DerivedColumn, FilterRule
from .dsinfer import PenaltyConfig
from .errors import ConfigurationError

FORMATS = ("csv", "json", "svg")


@dataclass(frozen=True)
class SubgroupRule:
    """One stratum: an inclusive numeric [lo, hi] window on a column."""

    name: str
    lo: float = float("-inf")
    hi: float = float("inf")

    def __post_init__(self):
        if self.lo > self.hi:
            raise ConfigurationError(
                f"subgroup {self.name!r} has empty range [{self.lo}, {self.hi}]"
            )


@dataclass(frozen=True)
class BootstrapSettings:
    replications: int = 1000
    seed: int = 0
    level: float = 0.95
    multiplier: str = "normal"


@dataclass
class RunConfig:
    """Everything a pipeline command needs, resolved and validated."""

    config_path: Path
    data_csv: Path
    out_dir: Path
    schema: tuple
    filters: tuple
    derived: tuple
    penalty: PenaltyConfig
    bootstrap: BootstrapSettings
    provenance: str = ""
    decompose_specs: tuple = ("unconditional", "human_capital", "full")
    human_capital: tuple = ("yearseduc", "experience", "expsq")
    report_groups: tuple = ()
    formats: tuple = FORMATS
    subgroup_column: str | None = None
    subgroups: tuple = ()
    simulate: dict = field(default_factory=dict)
    threads: int = 1
    # raw CLI overrides, kept so commands can apply flag-over-config
    # precedence to their own sections
    cli_seed: int | None = None
    cli_replications: int | None = None

    def group_names(self) -> list:
        names = ["full"]
        names.extend(rule.name for rule in self.subgroups)
        return names

    def split_subgroups(self, ds: Dataset) -> dict:
        """Partition a dataset by the configured strata.

        Every row must land in exactly one stratum, so strata windows form
        a partition of the column's observed range.
        """
        groups = {"full": ds}
        if not self.subgroups:
            return groups
        col = ds.columns.get(self.subgroup_column)
        if col is None:
            raise ConfigurationError(
                f"subgroup column {self.subgroup_column!r} is not declared in the schema"
            )
        if col.dtype == object:
            raise ConfigurationError(
                f"subgroup column {self.subgroup_column!r} must be numeric"
            )
        hits = None
        masks = {}
        for rule in self.subgroups:
            mask = (col >= rule.lo) & (col <= rule.hi)
            masks[rule.name] = mask
            hits = mask.astype(int) if hits is None else hits + mask.astype(int)
        if (hits == 0).any() or (hits > 1).any():
            bad = int((hits != 1).sum())
            raise ConfigurationError(
                f"subgroup windows on {self.subgroup_column!r} must partition the "
                f"data; {bad} rows fall in zero or multiple strata"
            )
        for rule in self.subgroups:
            groups[rule.name] = ds.take(masks[rule.name])
        return groups


def _require_table(doc: dict, key: str, path) -> dict:
    value = doc.get(key)
    if not isinstance(value, dict):
        raise ConfigurationError(f"config {path} needs a [{key}] section")
    return value


def _as_tuple_of_str(value, what: str) -> tuple:
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise ConfigurationError(f"{what} must be a list of strings")
    return tuple(value)


def _parse_columns(table: dict) -> tuple:
    schema = []
    for name, spec in table.items():
        if not isinstance(spec, dict):
            raise ConfigurationError(f"[columns.{name}] must be a table")
        known = {"kind", "role", "baseline", "income_form"}
        extra = set(spec) - known
        if extra:
            raise ConfigurationError(f"[columns.{name}] has unknown keys {sorted(extra)}")
        schema.append(ColumnSchema(
            name=name,
            kind=spec.get("kind", ""),
            role=spec.get("role", ""),
            baseline=spec.get("baseline"),
            income_form=spec.get("income_form"),
        ))
    if not schema:
        raise ConfigurationError("[columns] declares no columns")
    return tuple(schema)


def _parse_filters(items) -> tuple:
    rules = []
    for i, item in enumerate(items):
        if not isinstance(item, dict):
            raise ConfigurationError(f"[[filters]] entry {i} must be a table")
        rules.append(FilterRule(
            kind=item.get("kind", ""),
            column=item.get("column"),
            threshold=float(item["threshold"]) if "threshold" in item else None,
        ))
    return tuple(rules)


def _parse_derived(items) -> tuple:
    out = []
    for i, item in enumerate(items):
        if not isinstance(item, dict):
            raise ConfigurationError(f"[[derived]] entry {i} must be a table")
        out.append(DerivedColumn(
            name=item.get("name", ""),
            source=item.get("source", ""),
            transform=item.get("transform", "square_scaled"),
            scale=float(item.get("scale", 50.0)),
        ))
    return tuple(out)


def _parse_subgroups(table: dict) -> tuple:
    rules = []
    for name, spec in table.items():
        if not isinstance(spec, dict):
            raise ConfigurationError(f"[subgroups.groups.{name}] must be a table")
        rules.append(SubgroupRule(
            name=name,
            lo=float(spec.get("min", float("-inf"))),
            hi=float(spec.get("max", float("inf"))),
        ))
    return tuple(rules)


def load_config(path, overrides: dict | None = None) -> RunConfig:
    """Parse and validate a TOML run configuration.

    ``overrides`` maps CLI flag names (out, seed, threads, penalty_c,
    replications, format) onto values taking precedence over the file.
    """
    overrides = overrides or {}
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"config file not found: {path}")
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"config file {path} is not valid TOML: {exc}") from exc

    base = path.parent
    data = _require_table(doc, "data", path)
    csv_path = data.get("csv")
    if not isinstance(csv_path, str):
        raise ConfigurationError("[data] needs a 'csv' path")
    data_csv = (base / csv_path).resolve()
    if not data_csv.exists():
        raise ConfigurationError(f"data file does not exist: {data_csv}")

    out_value = overrides.get("out") or doc.get("output", {}).get("directory", "runs/out")
    out_dir = Path(out_value)
    if not out_dir.is_absolute():
        # flag-supplied paths resolve against the caller's cwd, config
        # values against the config file location
        out_dir = (Path.cwd() if "out" in overrides else base) / out_dir
    out_dir = Path(os.path.normpath(out_dir))

    schema = _parse_columns(_require_table(doc, "columns", path))
    filters = _parse_filters(doc.get("filters", []))
    derived = _parse_derived(doc.get("derived", []))

    model = doc.get("model", {})
    penalty = PenaltyConfig(
        c=float(model.get("penalty_c", 1.1)),
        gamma=float(model["gamma"]) if "gamma" in model else None,
        refinements=int(model.get("refinements", 2)),
        lam=float(model["lam"]) if "lam" in model else None,
    )
    if overrides.get("penalty_c") is not None:
        penalty = replace(penalty, c=float(overrides["penalty_c"]))

    boot_tbl = doc.get("bootstrap", {})
    bootstrap = BootstrapSettings(
        replications=int(overrides.get("replications") or boot_tbl.get("replications", 1000)),
        seed=int(overrides["seed"]) if overrides.get("seed") is not None
        else int(boot_tbl.get("seed", 0)),
        level=float(boot_tbl.get("level", 0.95)),
        multiplier=str(boot_tbl.get("multiplier", "normal")),
    )

    dec = doc.get("decompose", {})
    specs = tuple(dec.get("specs", ("unconditional", "human_capital", "full")))
    human = tuple(dec.get("human_capital", ("yearseduc", "experience", "expsq")))

    rep = doc.get("report", {})
    groups = _as_tuple_of_str(rep.get("interval_groups", []), "report.interval_groups")
    if overrides.get("format"):
        formats = tuple(overrides["format"])
    else:
        formats = tuple(rep.get("formats", list(FORMATS)))
    for fmt in formats:
        if fmt not in FORMATS:
            raise ConfigurationError(f"unknown output format {fmt!r}; choose from {FORMATS}")

    sub = doc.get("subgroups", {})
    sub_col = sub.get("column")
    sub_rules = _parse_subgroups(sub.get("groups", {})) if sub_col else ()
    if sub.get("groups") and not sub_col:
        raise ConfigurationError("[subgroups] defines groups but no 'column'")

    threads = int(overrides["threads"]) if overrides.get("threads") is not None else 1
    if threads < 1:
        raise ConfigurationError("--threads must be >= 1")

    cfg = RunConfig(
        config_path=path.resolve(),
        data_csv=data_csv,
        out_dir=out_dir,
        schema=schema,
        filters=filters,
        derived=derived,
        penalty=penalty,
        bootstrap=bootstrap,
        provenance=str(data.get("provenance", csv_path)),
        decompose_specs=specs,
        human_capital=human,
        report_groups=groups,
        formats=formats,
        subgroup_column=sub_col,
        subgroups=sub_rules,
        simulate=doc.get("simulate", {}),
        threads=threads,
        cli_seed=int(overrides["seed"]) if overrides.get("seed") is not None else None,
        cli_replications=int(overrides["replications"])
        if overrides.get("replications") is not None else None,
    )
    for spec in cfg.decompose_specs:
        if spec not in ("unconditional", "human_capital", "full"):
            raise ConfigurationError(f"unknown decomposition spec {spec!r}")
    return cfg
