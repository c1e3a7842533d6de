"""Command-line entry point.

Subcommands map onto pipeline stages: ``prepare`` builds and stores model
frames, ``fit`` runs selection + inference + bootstrap, ``decompose`` the
group-wise mean decomposition, ``report`` renders figure artifacts,
``summary`` descriptive statistics, and ``simulate`` Monte Carlo studies.
Every command drops its outputs plus a manifest (config hash, input hash,
output hashes, versions) and a copy of the config into the run directory,
so a run documents itself.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import platform
import shutil
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .bootstrap import BootstrapConfig, multiplier_bootstrap, score_matrix, simultaneous_profile_cv
from .config import RunConfig, load_config
from .dataprep import apply_filters, build_model_frame, load_csv, summary_stats
from .decompose import oaxaca_blinder
from .dsinfer import (double_selection, effect_profile, marginal_effects_table,
                      profile_from_components)
from .errors import ConfigurationError, DataError, NumericalError
from .frameio import read_frame, write_frame
from .report import (PlotStyle, effect_interval_plot, quantile_curve, read_csv_rows,
                     render_interval_svg, render_quantile_svg, save_svg, write_csv,
                     write_json)
from .synth import DgpSpec, MonteCarloSpec, monte_carlo

logger = logging.getLogger(__name__)


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _copy_config(cfg: RunConfig) -> Path:
    dest = cfg.out_dir / "config.toml"
    if dest.resolve() != cfg.config_path:
        shutil.copyfile(cfg.config_path, dest)
    return dest


def _write_manifest(cfg: RunConfig, outputs) -> Path:
    """Merge this command's outputs into the run manifest.

    The manifest carries no timestamps or thread counts, so identical
    inputs and config give a byte-identical manifest.
    """
    man_path = cfg.out_dir / "manifest.json"
    recorded = {}
    if man_path.exists():
        try:
            recorded = json.loads(man_path.read_text(encoding="utf-8")).get("outputs", {})
        except (ValueError, OSError):
            recorded = {}
    for out in outputs:
        recorded[str(Path(out).relative_to(cfg.out_dir))] = _sha256(Path(out))
    manifest = {
        "config_sha256": _sha256(cfg.config_path),
        "data_sha256": _sha256(cfg.data_csv),
        "outputs": {k: recorded[k] for k in sorted(recorded)},
        "versions": {
            "hdgap": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
    }
    write_json(man_path, manifest)
    return man_path


def _setup_logging(cfg: RunConfig, command: str) -> logging.Handler:
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    log_dir = cfg.out_dir / "logs"
    log_dir.mkdir(exist_ok=True)
    # no timestamps: log files must be reproducible byte for byte
    handler = logging.FileHandler(log_dir / f"{command}.log", mode="w", encoding="utf-8")
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger("hdgap")
    root.setLevel(logging.INFO)
    root.addHandler(handler)
    return handler


def _load_groups(cfg: RunConfig):
    ds = load_csv(cfg.data_csv, cfg.schema, cfg.provenance)
    ds = apply_filters(ds, cfg.filters)
    return cfg.split_subgroups(ds)


def cmd_prepare(cfg: RunConfig) -> int:
    outputs = [_copy_config(cfg)]
    report = {}
    for name, sub in _load_groups(cfg).items():
        frame = build_model_frame(sub, cfg.derived)
        fdir = cfg.out_dir / "frames" / name
        write_frame(frame, fdir)
        outputs.extend([fdir / "design.bin", fdir / "labels.txt", fdir / "dimensions.json"])
        report[name] = frame.dimension_report()
        logger.info("prepared frame %s: n=%d p=%d", name, frame.n, frame.p)
    path = cfg.out_dir / "prepare_report.json"
    write_json(path, report)
    outputs.append(path)
    _write_manifest(cfg, outputs)
    return 0


def _frame_for(cfg: RunConfig, name: str):
    fdir = cfg.out_dir / "frames" / name
    if not (fdir / "design.bin").exists():
        raise DataError(
            f"no prepared frame at {fdir}; run 'hdgap prepare --config ...' first"
        )
    return read_frame(fdir)


def cmd_fit(cfg: RunConfig) -> int:
    outputs = [_copy_config(cfg)]
    for name in cfg.group_names():
        frame = _frame_for(cfg, name)
        fit = double_selection(frame, cfg.penalty)
        scores = score_matrix(fit)
        bcfg = BootstrapConfig(
            replications=cfg.bootstrap.replications,
            seed=cfg.bootstrap.seed,
            level=cfg.bootstrap.level,
            multiplier=cfg.bootstrap.multiplier,
        )
        joint = multiplier_bootstrap(scores, fit.beta, bcfg)
        women = frame.d == 1.0
        cv_profile = simultaneous_profile_cv(scores, frame.X[women], bcfg)
        profile = effect_profile(fit, frame.X[women], cv_profile)
        table = marginal_effects_table(fit, joint.cv_coefficients, cfg.bootstrap.level)

        inference = {
            "group": name,
            "n": frame.n,
            "dimensions": frame.dimension_report(),
            "penalty": {"c": cfg.penalty.c, "gamma": cfg.penalty.gamma,
                        "refinements": cfg.penalty.refinements, "lam": cfg.penalty.lam},
            "bootstrap": {"replications": bcfg.replications, "seed": bcfg.seed,
                          "level": bcfg.level, "multiplier": bcfg.multiplier},
            "joint_test": {"statistic": joint.statistic,
                           "critical_value": joint.critical_value,
                           "p_value": joint.p_value,
                           "cv_profile": cv_profile},
            "share_significant_negative": float(np.mean(profile.effects + profile.band_halfwidth < 0)),
            "share_significant_positive": float(np.mean(profile.effects - profile.band_halfwidth > 0)),
            "union_support": [frame.z_labels[j] for j in fit.union_support],
            "outcome_support": [frame.z_labels[j] for j in fit.outcome_support],
            "dropped_controls": list(fit.dropped_controls),
            "control_coefficients": fit.control_coefficients(),
            "targets": table,
            "diagnostics": fit.diagnostics,
        }
        p_json = cfg.out_dir / f"inference_{name}.json"
        write_json(p_json, inference)
        p_marg = cfg.out_dir / f"marginal_effects_{name}.csv"
        write_csv(p_marg, table)
        prof_rows = [
            {"effect": float(profile.effects[i]), "se": float(profile.se_pointwise[i]),
             "halfwidth": float(profile.band_halfwidth[i]),
             "significant": bool(profile.significant[i])}
            for i in range(profile.effects.shape[0])
        ]
        p_prof = cfg.out_dir / f"profile_{name}.csv"
        write_csv(p_prof, prof_rows)
        qc = quantile_curve(profile)
        p_quant = cfg.out_dir / f"quantile_{name}.csv"
        write_csv(p_quant, qc.rows())
        outputs.extend([p_json, p_marg, p_prof, p_quant])
        logger.info("fit %s: joint p=%.4f, |union|=%d",
                    name, joint.p_value, len(fit.union_support))
    _write_manifest(cfg, outputs)
    return 0


def cmd_decompose(cfg: RunConfig) -> int:
    outputs = [_copy_config(cfg)]
    for name in cfg.group_names():
        frame = _frame_for(cfg, name)
        rows = [
            oaxaca_blinder(frame, spec, cfg.human_capital).as_row()
            for spec in cfg.decompose_specs
        ]
        if "csv" in cfg.formats:
            path = cfg.out_dir / f"decomposition_{name}.csv"
            write_csv(path, rows)
            outputs.append(path)
        if "json" in cfg.formats:
            path = cfg.out_dir / f"decomposition_{name}.json"
            write_json(path, {"group": name, "rows": rows})
            outputs.append(path)
    _write_manifest(cfg, outputs)
    return 0


def _float_rows(rows, fields):
    out = []
    for row in rows:
        conv = dict(row)
        for f in fields:
            conv[f] = float(row[f])
        if "significant" in row:
            conv["significant"] = row["significant"] == "true"
        out.append(conv)
    return out


def cmd_report(cfg: RunConfig) -> int:
    outputs = [_copy_config(cfg)]
    for name in cfg.group_names():
        inf_path = cfg.out_dir / f"inference_{name}.json"
        if not inf_path.exists():
            raise DataError(
                f"missing {inf_path}; run 'hdgap fit --config ...' first"
            )
        inference = json.loads(inf_path.read_text(encoding="utf-8"))
        cv_profile = float(inference["joint_test"]["cv_profile"])

        prof_rows = read_csv_rows(cfg.out_dir / f"profile_{name}.csv")
        effects = np.array([float(r["effect"]) for r in prof_rows])
        se = np.array([float(r["se"]) for r in prof_rows])
        profile = profile_from_components(effects, se, cv_profile)
        qc = quantile_curve(profile)
        if "svg" in cfg.formats:
            style = PlotStyle(title=f"effect quantiles ({name})",
                              x_label="quantile level", y_label="effect (log scale)")
            path = cfg.out_dir / f"quantile_{name}.svg"
            save_svg(render_quantile_svg(qc, style), path)
            outputs.append(path)
        if "json" in cfg.formats:
            path = cfg.out_dir / f"report_{name}.json"
            write_json(path, {
                "group": name,
                "share_significant_negative": qc.share_significant_negative,
                "share_significant_positive": qc.share_significant_positive,
                "quantiles": qc.rows(),
            })
            outputs.append(path)

        raw = read_csv_rows(cfg.out_dir / f"marginal_effects_{name}.csv")
        table = _float_rows(raw, ("estimate", "se", "ci_lower", "ci_upper",
                                  "sim_lower", "sim_upper"))
        for var in cfg.report_groups:
            rows = effect_interval_plot(table, var)
            if "csv" in cfg.formats:
                path = cfg.out_dir / f"intervals_{name}_{var}.csv"
                write_csv(path, rows)
                outputs.append(path)
            if "svg" in cfg.formats:
                style = PlotStyle(title=f"{var} effects ({name})",
                                  x_label="effect (log scale)")
                path = cfg.out_dir / f"intervals_{name}_{var}.svg"
                save_svg(render_interval_svg(rows, style), path)
                outputs.append(path)
    _write_manifest(cfg, outputs)
    return 0


def cmd_summary(cfg: RunConfig) -> int:
    outputs = [_copy_config(cfg)]
    for name, sub in _load_groups(cfg).items():
        rows = summary_stats(sub)
        path = cfg.out_dir / f"summary_{name}.csv"
        write_csv(path, rows, fieldnames=["variable", "level", "group", "n",
                                          "mean", "sd", "median", "share"])
        outputs.append(path)
    _write_manifest(cfg, outputs)
    return 0


def cmd_simulate(cfg: RunConfig) -> int:
    sim = cfg.simulate
    if not sim:
        raise ConfigurationError("config has no [simulate] section")
    dgp_tbl = sim.get("dgp")
    if not isinstance(dgp_tbl, dict):
        raise ConfigurationError("[simulate] needs a [simulate.dgp] table")
    try:
        dgp = DgpSpec(
            n=int(dgp_tbl["n"]),
            p1=int(dgp_tbl["p1"]),
            p2=int(dgp_tbl["p2"]),
            beta=tuple(float(b) for b in dgp_tbl["beta"]),
            delta_support=tuple(int(j) for j in dgp_tbl.get("delta_support", [])),
            delta_values=tuple(float(v) for v in dgp_tbl.get("delta_values", [])),
            alpha=float(dgp_tbl.get("alpha", 0.0)),
            rho=float(dgp_tbl.get("rho", 0.0)),
            noise=str(dgp_tbl.get("noise", "homoscedastic")),
            sigma=float(dgp_tbl.get("sigma", 1.0)),
            treat_prob=float(dgp_tbl.get("treat_prob", 0.5)),
            propensity=tuple((int(j), float(w)) for j, w in dgp_tbl.get("propensity", [])),
            seed=int(dgp_tbl.get("seed", 0)),
        )
    except KeyError as exc:
        raise ConfigurationError(f"[simulate.dgp] is missing key {exc}") from exc
    replications = (cfg.cli_replications if cfg.cli_replications is not None
                    else int(sim.get("replications", 200)))
    seed = cfg.cli_seed if cfg.cli_seed is not None else int(sim.get("seed", 0))
    mc_spec = MonteCarloSpec(
        dgp=dgp,
        replications=replications,
        seed=seed,
        method=str(sim.get("method", "double")),
        penalty=cfg.penalty,
        bootstrap_replications=int(sim.get("bootstrap_replications", 200)),
        level=float(sim.get("level", 0.95)),
        profile=bool(sim.get("profile", False)),
        workers=cfg.threads,
    )
    result = monte_carlo(mc_spec)
    rows = result.table()
    p_csv = cfg.out_dir / "simulate_results.csv"
    write_csv(p_csv, rows)
    p_json = cfg.out_dir / "simulate_results.json"
    write_json(p_json, {
        "replications": result.replications,
        "level": result.level,
        "table": rows,
    })
    _write_manifest(cfg, [_copy_config(cfg), p_csv, p_json])
    return 0


_COMMANDS = {
    "prepare": cmd_prepare,
    "fit": cmd_fit,
    "decompose": cmd_decompose,
    "report": cmd_report,
    "summary": cmd_summary,
    "simulate": cmd_simulate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hdgap",
        description="High-dimensional heterogeneous wage-gap analysis pipeline",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="path to the TOML run config")
    common.add_argument("--out", help="output directory (overrides config)")
    common.add_argument("--seed", type=int, help="bootstrap/simulation seed override")
    common.add_argument("--threads", type=int,
                        help="worker processes for simulation replications")
    common.add_argument("--format", help="comma-separated subset of csv,json,svg")
    common.add_argument("--penalty-c", dest="penalty_c", type=float,
                        help="penalty scale constant override (e.g. 0.5)")
    common.add_argument("--replications", type=int,
                        help="bootstrap (fit) or Monte Carlo (simulate) replications")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "prepare": "build and store model frames",
        "fit": "double selection, inference, and bootstrap",
        "decompose": "group-wise mean-gap decomposition",
        "report": "render figure artifacts from fit outputs",
        "summary": "descriptive statistics of the filtered sample",
        "simulate": "Monte Carlo study from the [simulate] config section",
    }
    for name, text in helps.items():
        sub.add_parser(name, parents=[common], help=text)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {
        "out": args.out,
        "seed": args.seed,
        "threads": args.threads,
        "penalty_c": args.penalty_c,
        "replications": args.replications,
        "format": tuple(args.format.split(",")) if args.format else None,
    }
    handler = None
    try:
        cfg = load_config(args.config, {k: v for k, v in overrides.items() if v is not None})
        handler = _setup_logging(cfg, args.command)
        return _COMMANDS[args.command](cfg)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    finally:
        if handler is not None:
            logging.getLogger("hdgap").removeHandler(handler)
            handler.close()


if __name__ == "__main__":
    sys.exit(main())
