"""Command-line entry points.

Three subcommands:
  estimate  read a combined-sample CSV and run the requested estimators
  simulate  run a named Monte-Carlo design and write its metrics
  cv-trace  report the cross-validation loss profiles on a dataset

Options come from flags, which override an optional INI config file
(sections [run], [columns], [model], [penalty], [simulate]).  Outputs are
deterministic: reports carry no timestamps and floats are written via repr.
Set DRCOMBINE_LOG=DEBUG (or INFO, ...) for progress logging.  Exit codes:
0 success, 2 configuration problem, 3 data problem, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .data import (
    CombinedDataset,
    ConfigError,
    DataError,
    ModelSpec,
    NumericalError,
    PenaltyConfig,
    validate,
)
from .estimators import KINDS, RosterConfig, estimate_with_details
from .simulate import (
    CASE_NAMES,
    DEFAULT_ESTIMATORS,
    case_spec,
    compute_metrics,
    metrics_to_csv,
    metrics_to_text,
    replicates_to_jsonl,
    run_replications,
)
from .solver import cross_validate

__all__ = ["RunConfig", "ingest_csv", "main", "run_estimate", "run_simulate"]

log = logging.getLogger("drcombine")

_SPECIAL_COLUMNS = ("i_a", "i_b", "weight_a", "t", "y")


@dataclass
class RunConfig:
    """Merged options for one CLI invocation."""

    command: str = "estimate"
    input_path: Optional[str] = None
    out_dir: str = "."
    seed: int = 0
    estimators: Optional[Tuple[str, ...]] = None  # None = per-command default
    penalize: bool = True
    standardize: bool = False
    pop_size: Optional[int] = None
    columns: Dict[str, object] = field(default_factory=dict)
    outcome_kind: Optional[str] = None  # inferred from the outcome when absent
    parameterization: str = "conditional"
    penalty: PenaltyConfig = PenaltyConfig()
    fixed_lambdas: Optional[Tuple[float, float]] = None
    case: str = "case1"
    reps: Optional[int] = None
    jobs: int = 1
    desk_scale: bool = False


# ---------------------------------------------------------------------------
# CSV ingestion


def _parse_cell(raw: str, path: str, line: int, col: str) -> float:
    text = raw.strip()
    if text == "":
        return math.nan
    try:
        return float(text)
    except ValueError as exc:
        raise DataError(f"{path}:{line}: cannot parse {col}={raw!r} as a number") from exc


def ingest_csv(
    path: str,
    column_mapping: Optional[Mapping[str, object]] = None,
    standardize: bool = False,
    pop_size: Optional[int] = None,
    outcome_kind: Optional[str] = None,
) -> Tuple[CombinedDataset, Dict[str, object]]:
    """Read a combined-sample CSV into a dataset.

    The file needs a header and numeric cells (empty means missing).  The
    mapping may rename the special columns (i_a, i_b, weight_a, t, y) and may
    list the covariate columns; by default every other column is a covariate.
    Sample membership falls back to weight presence when no i_a column
    exists.  Standardization rescales non-binary covariates to mean zero and
    unit deviation and reports the applied shifts.
    """
    mapping = dict(column_mapping or {})
    names = {key: str(mapping.get(key, key)) for key in _SPECIAL_COLUMNS}
    if len(set(names.values())) != len(names):
        raise ConfigError("column mapping assigns one file column to several roles")
    try:
        with open(path, newline="") as handle:
            raw_lines = handle.readlines()
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from exc
    meta: Dict[str, str] = {}
    start = 0
    while start < len(raw_lines) and raw_lines[start].startswith("#"):
        text = raw_lines[start][1:].strip()
        if "=" in text:
            key, _, value = text.partition("=")
            meta[key.strip()] = value.strip()
        start += 1
    if pop_size is None and "pop_size" in meta:
        pop_size = int(round(float(meta["pop_size"])))
    if outcome_kind is None:
        outcome_kind = meta.get("outcome_kind")
    if start >= len(raw_lines):
        raise DataError(f"{path}: empty file")
    reader = csv.reader(raw_lines[start:])
    header = [h.strip() for h in next(reader)]
    col_of = {h: i for i, h in enumerate(header)}
    if "covariates" in mapping:
        listed = mapping["covariates"]
        cov_names = [c.strip() for c in (listed.split(",") if isinstance(listed, str) else listed)]
    else:
        special = set(names.values())
        cov_names = [h for h in header if h not in special]
    missing = [c for c in cov_names if c not in col_of]
    if missing:
        raise DataError(f"{path}: covariate columns not in header: {', '.join(missing)}")
    if not cov_names:
        raise DataError(f"{path}: no covariate columns")
    rows: List[List[float]] = []
    for line, record in enumerate(reader, start=start + 2):
        if not record or all(cell.strip() == "" for cell in record):
            continue
        if len(record) != len(header):
            raise DataError(f"{path}:{line}: expected {len(header)} cells, found {len(record)}")
        rows.append([_parse_cell(cell, path, line, header[i]) for i, cell in enumerate(record)])
    if not rows:
        raise DataError(f"{path}: no data rows")
    table = np.asarray(rows, dtype=np.float64)

    def column(key: str) -> Optional[np.ndarray]:
        name = names[key]
        return table[:, col_of[name]] if name in col_of else None

    weight = column("weight_a")
    ia_col = column("i_a")
    if ia_col is not None:
        i_a = ia_col == 1.0
    elif weight is not None:
        i_a = ~np.isnan(weight)
    else:
        raise DataError(f"{path}: need an i_a or weight_a column to identify the survey rows")
    ib_col = column("i_b")
    i_b = (ib_col == 1.0) if ib_col is not None else ~i_a
    if weight is None:
        raise DataError(f"{path}: missing the survey weight column {names['weight_a']!r}")
    t = column("t")
    y = column("y")
    if t is None or y is None:
        raise DataError(f"{path}: missing treatment or outcome column")

    cov = table[:, [col_of[c] for c in cov_names]]
    scaling: Dict[str, Dict[str, float]] = {}
    if standardize:
        for j, name in enumerate(cov_names):
            values = cov[:, j]
            finite = values[~np.isnan(values)]
            if set(np.unique(finite)).issubset({0.0, 1.0}):
                continue
            mean = float(np.mean(finite))
            sd = float(np.std(finite))
            if sd == 0.0:
                continue
            cov[:, j] = (values - mean) / sd
            scaling[name] = {"mean": mean, "sd": sd}
    x = np.hstack([np.ones((table.shape[0], 1)), cov])

    if outcome_kind is None:
        observed = y[~np.isnan(y)]
        outcome_kind = "binary" if observed.size and set(np.unique(observed)) <= {0.0, 1.0} else "continuous"
    dataset = CombinedDataset(
        x=x,
        i_a=i_a,
        i_b=i_b,
        weight_a=weight,
        t=t,
        y=y,
        pop_size=pop_size,
        outcome_kind=outcome_kind,
    )
    problems = validate(dataset)
    if problems:
        raise DataError(f"{path}: " + "; ".join(problems[:5]))
    info = {
        "covariates": cov_names,
        "standardized": scaling,
        "n_records": int(table.shape[0]),
        "outcome_kind": outcome_kind,
    }
    return dataset, info


# ---------------------------------------------------------------------------
# subcommand bodies


# the oracle estimator needs the true support, which real data never has
_ESTIMATE_DEFAULTS = tuple(k for k in DEFAULT_ESTIMATORS if k != "oracle_dr")


def _kinds(config: RunConfig, fallback: Tuple[str, ...]) -> Tuple[str, ...]:
    if config.estimators is None:
        return fallback
    if not config.estimators:
        raise ConfigError("nothing to do: the estimator list is empty")
    return config.estimators


def _model_spec(config: RunConfig, dataset: CombinedDataset) -> ModelSpec:
    link = "identity" if dataset.outcome_kind == "continuous" else "logit"
    return ModelSpec(outcome_link=link, parameterization=config.parameterization)


def _write(path: str, text: str) -> None:
    with open(path, "w") as handle:
        handle.write(text)


def run_estimate(config: RunConfig) -> int:
    kinds = _kinds(config, _ESTIMATE_DEFAULTS)
    if not config.input_path:
        raise ConfigError("estimate needs --input (or input in the [run] section)")
    dataset, info = ingest_csv(
        config.input_path,
        config.columns,
        config.standardize,
        config.pop_size,
        config.outcome_kind,
    )
    spec = _model_spec(config, dataset)
    grids = None
    if config.fixed_lambdas is not None:
        grids = ([config.fixed_lambdas[0]], [config.fixed_lambdas[1]])
    os.makedirs(config.out_dir, exist_ok=True)
    estimates: Dict[str, Dict[str, object]] = {}
    csv_rows = []
    for kind in kinds:
        log.info("running estimator %s", kind)
        penalized = config.penalize and kind in ("dr_combined", "ipw_combined", "or_combined", "dr_joint")
        shared = None
        if grids is not None and kind in ("ipw_combined", "or_combined"):
            # ipw penalizes the selection/treatment block, or the outcome block
            shared = grids[0] if kind == "ipw_combined" else grids[1]
        roster = RosterConfig(
            spec=spec,
            penalized=penalized,
            penalty=config.penalty,
            seed=config.seed,
            grid_eta=grids[0] if grids else None,
            grid_mu=grids[1] if grids else None,
            grid_shared=shared,
        )
        report, extras = estimate_with_details(dataset, kind, roster)
        entry: Dict[str, object] = {
            "theta_hat": report.theta_hat,
            "se": report.se,
            "ci_low": report.ci_low,
            "ci_high": report.ci_high,
            "variance_parts": report.variance_parts,
            "n_used": report.n_used,
            "penalized": penalized,
        }
        fit = extras.get("fit")
        if fit is not None:
            entry["lambdas"] = list(fit.lambdas)
            entry["support"] = {k: list(v) for k, v in fit.support.items()}
            entry["iterations"] = fit.iterations
            entry["converged"] = fit.converged
            entry["kkt_residual"] = fit.kkt_residual
        if "lambda" in extras and penalized:
            entry["lambda"] = extras["lambda"]
        estimates[kind] = entry
        csv_rows.append(
            [
                kind,
                str(int(penalized)),
                repr(report.theta_hat),
                repr(report.se),
                repr(report.ci_low),
                repr(report.ci_high),
                str(report.n_used),
                str(report.N),
            ]
        )
    payload = {
        "input": os.path.basename(config.input_path),
        "n_records": dataset.n,
        "pop_size": dataset.pop_size,
        "outcome_kind": dataset.outcome_kind,
        "standardized": info["standardized"],
        "seed": config.seed,
        "estimates": estimates,
    }
    _write(os.path.join(config.out_dir, "report.json"), json.dumps(payload, sort_keys=True, indent=2) + "\n")
    lines = ["estimator,penalized,theta_hat,se,ci_low,ci_high,n_used,N"]
    lines += [",".join(row) for row in csv_rows]
    _write(os.path.join(config.out_dir, "estimates.csv"), "\n".join(lines) + "\n")
    print(f"wrote {config.out_dir}/report.json and estimates.csv ({len(csv_rows)} estimators)")
    return 0


def run_simulate(config: RunConfig) -> int:
    estimators = _kinds(config, DEFAULT_ESTIMATORS)
    case = case_spec(config.case, config.desk_scale)
    reps = config.reps if config.reps is not None else (100 if config.desk_scale else 500)
    bad = [k for k in estimators if k not in KINDS]
    if bad:
        raise ConfigError(f"unknown estimators: {', '.join(bad)}")
    if case.parameterization == "joint":
        estimators = tuple(
            "dr_joint" if k == "dr_combined" else k for k in estimators if k != "oracle_dr"
        )
    log.info("simulating %s: %d replicates, jobs=%d", case.name, reps, config.jobs)
    results = run_replications(case, reps, estimators, config.seed, config.jobs, config.penalize)
    metrics = compute_metrics(results, case, estimators)
    os.makedirs(config.out_dir, exist_ok=True)
    _write(
        os.path.join(config.out_dir, "metrics.csv"),
        metrics_to_csv(metrics, case, reps, config.seed, estimators, config.penalize),
    )
    text = metrics_to_text(metrics)
    _write(os.path.join(config.out_dir, "metrics.txt"), text)
    _write(os.path.join(config.out_dir, "replicates.jsonl"), replicates_to_jsonl(results))
    print(text, end="")
    return 0


def run_cv_trace(config: RunConfig) -> int:
    if not config.input_path:
        raise ConfigError("cv-trace needs --input (or input in the [run] section)")
    dataset, _ = ingest_csv(
        config.input_path,
        config.columns,
        config.standardize,
        config.pop_size,
        config.outcome_kind,
    )
    spec = _model_spec(config, dataset)
    result = cross_validate(dataset, spec, config=config.penalty, seed=config.seed)
    os.makedirs(config.out_dir, exist_ok=True)
    lines = ["block,lambda,mean_loss,chosen"]
    for block, grid, losses, chosen in (
        ("eta", result.grid_eta, result.losses_eta, result.chosen[0]),
        ("mu", result.grid_mu, result.losses_mu, result.chosen[1]),
    ):
        for lam, loss in zip(grid, losses):
            flag = "1" if lam == chosen else "0"
            lines.append(f"{block},{float(lam)!r},{float(loss)!r},{flag}")
    _write(os.path.join(config.out_dir, "cv_trace.csv"), "\n".join(lines) + "\n")
    print(
        f"chosen penalties: eta={result.chosen[0]:.6g} mu={result.chosen[1]:.6g} "
        f"({result.folds} folds); wrote {config.out_dir}/cv_trace.csv"
    )
    return 0


# ---------------------------------------------------------------------------
# option plumbing


def _read_ini(path: str) -> configparser.ConfigParser:
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")
    return parser


def _penalty_from_ini(section: configparser.SectionProxy) -> Tuple[PenaltyConfig, Optional[Tuple[float, float]]]:
    kwargs = {}
    for key in ("a", "epsilon", "zero_threshold", "tol_xi", "prob_clip"):
        if key in section:
            kwargs[key] = section.getfloat(key)
    if "max_iter" in section:
        kwargs["max_iter"] = section.getint("max_iter")
    fixed = None
    if "lambda_eta" in section and "lambda_mu" in section:
        fixed = (section.getfloat("lambda_eta"), section.getfloat("lambda_mu"))
        kwargs["lambda_eta"], kwargs["lambda_mu"] = fixed
    try:
        return PenaltyConfig(**kwargs), fixed
    except ValueError as exc:
        raise ConfigError(f"bad [penalty] settings: {exc}") from exc


def _merge_config(args: argparse.Namespace) -> RunConfig:
    config = RunConfig(command=args.command)
    if getattr(args, "config", None):
        ini = _read_ini(args.config)
        if ini.has_section("run"):
            run = ini["run"]
            config.input_path = run.get("input", config.input_path)
            config.out_dir = run.get("out", config.out_dir)
            config.seed = run.getint("seed", config.seed)
            config.jobs = run.getint("jobs", config.jobs)
            if "estimators" in run:
                config.estimators = tuple(s.strip() for s in run["estimators"].split(",") if s.strip())
            if "pop_size" in run:
                config.pop_size = run.getint("pop_size")
            config.standardize = run.getboolean("standardize", config.standardize)
            config.penalize = not run.getboolean("no_penalty", not config.penalize)
        if ini.has_section("columns"):
            config.columns = dict(ini["columns"])
        if ini.has_section("model"):
            model = ini["model"]
            config.outcome_kind = model.get("outcome_kind", config.outcome_kind)
            config.parameterization = model.get("parameterization", config.parameterization)
        if ini.has_section("penalty"):
            config.penalty, config.fixed_lambdas = _penalty_from_ini(ini["penalty"])
        if ini.has_section("simulate"):
            sim = ini["simulate"]
            config.case = sim.get("case", config.case)
            if "reps" in sim:
                config.reps = sim.getint("reps")
            config.desk_scale = sim.getboolean("desk_scale", config.desk_scale)

    for attr, flag in (
        ("input_path", "input"),
        ("out_dir", "out"),
        ("seed", "seed"),
        ("case", "case"),
        ("reps", "reps"),
        ("jobs", "jobs"),
        ("pop_size", "pop_size"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            setattr(config, attr, value)
    if getattr(args, "estimators", None):
        config.estimators = tuple(s.strip() for s in args.estimators.split(",") if s.strip())
    if getattr(args, "desk_scale", False):
        config.desk_scale = True
    if getattr(args, "no_penalty", False):
        config.penalize = False
    if getattr(args, "standardize", False):
        config.standardize = True
    unknown = [k for k in (config.estimators or ()) if k not in KINDS]
    if unknown:
        raise ConfigError(f"unknown estimators: {', '.join(unknown)}")
    if config.parameterization not in ("conditional", "joint"):
        raise ConfigError(f"bad parameterization {config.parameterization!r}")
    return config


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="drcombine",
        description="treatment-effect estimation from a survey plus a non-probability sample",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="INI config file")
        p.add_argument("--out", help="output directory (default: current)")
        p.add_argument("--seed", type=int, help="random seed (default 0)")
        p.add_argument("--estimators", help="comma-separated estimator kinds")
        p.add_argument("--no-penalty", action="store_true", dest="no_penalty",
                       help="use the unpenalized variants")

    est = sub.add_parser("estimate", help="estimate the effect from a CSV dataset")
    common(est)
    est.add_argument("--input", help="combined-sample CSV file")
    est.add_argument("--standardize", action="store_true", help="rescale non-binary covariates")
    est.add_argument("--pop-size", type=int, dest="pop_size", help="target population size")

    sim = sub.add_parser("simulate", help="run a named Monte-Carlo design")
    common(sim)
    sim.add_argument("--case", choices=list(CASE_NAMES), help="design name (default case1)")
    sim.add_argument("--reps", type=int, help="replicates (default 500; 100 at desk scale)")
    sim.add_argument("--jobs", type=int, help="parallel workers (default 1)")
    sim.add_argument("--desk-scale", action="store_true", dest="desk_scale",
                     help="small population for quick runs")

    trace = sub.add_parser("cv-trace", help="cross-validation loss profile for a CSV dataset")
    common(trace)
    trace.add_argument("--input", help="combined-sample CSV file")
    trace.add_argument("--standardize", action="store_true", help="rescale non-binary covariates")
    trace.add_argument("--pop-size", type=int, dest="pop_size", help="target population size")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    level = os.environ.get("DRCOMBINE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(message)s")
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        config = _merge_config(args)
        if config.command == "estimate":
            return run_estimate(config)
        if config.command == "simulate":
            return run_simulate(config)
        return run_cv_trace(config)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
