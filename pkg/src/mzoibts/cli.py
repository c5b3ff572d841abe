"""Command-line entry points.

Four subcommands cover the batch workflows: ``fit`` runs the two-stage
analysis of a CSV series and writes a JSON result plus a fitted-curve
CSV, ``simulate`` writes a generated series, ``mc-study`` runs a
replicated study cell, and ``validate-config`` checks a configuration
without running anything.  Configurations and results are JSON validated
against schemas shipped with the package; series and tables are plain
CSV.  Exit codes: 0 on success, 2 for input problems, 3 for numerical
failures.  The ``MZOIBTS_LOG`` environment variable (error, warn, info,
debug) controls verbosity.
"""

import argparse
import csv
import json
import logging
import math
import os
import sys
from importlib import resources

import jsonschema
import numpy as np

from .copula import CopulaFamily
from .estimate import fit_stage1, fit_stage2_copula
from .exceptions import ConfigError, MzoibtsError
from .infer import (
    HacConfig,
    bootstrap_se,
    confidence_intervals,
    hac_covariance,
    its_wald_tests,
    select_changepoint,
)
from .model import ItsConfig, Theta, its_design, marginal_mean
from .numkit import RngStream
from .simulate import McStudyConfig, markov_series, run_mc_study

logger = logging.getLogger("mzoibts")

_LOG_LEVELS = {
    "error": logging.ERROR,
    "warn": logging.WARNING,
    "info": logging.INFO,
    "debug": logging.DEBUG,
}


def _setup_logging():
    raw = os.environ.get("MZOIBTS_LOG", "warn").strip().lower()
    level = _LOG_LEVELS.get(raw)
    if level is None:
        print(f"mzoibts: ignoring unknown MZOIBTS_LOG value {raw!r}",
              file=sys.stderr)
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _load_schema(name):
    text = resources.files("mzoibts").joinpath("schemas", name).read_text("utf-8")
    return json.loads(text)


def load_config(path):
    """Read and schema-validate a run configuration."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        cfg = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"config {path} is not valid JSON: line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    try:
        jsonschema.validate(cfg, _load_schema("config.schema.json"))
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "top level"
        raise ConfigError(f"config {path} invalid at {where}: {exc.message}") from exc
    return cfg


def read_dataset(path):
    """Read a series CSV with a required y column and optional t column."""
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise ConfigError(f"cannot read data {path}: {exc}") from exc
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "y" not in reader.fieldnames:
            raise ConfigError(f"data {path} must have a header row with a 'y' column")
        has_t = "t" in reader.fieldnames
        t_values = []
        y_values = []
        for line, row in enumerate(reader, start=2):
            raw_y = (row.get("y") or "").strip()
            if raw_y == "":
                raise ConfigError(f"{path} line {line}: missing y value")
            try:
                y = float(raw_y)
            except ValueError as exc:
                raise ConfigError(f"{path} line {line}: y={raw_y!r} is not a number") from exc
            if not 0.0 <= y <= 1.0 or math.isnan(y):
                raise ConfigError(f"{path} line {line}: y={raw_y} is outside [0, 1]")
            y_values.append(y)
            if has_t:
                raw_t = (row.get("t") or "").strip()
                try:
                    t = int(raw_t)
                except ValueError as exc:
                    raise ConfigError(
                        f"{path} line {line}: t={raw_t!r} is not an integer") from exc
                if t_values and t <= t_values[-1]:
                    raise ConfigError(
                        f"{path} line {line}: t={t} does not increase")
                t_values.append(t)
    if not y_values:
        raise ConfigError(f"data {path} has no rows")
    if not has_t:
        t_values = list(range(1, len(y_values) + 1))
    return np.asarray(t_values, dtype=int), np.asarray(y_values, dtype=float)


def _theta_from_config(cfg):
    theta = cfg.get("theta")
    if theta is None:
        raise ConfigError("this command needs a 'theta' section in the config")
    return Theta(beta1=theta["beta1"], beta2=theta["beta2"],
                 beta3=theta["beta3"], beta4=theta["beta4"])


def _required_n(cfg):
    n = cfg.get("n")
    if n is None:
        raise ConfigError("this command needs a top-level 'n' in the config")
    return int(n)


def _its_template(cfg, n, tau):
    its = cfg["its"]
    return ItsConfig(
        n=n,
        tau=tau,
        t0=its.get("t0"),
        transform=its.get("transform", "identity"),
        dispersion_change=its.get("dispersion_change", True),
    )


def _fixed_tau_its(cfg, n):
    its = cfg["its"]
    if "tau" not in its:
        raise ConfigError("this command needs its.tau; candidate grids apply to fit only")
    return _its_template(cfg, n, its["tau"])


def _copula_family(cfg, need_rho):
    section = cfg["copula"]
    if need_rho:
        if "rho" not in section:
            raise ConfigError("simulation needs copula.rho in the config")
        return CopulaFamily(section["family"], section["rho"])
    return section["family"]


def _hac_config(cfg):
    return HacConfig(max_lag=cfg.get("se", {}).get("max_lag", "auto"))


def _resolve_output(args, cfg):
    path = args.output or cfg.get("output_path")
    if not path:
        raise ConfigError("no output path: give --output or set output_path in the config")
    return path


def _resolve_seed(args, cfg):
    seed = args.seed if args.seed is not None else cfg.get("seed")
    if seed is None:
        raise ConfigError("no seed: give --seed or set seed in the config")
    if not 0 <= int(seed) < 2**64:
        raise ConfigError(f"seed must fit in an unsigned 64-bit integer, got {seed}")
    return int(seed)


def _fmt(value):
    return format(float(value), ".17g")


def _jsonify(obj):
    if isinstance(obj, dict):
        return {k: _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonify(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _write_json(path, payload):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def cmd_validate_config(args):
    load_config(args.config)
    print(f"{args.config}: configuration is valid")
    return 0


def cmd_simulate(args):
    cfg = load_config(args.config)
    theta = _theta_from_config(cfg)
    n = _required_n(cfg)
    its = _fixed_tau_its(cfg, n)
    family = _copula_family(cfg, need_rho=True)
    seed = _resolve_seed(args, cfg)
    output = _resolve_output(args, cfg)
    y = markov_series(theta, its_design(its), family, RngStream(seed, 0))
    with open(output, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "y"])
        for t, value in enumerate(y, start=1):
            writer.writerow([t, _fmt(value)])
    logger.info("simulated %d observations with %s copula", n, family.kind)
    print(f"wrote {y.size} rows to {output}")
    return 0


def _fitted_csv_path(output):
    root, ext = os.path.splitext(output)
    return f"{root}_fitted.csv"


def _wald_payload(test):
    return {
        "statistic": test.statistic,
        "df": test.df,
        "p_value": test.p_value,
        "reject": test.reject,
    }


def cmd_fit(args):
    cfg = load_config(args.config)
    data_path = cfg.get("data_path")
    if not data_path:
        raise ConfigError("fit needs data_path in the config")
    t, y = read_dataset(data_path)
    n = y.size
    seed = _resolve_seed(args, cfg)
    output = _resolve_output(args, cfg)
    alpha = float(cfg.get("alpha", 0.05))
    se_section = cfg.get("se", {"method": "hac"})
    hac_cfg = _hac_config(cfg)

    its_section = cfg["its"]
    selection = None
    if "candidates" in its_section:
        candidates = [int(c) for c in its_section["candidates"]]
        t0 = its_section.get("t0", sorted(candidates)[len(candidates) // 2])
        template = ItsConfig(n=n, tau=t0, t0=t0,
                             transform=its_section.get("transform", "identity"),
                             dispersion_change=its_section.get("dispersion_change", True))
        selection = select_changepoint(template, y, candidates, hac_cfg)
        its = template.with_tau(selection.selected_tau)
        logger.info("selected changepoint %d from %d candidates",
                    selection.selected_tau, len(candidates))
    else:
        its = _fixed_tau_its(cfg, n)
    designs = its_design(its)

    fit1 = fit_stage1(designs, y)
    diagnostics = {
        "n": int(n),
        "tau": its.tau,
        "t0": its.t0,
        "transform": its.transform,
        "converged": fit1.converged,
        "loglik": fit1.loglik,
        "score_norm": fit1.score_norm,
        "iterations": fit1.iterations,
        "se_method": se_section.get("method", "hac"),
    }
    if not fit1.converged:
        _write_json(output, _jsonify({
            "error": "stage-1 estimation did not converge",
            "diagnostics": diagnostics,
            "estimates": {"names": fit1.theta.names(),
                          "values": fit1.theta.flatten()},
        }))
        logger.error("stage-1 did not converge; partial diagnostics in %s", output)
        print(f"fit did not converge; partial diagnostics in {output}", file=sys.stderr)
        return 3

    fit2 = fit_stage2_copula(cfg["copula"]["family"], fit1.theta, designs, y)
    if se_section.get("method", "hac") == "bootstrap":
        R = int(se_section.get("R", 500))
        cov = bootstrap_se(fit1, fit2, designs, R=R, rng=RngStream(seed, 0))
        diagnostics["bootstrap_replicates"] = R
    else:
        cov = hac_covariance(fit1, designs, y, hac_cfg)
        diagnostics["max_lag"] = hac_cfg.resolve(n)
    se = cov.std_errors
    ci = confidence_intervals(fit1.theta, se, alpha)
    tests = its_wald_tests(fit1.theta, cov, designs.dims, alpha)

    result = {
        "estimates": {"names": fit1.theta.names(),
                      "values": fit1.theta.flatten()},
        "std_errors": se,
        "conf_intervals": {"alpha": alpha, "lower": ci[:, 0], "upper": ci[:, 1]},
        "tests": {name: _wald_payload(tests[name]) for name in ("level", "trend", "joint")},
        "copula": {
            "family": fit2.family.kind,
            "rho": fit2.family.rho,
            "loglik": fit2.loglik,
            "converged": fit2.converged,
        },
        "changepoint": None if selection is None else {
            "selected_tau": selection.selected_tau,
            "candidates": list(selection.candidates),
            "cbic_values": selection.cbic_values,
        },
        "diagnostics": diagnostics,
    }
    payload = _jsonify(result)
    jsonschema.validate(payload, _load_schema("result.schema.json"))
    _write_json(output, payload)

    fitted = marginal_mean(fit1.theta, designs)
    fitted_path = _fitted_csv_path(output)
    with open(fitted_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "y", "fitted_v"])
        for idx in range(n):
            writer.writerow([int(t[idx]), _fmt(y[idx]), _fmt(fitted[idx])])
    logger.info("fit written to %s, fitted curve to %s", output, fitted_path)
    print(f"wrote {output} and {fitted_path}")
    return 0


def cmd_mc_study(args):
    cfg = load_config(args.config)
    theta = _theta_from_config(cfg)
    n = _required_n(cfg)
    mc = cfg.get("mc")
    if mc is None:
        raise ConfigError("mc-study needs an 'mc' section in the config")
    seed = _resolve_seed(args, cfg)
    output = _resolve_output(args, cfg)
    family = _copula_family(cfg, need_rho=True)
    se_section = cfg.get("se", {"method": "bootstrap"})
    its_section = cfg["its"]
    if "candidates" in its_section:
        candidates = tuple(int(c) for c in its_section["candidates"])
        if "tau_true" not in mc:
            raise ConfigError(
                "mc-study with its.candidates needs mc.tau_true, the generating changepoint"
            )
        its = _its_template(cfg, n, int(mc["tau_true"]))
        select_tau = True
    else:
        candidates = None
        its = _fixed_tau_its(cfg, n)
        select_tau = False
    study = McStudyConfig(
        theta_true=theta,
        family=family,
        its=its,
        K=int(mc["K"]),
        se_method=se_section.get("method", "bootstrap"),
        R=int(se_section.get("R", 200)),
        select_tau=select_tau,
        candidates=candidates,
        alpha=float(cfg.get("alpha", 0.05)),
        seed=seed,
    )
    workers = args.workers if args.workers is not None else (os.cpu_count() or 1)
    report = run_mc_study(study, workers=workers)

    payload = _jsonify({
        "coef_names": report.coef_names,
        "total": report.total,
        "converged": report.converged,
        "bias": report.bias,
        "se": report.se,
        "mean_se": report.mean_se,
        "coverage": report.coverage,
        "power": report.power,
        "selected_taus": report.selected_taus,
        "estimates": report.estimates,
        "std_errors": report.std_errors,
        "wall_time": report.wall_time,
    })
    _write_json(output, payload)

    table_path = _fitted_csv_path(output).replace("_fitted.csv", "_table.csv")
    with open(table_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "coefficient", "value"])
        for metric in ("bias", "se", "mean_se", "coverage", "power"):
            values = getattr(report, metric)
            for name, value in zip(report.coef_names, values):
                writer.writerow([metric, name, _fmt(value)])
    logger.info("study report written to %s, table to %s", output, table_path)
    print(f"wrote {output} and {table_path}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mzoibts",
        description="Zero-one-inflated Beta time-series analysis",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, handler, help_text, workers=False):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="path to a JSON run configuration")
        if name != "validate-config":
            p.add_argument("--seed", type=int, default=None,
                           help="override the configured seed (unsigned 64-bit)")
            p.add_argument("--output", default=None,
                           help="override the configured output path")
        if workers:
            p.add_argument("--workers", type=int, default=None,
                           help="worker processes (default: available cores)")
        p.set_defaults(handler=handler)
        return p

    add("fit", cmd_fit, "fit a series and write estimates, tests, and intervals")
    add("simulate", cmd_simulate, "generate a series and write it as CSV")
    add("mc-study", cmd_mc_study, "run a replicated simulation study", workers=True)
    add("validate-config", cmd_validate_config, "check a configuration file")
    return parser


def main(argv=None):
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except (ValueError, OSError) as exc:
        print(f"mzoibts: {exc}", file=sys.stderr)
        return 2
    except (MzoibtsError, RuntimeError) as exc:
        print(f"mzoibts: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
