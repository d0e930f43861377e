"""Command-line interface: ``lassoboot fit|bootstrap|simulate|report``.

Every run writes ``config.json`` next to its outputs holding the fully
resolved parameters; passing that file back through ``--config`` reproduces
the outputs byte for byte.  Exit status is 0 on success, 2 for invalid input
and 3 when a solver fails to converge.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .bootstrap import BootstrapError, Scheme, WeightDistribution, default_threshold, run_scheme, threshold_estimate
from .inference import Side, percentile_interval, sup_norm_region
from .lasso import Dataset, SolverOptions, cross_validate_lambda, default_lambda_grid, fit_lasso
from .simulation import ExperimentError, SimulationScenario, run_coverage_experiment, stream_seed

log = logging.getLogger("lassoboot")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NOT_CONVERGED = 3

FLOAT_FMT = "%.17g"
SIDES = ("two_sided", "right_sided")


class InputError(Exception):
    """Bad user input; reported with exit status 2."""


class ConvergenceError(Exception):
    """Solver failure; reported with exit status 3."""


# --------------------------------------------------------------------------- I/O


def fmt(x: float) -> str:
    return FLOAT_FMT % x


def read_data_csv(path) -> tuple[Dataset, list[str]]:
    """Header row, then one observation per row: response first, covariates after."""
    path = Path(path)
    try:
        handle = path.open(newline="")
    except OSError as exc:
        raise InputError(f"{path}: cannot open ({exc.strerror})") from None
    with handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"{path}: file is empty") from None
        if len(header) < 2:
            raise InputError(f"{path}:1: need a response column and at least one covariate")
        rows = []
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != len(header):
                raise InputError(f"{path}:{line}: expected {len(header)} fields, found {len(row)}")
            try:
                values = [float(v) for v in row]
            except ValueError:
                raise InputError(f"{path}:{line}: non-numeric field") from None
            if not all(math.isfinite(v) for v in values):
                raise InputError(f"{path}:{line}: non-finite value")
            rows.append(values)
    if len(rows) < 2:
        raise InputError(f"{path}: need at least 2 observations, found {len(rows)}")
    arr = np.array(rows)
    try:
        data = Dataset(arr[:, 1:], arr[:, 0])
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from None
    return data, [h.strip() for h in header[1:]]


def write_csv(path: Path, header: list[str], rows) -> None:
    with path.open("w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n")


def _json_float(x: float):
    return None if not math.isfinite(x) else float(x)


def read_coverage_csv(path) -> tuple[list[str], dict[str, list[float]]]:
    path = Path(path)
    try:
        with path.open(newline="") as f:
            rows = list(csv.reader(f))
    except OSError as exc:
        raise InputError(f"{path}: cannot open ({exc.strerror})") from None
    if len(rows) < 2 or rows[0][:2] != ["coefficient", "beta"]:
        raise InputError(f"{path}: not a coverage table")
    header = rows[0]
    coefs = []
    cols = {h: [] for h in header[2:]}
    for line, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise InputError(f"{path}:{line}: expected {len(header)} fields, found {len(row)}")
        coefs.append(row[0])
        try:
            for h, v in zip(header[2:], row[2:]):
                cols[h].append(float(v))
        except ValueError:
            raise InputError(f"{path}:{line}: non-numeric field") from None
    return coefs, cols


# ------------------------------------------------------------------- config


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        cfg = json.loads(Path(path).read_text())
    except OSError as exc:
        raise InputError(f"{path}: cannot open ({exc.strerror})") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None
    if not isinstance(cfg, dict):
        raise InputError(f"{path}: config must be a JSON object")
    cfg.pop("command", None)
    return cfg


def _merge(cfg: dict, args, keys) -> dict:
    """Command-line values override config values."""
    for key in keys:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    return cfg


def _solver(cfg: dict) -> SolverOptions:
    raw = dict(cfg.get("solver") or {})
    try:
        opts = SolverOptions(**raw)
    except (TypeError, ValueError) as exc:
        raise InputError(f"invalid solver options: {exc}") from None
    cfg["solver"] = {"max_sweeps": int(opts.max_sweeps), "tol": opts.tol, "kkt_tol": opts.kkt_tol}
    return opts


def _check_keys(cfg: dict, allowed) -> None:
    unknown = set(cfg) - set(allowed)
    if unknown:
        raise InputError(f"unknown config keys: {sorted(unknown)}")


def _select_lambda(data: Dataset, cfg: dict, opts: SolverOptions) -> float:
    if cfg.get("lambda") is not None:
        lam = float(cfg["lambda"])
        if not (lam >= 0 and math.isfinite(lam)):
            raise InputError(f"lambda must be finite and >= 0, got {lam}")
        return lam
    folds = int(cfg["folds"])
    if not 2 <= folds <= data.n:
        raise InputError(f"folds must lie in [2, n={data.n}], got {folds}")
    grid = default_lambda_grid(data, int(cfg["grid_size"]))
    return cross_validate_lambda(data, grid, folds, stream_seed(cfg["seed"], 2), opts)


def _fit(data: Dataset, cfg: dict, opts: SolverOptions):
    lam = _select_lambda(data, cfg, opts)
    fit = fit_lasso(data, lam, opts=opts)
    if not fit.converged:
        raise ConvergenceError(f"Lasso fit did not converge (kkt gap {fit.kkt_gap:.3g} after "
                               f"{fit.iterations} sweeps)")
    return fit


FIT_KEYS = ("data", "lambda", "seed", "folds", "grid_size", "solver")
BOOT_KEYS = FIT_KEYS + ("scheme", "B", "levels", "threshold_scale", "weights", "interval_method")


def _fit_defaults(cfg: dict) -> dict:
    cfg.setdefault("lambda", None)
    cfg.setdefault("seed", 0)
    cfg.setdefault("folds", 10)
    cfg.setdefault("grid_size", 50)
    if cfg.get("data") is None:
        raise InputError("no input data given (--data)")
    cfg["seed"] = int(cfg["seed"])
    return cfg


# ----------------------------------------------------------------- commands


def cmd_fit(args) -> int:
    cfg = _merge(_load_config(args.config), args, ("data", "seed"))
    if args.lam is not None:
        cfg["lambda"] = args.lam
    _check_keys(cfg, FIT_KEYS)
    cfg = _fit_defaults(cfg)
    opts = _solver(cfg)
    data, _ = read_data_csv(cfg["data"])
    fit = _fit(data, cfg, opts)
    out = _outdir(args.out)
    result = fit.to_dict()
    result["lambda_selected_by_cv"] = cfg["lambda"] is None
    write_json(out / "fit.json", result)
    write_json(out / "config.json", {"command": "fit", **cfg})
    return EXIT_OK


def cmd_bootstrap(args) -> int:
    cfg = _merge(_load_config(args.config), args, ("data", "seed", "scheme", "B", "threshold_scale"))
    if args.lam is not None:
        cfg["lambda"] = args.lam
    if args.level:
        cfg["levels"] = args.level
    _check_keys(cfg, BOOT_KEYS)
    cfg = _fit_defaults(cfg)
    cfg.setdefault("scheme", Scheme.PERTURBATION.value)
    cfg.setdefault("B", 1200)
    cfg.setdefault("levels", [0.9])
    cfg.setdefault("threshold_scale", SimulationScenario.threshold_scale)
    cfg.setdefault("interval_method", "basic")
    try:
        scheme = Scheme(cfg["scheme"])
        dist = WeightDistribution.from_dict(cfg.get("weights") or {})
    except ValueError as exc:
        raise InputError(str(exc)) from None
    cfg["weights"] = dist.to_dict()
    if int(cfg["B"]) < 1:
        raise InputError(f"B must be >= 1, got {cfg['B']}")
    levels = [float(v) for v in np.atleast_1d(cfg["levels"])]
    if not all(0 < v < 1 for v in levels):
        raise InputError(f"levels must lie in (0, 1), got {levels}")
    if cfg["interval_method"] not in ("basic", "percentile"):
        raise InputError(f"unknown interval method {cfg['interval_method']!r}")
    if not float(cfg["threshold_scale"]) > 0:
        raise InputError("threshold_scale must be positive")
    cfg["levels"] = levels
    opts = _solver(cfg)
    data, names = read_data_csv(cfg["data"])
    fit = _fit(data, cfg, opts)
    est = threshold_estimate(fit, default_threshold(data.n, float(cfg["threshold_scale"])))
    try:
        draws = run_scheme(scheme, data, fit, est, int(cfg["B"]), rng=stream_seed(cfg["seed"], 3),
                           dist=dist, opts=opts)
    except BootstrapError as exc:
        raise ConvergenceError(str(exc)) from None

    out = _outdir(args.out)
    write_csv(out / "tstar.csv", names, draws.T_star.tolist())
    intervals = []
    method = cfg["interval_method"]
    for level in levels:
        if draws.B < 20:
            raise InputError("intervals need B >= 20")
        entry = {"level": level, "two_sided": [], "right_sided": [],
                 "region_radius": sup_norm_region(draws, fit, level).radius}
        for j in range(data.p):
            for side in SIDES:
                iv = percentile_interval(draws, fit, j, level, Side(side), method)
                entry[side].append({"coefficient": names[j], "lower": _json_float(iv.lower),
                                    "upper": _json_float(iv.upper)})
        intervals.append(entry)
    write_json(out / "intervals.json", {
        "scheme": scheme.value, "seed": cfg["seed"], "lambda": fit.lam, "a_n": est.a_n,
        "beta_hat": fit.beta.tolist(), "beta_tilde": est.beta_tilde.tolist(),
        "flagged": int(draws.flagged.sum()), "intervals": intervals,
    })
    write_json(out / "config.json", {"command": "bootstrap", **cfg})
    return EXIT_OK


SIM_KEYS = tuple(SimulationScenario.__dataclass_fields__) + ("methods", "solver")


def cmd_simulate(args) -> int:
    cfg = _merge(_load_config(args.config), args, ("seed",))
    if args.scheme:
        cfg["methods"] = args.scheme
    if args.level:
        if len(args.level) != 1:
            raise InputError("simulate takes a single --level")
        cfg["level"] = args.level[0]
    _check_keys(cfg, SIM_KEYS)
    methods = cfg.pop("methods", [Scheme.PERTURBATION.value, Scheme.RESIDUAL.value])
    solver = cfg.pop("solver", None)
    try:
        methods = [Scheme(m).value for m in dict.fromkeys(methods)]
        scenario = SimulationScenario.from_dict(cfg)
    except (TypeError, ValueError) as exc:
        raise InputError(f"invalid scenario: {exc}") from None
    if not methods:
        raise InputError("no bootstrap schemes requested")
    resolved = {"command": "simulate", **scenario.to_dict(), "methods": methods, "solver": solver}
    opts = _solver(resolved)
    try:
        result = run_coverage_experiment(scenario, methods, threads=max(1, args.threads), opts=opts)
    except ExperimentError as exc:
        raise ConvergenceError(str(exc)) from None

    out = _outdir(args.out)
    names = [f"beta{j + 1}" for j in range(scenario.p)]
    header = ["coefficient", "beta"]
    for m in methods:
        header += [f"{m}:two_sided", f"{m}:two_sided_width", f"{m}:right_sided"]
    rows = []
    for j in range(scenario.p):
        row = [names[j], float(result.beta_true[j])]
        for m in methods:
            s = result[m]
            row += [float(s.two_sided.coverage[j]), float(s.two_sided.mean_width[j]),
                    float(s.one_sided.coverage[j])]
        rows.append(row)
    write_csv(out / "coverage.csv", header, rows)
    write_csv(out / "region.csv", ["method", "coverage", "mean_radius"],
              [[m, float(result[m].region_coverage), float(result[m].mean_region_radius)] for m in methods])
    if Scheme.PERTURBATION.value in methods and len(methods) > 1:
        cols = {h: [r[k] for r in rows] for k, h in enumerate(header) if k >= 2}
        others = [m for m in methods if m != Scheme.PERTURBATION.value]
        write_csv(out / "ecr.csv", *_ecr_table(names, result.beta_true.tolist(), cols,
                                              Scheme.PERTURBATION.value, others))
    write_json(out / "summary.json", {
        "scenario": scenario.tag,
        "replicates": len(result.replicates),
        "failures": [{"replicate": m, "error": msg} for m, msg in result.failures],
        "region_coverage": {m: result[m].region_coverage for m in methods},
        "two_sided_coverage": {m: result[m].two_sided.coverage.tolist() for m in methods},
        "right_sided_coverage": {m: result[m].one_sided.coverage.tolist() for m in methods},
        "mean_lambda": float(np.mean([r.lam for r in result.replicates])),
    })
    write_json(out / "config.json", resolved)
    return EXIT_OK


def _ecr_table(coefs, betas, cols, num_method, den_methods):
    header = ["coefficient", "beta"]
    pairs = []
    for other in den_methods:
        for side in SIDES:
            header.append(f"{num_method}/{other}:{side}")
            pairs.append((f"{num_method}:{side}", f"{other}:{side}"))
    rows = []
    for j, c in enumerate(coefs):
        row = [c, betas[j]]
        for a, b in pairs:
            num, den = cols[a][j], cols[b][j]
            row.append(math.inf if den == 0 else num / den)
        rows.append(row)
    return header, rows


def cmd_report(args) -> int:
    coefs_a, cols_a = read_coverage_csv(args.pb_table)
    coefs_b, cols_b = read_coverage_csv(args.other_table)
    if coefs_a != coefs_b:
        raise InputError("coverage tables list different coefficients")
    methods_a = [h.split(":")[0] for h in cols_a if h.endswith(":two_sided")]
    methods_b = [h.split(":")[0] for h in cols_b if h.endswith(":two_sided")]
    num = args.pb_method or Scheme.PERTURBATION.value
    if num not in methods_a:
        raise InputError(f"{args.pb_table}: no columns for method {num!r}")
    dens = [args.other_method] if args.other_method else methods_b
    if any(d not in methods_b for d in dens):
        raise InputError(f"{args.other_table}: no columns for method {args.other_method!r}")
    # betas are read back as written, so identical tables give identical rows
    with Path(args.pb_table).open(newline="") as f:
        betas = [float(r[1]) for r in list(csv.reader(f))[1:]]
    cols = {k: v for k, v in cols_a.items() if k.startswith(num + ":")}
    for d in dens:
        cols.update({f"{d}:{s}": cols_b[f"{d}:{s}"] for s in SIDES})
    header, rows = _ecr_table(coefs_a, betas, cols, num, dens)
    if any(math.isinf(v) for row in rows for v in row[2:]):
        log.warning("zero competitor coverage for some coefficients; ratio reported as inf")
    out = _outdir(args.out)
    write_csv(out / "ecr.csv", header, rows)
    write_json(out / "config.json", {"command": "report", "pb_table": str(args.pb_table),
                                     "other_table": str(args.other_table), "pb_method": num,
                                     "other_method": args.other_method})
    return EXIT_OK


def _outdir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lassoboot", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of parameters (command-line flags take precedence)")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--out", default=".", help="output directory (created if missing)")
    common.add_argument("--threads", type=int, default=1, help="worker processes; never changes results")
    common.add_argument("--verbose", "-v", action="store_true")

    p = sub.add_parser("fit", parents=[common], help="fit the Lasso to a data CSV")
    p.add_argument("--data", help="CSV with a header row; response first, covariates after")
    p.add_argument("--lambda", dest="lam", type=float, help="penalty (default: cross-validated)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("bootstrap", parents=[common], help="bootstrap draws and intervals")
    p.add_argument("--data")
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--scheme", help="perturbation, naive, residual or paired")
    p.add_argument("--B", type=int, help="number of bootstrap replicates (default 1200)")
    p.add_argument("--level", type=float, action="append", help="confidence level; repeatable")
    p.add_argument("--threshold-scale", dest="threshold_scale", type=float)
    p.set_defaults(func=cmd_bootstrap)

    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo coverage experiment")
    p.add_argument("--scheme", action="append", help="scheme to include; repeatable")
    p.add_argument("--level", type=float, action="append")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", parents=[common], help="coverage ratios from two coverage tables")
    p.add_argument("pb_table", help="coverage.csv holding the numerator method")
    p.add_argument("other_table", help="coverage.csv holding the competitor(s)")
    p.add_argument("--pb-method", help="numerator method (default perturbation)")
    p.add_argument("--other-method", help="competitor method (default: every method in other_table)")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"lassoboot {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ConvergenceError as exc:
        print(f"lassoboot {args.command}: not converged: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED


if __name__ == "__main__":
    sys.exit(main())
