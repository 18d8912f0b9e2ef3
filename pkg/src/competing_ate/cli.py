"""Command-line interface.

Commands: ``fit``, ``ate``, ``ci``, ``band``, ``simulate``, ``coverage`` and
``true-ate``. Exit codes: 0 success, 2 usage error, 3 data error, 4
numerical failure. Failures print a JSON error record on stderr and remove
any output files written by the failed run.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import warnings

import numpy as np

from . import report as report_mod
from .cif import CIFClampWarning, default_grid, g_formula_ate
from .coverage import StudyConfig, run_coverage_study
from .cox import CoxModel, fit_cause_specific_models
from .data import jitter_ties, parse_dataset, require_no_ties, serialize_dataset
from .errors import CompetingATEError, DataError, NumericalError
from .linearization import linearize
from .resampling import (METHODS, WILD_METHODS, InfluenceMatrix, efron_ensemble,
                         influence_matrix, pointwise_ci, simultaneous_band, wild_ensemble)
from .rng import stream
from .sim import ScenarioConfig, fine_grid, generate_dataset, preset, true_ate_oracle
from .svg import ate_chart, coverage_charts

emit_report = report_mod.emit_report

METHOD_FLAGS = {"ebs": "EBS", "if": "IF", "wbs-normal": "WBS-normal",
                "wbs-poisson": "WBS-poisson", "wbs-weird": "WBS-weird"}
STOCHASTIC = {"simulate", "coverage", "true-ate"}


class UsageError(CompetingATEError):
    exit_code = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# -- argument helpers --------------------------------------------------------

def _floats(text):
    try:
        return [float(x) for x in str(text).split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def _methods(text):
    out = []
    for part in str(text).lower().split(","):
        part = part.strip()
        if part == "all":
            return list(METHODS)
        if part not in METHOD_FLAGS:
            raise UsageError(f"unknown method {part!r}; choose from "
                             f"{sorted(METHOD_FLAGS)} or 'all'")
        out.append(METHOD_FLAGS[part])
    return [m for m in METHODS if m in out]


def _B(text):
    """``--B 500`` or ``--B ebs=500,if=2000,wbs=2000``."""
    if text is None:
        return {}
    text = str(text)
    if "=" not in text:
        try:
            b = int(text)
        except ValueError:
            raise UsageError(f"--B expects an integer or key=value list, got {text!r}") from None
        return {"EBS": b, "IF": b, "WBS": b}
    out = {}
    for part in text.split(","):
        k, _, v = part.partition("=")
        key = {"ebs": "EBS", "if": "IF", "wbs": "WBS"}.get(k.strip().lower())
        if key is None:
            raise UsageError(f"unknown --B key {k!r}")
        try:
            out[key] = int(v)
        except ValueError:
            raise UsageError(f"--B value for {k!r} must be an integer") from None
    return out


def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config {path!r}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path!r} is not valid JSON: {exc}") from None


def _check_alpha(alpha):
    if not 0 < alpha < 1:
        raise UsageError("--alpha must lie in (0, 1)")


def _require_seed(args):
    if args.seed is None:
        raise UsageError(f"'{args.command}' is stochastic and requires --seed")


# -- outputs -----------------------------------------------------------------

class Outputs:
    """Collects output artifacts and writes them only after success."""

    def __init__(self):
        self.files = []
        self.stdout = []

    def add(self, path, data: bytes):
        if path is None or path == "-":
            self.stdout.append(data)
        else:
            self.files.append((path, data))

    def commit(self):
        written = []
        try:
            for path, data in self.files:
                d = os.path.dirname(path)
                if d:
                    os.makedirs(d, exist_ok=True)
                with open(path, "wb") as fh:
                    written.append(path)
                    fh.write(data)
        except BaseException:
            for path in written:
                try:
                    os.remove(path)
                except OSError:
                    pass
            raise
        for data in self.stdout:
            sys.stdout.buffer.write(data)
        sys.stdout.flush()


# -- data commands -----------------------------------------------------------

def _models(cfg):
    spec = cfg.get("models")
    if not spec:
        return None
    out = {}
    for k, m in spec.items():
        cols = m.get("columns")
        out[int(k)] = CoxModel(columns=None if cols is None else tuple(cols),
                               treatment=bool(m.get("treatment", True)))
    return out


def _read_dataset(args, cfg):
    if args.input is None:
        raise UsageError(f"'{args.command}' requires --input")
    try:
        with open(args.input, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read input {args.input!r}: {exc}") from None
    ds = parse_dataset(raw, cfg.get("schema"), cfg.get("num_causes"))
    if args.jitter:
        if args.seed is None:
            raise UsageError("--jitter draws random noise and requires --seed")
        ds = jitter_ties(ds, args.seed)
    require_no_ties(ds)
    return ds


def _grid_and_fits(args, cfg):
    ds = _read_dataset(args, cfg)
    fits = fit_cause_specific_models(ds, _models(cfg))
    times = _floats(args.times) if args.times else cfg.get("report_times", [])
    grid = default_grid(ds, times)
    return ds, fits, grid, times


def cmd_fit(args, cfg, out):
    ds = _read_dataset(args, cfg)
    fits = fit_cause_specific_models(ds, _models(cfg))
    recs = []
    for f in fits:
        se = np.full(f.beta.size, np.nan)
        idx = np.flatnonzero(f.free)
        if idx.size:
            cov = np.linalg.inv(f.information_matrix[np.ix_(idx, idx)])
            se[idx] = np.sqrt(np.diag(cov))
        for name, b, s in zip(f.coef_names, f.beta, se):
            recs.append([f.cause, name, float(b), float(s), int(f.converged), f.iterations,
                         float(f.loglik)])
    out.add(args.output, report_mod.table_csv(
        ["cause", "term", "coef", "se", "converged", "iterations", "loglik"], recs))


def cmd_ate(args, cfg, out):
    ds, fits, grid, _ = _grid_and_fits(args, cfg)
    curve = g_formula_ate(fits, ds, grid)
    out.add(args.output, report_mod.table_csv(
        ["time", "estimate"], zip(grid.points.tolist(), curve.values.tolist())))
    if args.svg:
        out.add(args.svg, ate_chart(grid.points, curve.values, title="ATE").encode("utf-8"))


def _regions(args, cfg, ds, fits, grid, estimate, band):
    methods = _methods(args.method)
    B = _B(args.B)
    stochastic = band or any(m != "IF" for m in methods)
    if stochastic:
        _require_seed(args)
    lin = linearize(fits, ds, grid) if any(m != "EBS" for m in methods) else None
    regions = []
    for m in methods:
        if m == "EBS":
            ens = efron_ensemble(ds, grid, B.get("EBS", 1000), args.seed, base_fits=fits,
                                 workers=args.workers)
            src = ens
        elif m == "IF":
            src = InfluenceMatrix(grid, lin.influence(), "closed_form")
            if args.if_mode == "gateaux":
                src = influence_matrix(fits, ds, grid, workers=args.workers)
            ens = src.multiplier_ensemble(B.get("IF", 10_000), args.seed) if band else None
        else:
            ens = wild_ensemble(fits, ds, grid, B.get("WBS", 10_000), WILD_METHODS[m],
                                args.seed, linearization=lin)
            src = ens
        regions.append(simultaneous_band(ens, estimate, args.alpha, *band) if band
                       else pointwise_ci(src, estimate, args.alpha, args._times))
    return regions


def _region_rows(regions):
    recs = []
    for reg in regions:
        for t, e, lo, hi in zip(reg.grid.points, reg.estimate, reg.lower, reg.upper):
            recs.append([float(t), float(e), float(lo), float(hi), reg.method, reg.level])
    return report_mod.table_csv(["time", "estimate", "lower", "upper", "method", "level"], recs)


def cmd_ci(args, cfg, out):
    _check_alpha(args.alpha)
    ds, fits, grid, times = _grid_and_fits(args, cfg)
    estimate = g_formula_ate(fits, ds, grid)
    args._times = times or None
    out.add(args.output, _region_rows(_regions(args, cfg, ds, fits, grid, estimate, None)))


def cmd_band(args, cfg, out):
    _check_alpha(args.alpha)
    ds, fits, grid, _ = _grid_and_fits(args, cfg)
    estimate = g_formula_ate(fits, ds, grid)
    if args.band:
        t1, t2 = _band(args.band)
    else:
        t1, t2 = 0.0, float(grid.points[-1])
    regions = _regions(args, cfg, ds, fits, grid, estimate, (t1, t2))
    out.add(args.output, _region_rows(regions))
    if args.svg and regions:
        r = regions[0]
        out.add(args.svg, ate_chart(r.grid.points, r.estimate, r.lower, r.upper,
                                    title=f"{r.method} band").encode("utf-8"))


def _band(text):
    vals = _floats(text)
    if len(vals) != 2 or vals[0] > vals[1] or vals[0] < 0:
        raise UsageError("--band expects 't1,t2' with 0 <= t1 <= t2")
    return vals[0], vals[1]


# -- simulation commands -----------------------------------------------------

def _scenario(args, cfg):
    if "scenario" in cfg:
        sc = cfg["scenario"]
        return ScenarioConfig.from_dict(sc) if isinstance(sc, dict) else preset(sc, args.beta or 0.0)
    if any(k in cfg for k in ScenarioConfig.__dataclass_fields__):
        return ScenarioConfig.from_dict(cfg)
    return preset(args.scenario, args.beta or 0.0)


def cmd_simulate(args, cfg, out):
    _require_seed(args)
    sc = _scenario(args, cfg)
    n = args.n or cfg.get("n", 300)
    ds = generate_dataset(sc, int(n), stream(args.seed, "simulate"))
    out.add(args.output, serialize_dataset(ds))


def cmd_true_ate(args, cfg, out):
    _require_seed(args)
    sc = _scenario(args, cfg)
    times = _floats(args.times) if args.times else fine_grid(9.0)
    res = true_ate_oracle(sc, np.asarray(times, dtype=float), args.n_large, args.reps,
                          seed=args.seed, workers=args.workers, cache_dir=args.cache_dir)
    out.add(args.output, report_mod.table_csv(
        ["time", "ate"], zip(res.times.tolist(), res.values.tolist())))


def _study(args, cfg):
    d = dict(cfg)
    if "scenario" not in d:
        d["scenario"] = preset(args.scenario, args.beta or 0.0).to_dict()
    elif isinstance(d["scenario"], str):
        d["scenario"] = preset(d["scenario"], d.pop("beta_1A", args.beta or 0.0)).to_dict()
    if args.sizes:
        d["sample_sizes"] = [int(x) for x in _floats(args.sizes)]
    if args.replications:
        d["replications"] = args.replications
    if args.method:
        d["methods"] = _methods(args.method)
    if args.times:
        d["report_times"] = _floats(args.times)
    if args.band:
        d["band_interval"] = list(_band(args.band))
    if args.B:
        d["B"] = {**d.get("B", {}), **_B(args.B)}
    d["alpha"] = args.alpha if args.alpha_given else d.get("alpha", args.alpha)
    d["master_seed"] = args.seed
    return StudyConfig.from_dict(d)


def cmd_coverage(args, cfg, out):
    _require_seed(args)
    _check_alpha(args.alpha)
    study = _study(args, cfg)
    rep = run_coverage_study(study, workers=args.workers)
    prefix = args.output or "coverage"
    if prefix.endswith(".csv") or prefix.endswith(".json"):
        prefix = prefix.rsplit(".", 1)[0]
    out.add(prefix + ".csv", emit_report(rep, "csv", timing=args.timing))
    out.add(prefix + ".json", emit_report(rep, "json", timing=args.timing))
    if args.svg:
        # wall-clock times only with --timing, as in the reports
        rows = rep.rows if args.timing else [dict(r, elapsed_ms=None) for r in rep.rows]
        for stem, doc in coverage_charts(rows, 1 - study.alpha).items():
            out.add(os.path.join(args.svg, f"{stem}.svg"), doc.encode("utf-8"))
    if rep.failures:
        sys.stderr.write(json.dumps({"failed_replications": rep.failures}) + "\n")


COMMANDS = {"fit": cmd_fit, "ate": cmd_ate, "ci": cmd_ci, "band": cmd_band,
            "simulate": cmd_simulate, "coverage": cmd_coverage, "true-ate": cmd_true_ate}


def build_parser():
    p = _Parser(prog="competing-ate", description=(
        "g-formula average treatment effect on the cause-1 cumulative incidence "
        "with bootstrap, influence-function and wild-bootstrap confidence regions"))
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--input")
        s.add_argument("--output")
        s.add_argument("--config")
        s.add_argument("--seed", type=int)
        s.add_argument("--workers", type=int, default=1)
        s.add_argument("--times")
        s.add_argument("--jitter", action="store_true")
        s.add_argument("--svg")
        if name in ("ci", "band", "coverage"):
            s.add_argument("--method", default="all" if name != "coverage" else None)
            s.add_argument("--alpha", type=float, default=None)
            s.add_argument("--B")
            s.add_argument("--band")
        if name in ("ci", "band"):
            s.add_argument("--if-mode", choices=("closed-form", "gateaux"),
                           default="closed-form")
        if name in ("simulate", "coverage", "true-ate"):
            s.add_argument("--scenario", default="default")
            s.add_argument("--beta", type=float)
        if name == "simulate":
            s.add_argument("--n", type=int)
        if name == "coverage":
            s.add_argument("--sizes")
            s.add_argument("--replications", type=int)
            s.add_argument("--timing", action="store_true")
        if name == "true-ate":
            s.add_argument("--n-large", type=int, default=100_000)
            s.add_argument("--reps", type=int, default=1000)
            s.add_argument("--cache-dir")
    return p


def _error_record(exc, code):
    rec = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    for attr in ("row", "column", "subject"):
        v = getattr(exc, attr, None)
        if v is not None:
            rec[attr] = v
    return json.dumps(rec)


def execute(argv=None):
    """Run the CLI; returns the exit status."""
    out = Outputs()
    try:
        args = build_parser().parse_args(argv)
        if hasattr(args, "alpha"):
            args.alpha_given = args.alpha is not None
            args.alpha = 0.05 if args.alpha is None else args.alpha
        if args.command in STOCHASTIC:
            _require_seed(args)
        cfg = _load_config(args.config)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", CIFClampWarning)
            COMMANDS[args.command](args, cfg, out)
        out.commit()
        return 0
    except CompetingATEError as exc:
        code, err = exc.exit_code if isinstance(exc, UsageError) else _code(exc), exc
    except (ValueError, KeyError, TypeError) as exc:
        # malformed configuration values
        code, err = 2, exc
    sys.stderr.write(_error_record(err, code) + "\n")
    return code


def _code(exc):
    if isinstance(exc, DataError):
        return 3
    if isinstance(exc, NumericalError):
        return 4
    return 1


def main(argv=None):
    sys.exit(execute(argv))


if __name__ == "__main__":
    main()
