"""Monte Carlo coverage studies of the confidence regions.

One replication draws a dataset, fits the cause-specific models and builds
every requested interval at the report times plus the band over the band
interval, then records whether they contain the true ATE. Replication
``r`` at sample size ``n`` uses streams keyed by ``(master_seed, n, r)``, so
reports are identical for any number of workers.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .cif import CIFClampWarning, default_grid, g_formula_ate
from .cox import CoxModel, fit_cause_specific_models
from .errors import CompetingATEError, DomainError, NumericalError
from .linearization import linearize
from .parallel import run_indexed
from .resampling import (METHODS, WILD_METHODS, InfluenceMatrix, efron_ensemble,
                         pointwise_ci, simultaneous_band, wild_ensemble)
from .rng import child_seed, stream
from .sim import ScenarioConfig, fine_grid, generate_dataset, true_ate_oracle

DEFAULT_B = {"EBS": 1000, "IF": 10_000, "WBS": 10_000}


def true_covariate_models(cfg: ScenarioConfig):
    """Cause-specific models with the treatment and each cause's own covariates."""
    if cfg.type2 is not None:
        return {1: CoxModel(columns=("Z1", "Z3", "Z6", "Z7", "Z9", "Z12"))}
    return {1: CoxModel(columns=("Z1", "Z3", "Z6", "Z7", "Z9", "Z12")),
            2: CoxModel(columns=("Z1", "Z5", "Z6", "Z7", "Z11", "Z12"))}


@dataclass(frozen=True)
class StudyConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    sample_sizes: tuple = (50, 75, 100, 200, 300)
    replications: int = 100
    methods: tuple = METHODS
    report_times: tuple = (1.0, 3.0, 5.0, 7.0, 9.0)
    band_interval: tuple = (0.0, 9.0)
    B: dict = field(default_factory=lambda: dict(DEFAULT_B))
    master_seed: int = 0
    alpha: float = 0.05
    # "true": treatment plus each cause's true covariates; "full": all twelve
    models: str = "true"
    true_ate_n: int = 100_000
    true_ate_reps: int = 1000
    failure_cap: float = 0.05

    def __post_init__(self):
        if self.replications < 1:
            raise DomainError("replications must be at least 1")
        if not 0 < self.alpha < 1:
            raise DomainError("alpha must lie in (0, 1)")
        bad = set(self.methods) - set(METHODS)
        if bad:
            raise DomainError(f"unknown methods {sorted(bad)}; choose from {METHODS}")
        t1, t2 = self.band_interval
        if not 0 <= t1 <= t2:
            raise DomainError("band interval must satisfy 0 <= t1 <= t2")
        if self.models not in ("true", "full"):
            raise DomainError("models must be 'true' or 'full'")
        object.__setattr__(self, "B", {**DEFAULT_B, **dict(self.B)})
        object.__setattr__(self, "sample_sizes", tuple(int(n) for n in self.sample_sizes))
        object.__setattr__(self, "methods", tuple(m for m in METHODS if m in self.methods))
        object.__setattr__(self, "report_times", tuple(float(t) for t in self.report_times))
        object.__setattr__(self, "band_interval", (float(t1), float(t2)))

    def to_dict(self):
        d = asdict(self)
        d["scenario"] = self.scenario.to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "scenario" in d and isinstance(d["scenario"], dict):
            d["scenario"] = ScenarioConfig.from_dict(d["scenario"])
        if "band_interval" in d:
            d["band_interval"] = tuple(d["band_interval"])
        for key in ("sample_sizes", "methods", "report_times"):
            if key in d:
                d[key] = tuple(d[key])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise DomainError(f"unknown study config keys {sorted(unknown)}")
        return cls(**d)

    def model_spec(self):
        return true_covariate_models(self.scenario) if self.models == "true" else None

    def B_for(self, method):
        return self.B["EBS"] if method == "EBS" else self.B["IF" if method == "IF" else "WBS"]


@dataclass
class CoverageReport:
    """Aggregated coverage results.

    ``rows`` are dicts with keys ``scenario, n, method, time, coverage, mc_se,
    mean_width, elapsed_ms``; ``time`` is a float or ``"band"``.
    """

    rows: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    replications: dict = field(default_factory=dict)

    def cell(self, n, method, t):
        for row in self.rows:
            if row["n"] == n and row["method"] == method and row["time"] == t:
                return row
        raise KeyError((n, method, t))


def replication(r, study: StudyConfig, n, truth):
    """One replication; returns per-method results or a failure record."""
    cfg = study.scenario
    seed = child_seed(study.master_seed, "replication", n, r)
    t1, t2 = study.band_interval
    out = {"r": r, "n": n, "methods": {}, "failure": None}
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", CIFClampWarning)
            ds = generate_dataset(cfg, n, stream(seed, "data"))
            grid = default_grid(ds, study.report_times, tau=max(t2, max(study.report_times)))
            t0 = time.perf_counter()
            fits = fit_cause_specific_models(ds, study.model_spec())
            estimate = g_formula_ate(fits, ds, grid)
            base_cost = time.perf_counter() - t0
            lin = None
            lin_cost = 0.0
            if any(m != "EBS" for m in study.methods):
                t0 = time.perf_counter()
                lin = linearize(fits, ds, grid)
                lin_cost = time.perf_counter() - t0
            for method in study.methods:
                t0 = time.perf_counter()
                B = study.B_for(method)
                if method == "EBS":
                    ens = efron_ensemble(ds, grid, B, seed, base_fits=fits)
                    point_src = ens
                    extra = base_cost
                elif method == "IF":
                    point_src = InfluenceMatrix(grid, lin.influence(), "closed_form")
                    ens = point_src.multiplier_ensemble(B, seed)
                    extra = base_cost + lin_cost
                else:
                    ens = wild_ensemble(fits, ds, grid, B, WILD_METHODS[method], seed,
                                        linearization=lin)
                    point_src = ens
                    extra = base_cost + lin_cost
                ci = pointwise_ci(point_src, estimate, study.alpha, study.report_times)
                band = simultaneous_band(ens, estimate, study.alpha, t1, t2)
                elapsed = time.perf_counter() - t0 + extra
                out["methods"][method] = {
                    "covered": ci.contains(truth(ci.grid.points)),
                    "width": ci.width,
                    "band_covered": bool(np.all(band.contains(truth(band.grid.points)))),
                    "band_width": float(np.mean(band.width)),
                    "elapsed": elapsed,
                }
    except CompetingATEError as exc:
        out["failure"] = f"n={n} replication {r}: {type(exc).__name__}: {exc}"
        out["methods"] = {}
    return out


def _true_ate(study):
    t_max = max(study.band_interval[1], max(study.report_times))
    cfg = replace(study.scenario)
    return true_ate_oracle(cfg, fine_grid(t_max), study.true_ate_n, study.true_ate_reps,
                           seed=child_seed(study.master_seed, "true-ate"))


def run_coverage_study(study: StudyConfig, workers=1, truth=None, progress=None) -> CoverageReport:
    """Run every (sample size, replication) cell and aggregate.

    Parameters
    ----------
    study : StudyConfig
    workers : int
        Process-pool size; the report does not depend on it.
    truth : callable, optional
        True ATE as a function of time; computed with the Monte Carlo oracle
        when omitted.

    Raises
    ------
    NumericalError
        More than ``study.failure_cap`` of the replications at some sample
        size failed.
    """
    if truth is None:
        truth = _true_ate(study)
    report = CoverageReport()
    name = study.scenario.name
    for n in study.sample_sizes:
        results = run_indexed(replication, range(study.replications), workers,
                              study=study, n=n, truth=truth)
        ok = [res for res in results if res["failure"] is None]
        fails = [res["failure"] for res in results if res["failure"] is not None]
        report.failures.extend(fails)
        if len(fails) > study.failure_cap * study.replications:
            raise NumericalError(
                f"{len(fails)} of {study.replications} replications failed at n={n} "
                f"(cap {study.failure_cap:.0%}); first: {fails[0]}")
        R = len(ok)
        report.replications[n] = R
        for method in study.methods:
            cov = np.array([res["methods"][method]["covered"] for res in ok], dtype=float)
            wid = np.array([res["methods"][method]["width"] for res in ok])
            elapsed = sum(res["methods"][method]["elapsed"] for res in ok)
            for j, t in enumerate(study.report_times):
                report.rows.append(_row(name, n, method, t, cov[:, j], wid[:, j], elapsed))
            bc = np.array([res["methods"][method]["band_covered"] for res in ok], dtype=float)
            bw = np.array([res["methods"][method]["band_width"] for res in ok])
            report.rows.append(_row(name, n, method, "band", bc, bw, elapsed))
    return report


def _row(scenario, n, method, t, covered, widths, elapsed):
    R = covered.size
    p = float(covered.mean()) if R else float("nan")
    return {"scenario": scenario, "n": int(n), "method": method, "time": t,
            "coverage": p, "mc_se": math.sqrt(p * (1 - p) / R) if R else float("nan"),
            "mean_width": float(widths.mean()) if R else float("nan"),
            "elapsed_ms": 1000.0 * elapsed}
