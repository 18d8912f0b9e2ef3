"""Confidence intervals and simultaneous bands for the ATE curve.

Three resampling methods:

``EBS``
    Efron's bootstrap: refit on resampled data and use percentiles (pointwise)
    or standardized suprema about the ensemble mean (band).
``IF``
    Influence-function variance ``nu(t) = mean_i IF_i(t)^2`` with a normal
    pointwise interval; the band uses standard-normal multipliers on the
    influence values.
``WBS``
    Wild bootstrap: event-driven contributions times random multipliers
    (standard normal, centered Poisson or weird-bootstrap binomial).

Every replicate or multiplier vector ``b`` draws from its own stream keyed by
``(seed, method tag, b)``, so results do not depend on the worker count.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .cif import ATECurve, CIFClampWarning, TimeGrid, ate_with_profiles
from .cox import SolverOptions, fit_cause_specific, fit_cause_specific_models
from .data import risk_set_sizes
from .errors import CompetingATEError, DomainError, RefitError
from .linearization import linearize
from .parallel import run_indexed
from .rng import stream

VAR_EPS = 1e-12

MULTIPLIER_KINDS = ("standard_normal", "centered_poisson", "weird_binomial")
WILD_METHODS = {"WBS-normal": "standard_normal", "WBS-poisson": "centered_poisson",
                "WBS-weird": "weird_binomial"}
METHODS = ("EBS", "IF", "WBS-normal", "WBS-poisson", "WBS-weird")


@dataclass(frozen=True)
class MultiplierScheme:
    kind: str = "standard_normal"

    def __post_init__(self):
        if self.kind not in MULTIPLIER_KINDS:
            raise DomainError(f"unknown multiplier scheme {self.kind!r}; "
                              f"choose from {MULTIPLIER_KINDS}")


def _as_scheme(scheme):
    return scheme if isinstance(scheme, MultiplierScheme) else MultiplierScheme(scheme)


def gen_multipliers(scheme, ds, rng, size=None):
    """Random multipliers, one per subject (``size`` rows if given).

    ``weird_binomial`` draws ``Binomial(Y_i, 1/Y_i) - 1`` with ``Y_i`` the
    number at risk at subject i's own observed time.
    """
    scheme = _as_scheme(scheme)
    shape = (ds.n,) if size is None else (size, ds.n)
    if scheme.kind == "standard_normal":
        return rng.standard_normal(shape)
    if scheme.kind == "centered_poisson":
        return rng.poisson(1.0, shape) - 1.0
    y = risk_set_sizes(ds, ds.time)
    if np.any(y < 1):
        raise DomainError("weird bootstrap needs at least one subject at risk")
    return rng.binomial(y, 1.0 / y, shape) - 1.0


def multiplier_matrix(scheme, ds, B, seed, tag):
    """``B x n`` multipliers; row ``b`` comes from stream ``(seed, tag, b)``."""
    scheme = _as_scheme(scheme)
    G = np.empty((B, ds.n))
    for b in range(B):
        G[b] = gen_multipliers(scheme, ds, stream(seed, tag, b))
    return G


# -- quantiles ---------------------------------------------------------------

def _order_index(m, p):
    # ceil(m p) computed on a rounded product so that e.g. 100 * 0.95 -> 95
    k = math.ceil(round(m * p, 9))
    return min(max(k, 1), m) - 1


def empirical_quantile(samples, p):
    """The ``ceil(m p)``-th order statistic of ``m`` samples."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise DomainError("empirical_quantile needs at least one sample")
    if not 0 < p <= 1:
        raise DomainError("p must lie in (0, 1]")
    return float(np.partition(x, _order_index(x.size, p))[_order_index(x.size, p)])


def column_quantiles(samples, p):
    """:func:`empirical_quantile` of every column of a 2-d array."""
    x = np.asarray(samples, dtype=float)
    if x.shape[0] == 0:
        raise DomainError("empirical_quantile needs at least one sample")
    k = _order_index(x.shape[0], p)
    return np.partition(x, k, axis=0)[k]


# -- ensembles -------------------------------------------------------------

@dataclass(frozen=True)
class ResampleEnsemble:
    """Resampled curves on a grid.

    ``draws`` holds bootstrap estimates (EBS, estimate scale) or
    root-n-scale process draws (IF, WBS). ``center`` and ``variance`` are the
    per-time mean and empirical variance (``ddof=1``) of the draws.
    ``reference_variance`` is the variance used to standardize the draws
    when it is not their own (the influence-function variance for IF).
    """

    grid: TimeGrid
    draws: np.ndarray
    method: str
    n_subjects: int
    center: np.ndarray = field(init=False)
    variance: np.ndarray = field(init=False)
    discarded: int = 0
    reference_variance: np.ndarray | None = None
    failures: tuple = ()

    def __post_init__(self):
        d = np.asarray(self.draws, dtype=float)
        if d.ndim != 2 or d.shape[1] != len(self.grid):
            raise DomainError("draws must be a B x |grid| matrix")
        object.__setattr__(self, "draws", d)
        object.__setattr__(self, "center", d.mean(axis=0))
        var = d.var(axis=0, ddof=1) if d.shape[0] > 1 else np.zeros(d.shape[1])
        object.__setattr__(self, "variance", var)

    @property
    def B(self):
        return self.draws.shape[0]

    @property
    def scale(self):
        """Factor between draw scale and estimate scale."""
        return 1.0 if self.method == "EBS" else math.sqrt(self.n_subjects)

    @property
    def standard_variance(self):
        return self.variance if self.reference_variance is None else self.reference_variance

    def deviations(self):
        """Draws minus their centre (EBS) or as they are (mean-zero processes)."""
        return self.draws - self.center if self.method == "EBS" else self.draws

    def standardized(self, mask=None):
        """Deviations divided by the standardizing root variance on ``mask``."""
        mask = np.ones(len(self.grid), dtype=bool) if mask is None else mask
        return self.deviations()[:, mask] / np.sqrt(self.standard_variance[mask])


@dataclass(frozen=True)
class RedrawPolicy:
    """Failed bootstrap refits are redrawn up to ``max_attempts`` times each."""

    max_attempts: int = 20


def _refit_profiles(ds, weights, grid, base_fits, options):
    fits = tuple(
        fit_cause_specific(ds, f.cause, weights, options, f.model(), f.beta) for f in base_fits
    )
    curve, raw = ate_with_profiles(fits, ds, grid, weights)
    return curve.values, raw


def _refit_ate(ds, weights, grid, base_fits, options):
    return _refit_profiles(ds, weights, grid, base_fits, options)[0]


def _efron_replicate(b, ds, grid, base_fits, seed, options, max_attempts):
    fails = []
    for attempt in range(max_attempts):
        rng = stream(seed, "EBS", b, attempt)
        counts = rng.multinomial(ds.n, np.full(ds.n, 1.0 / ds.n)).astype(float)
        w = counts * ds.weight
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", CIFClampWarning)
                values = _refit_ate(ds, w, grid, base_fits, options)
            return values, attempt, fails
        except CompetingATEError as exc:
            fails.append(f"replicate {b} attempt {attempt}: {type(exc).__name__}: {exc}")
    return None, max_attempts, fails


def efron_ensemble(ds, grid, B, seed, base_fits=None, models=None, options=None,
                   redraw_policy=None, workers=1) -> ResampleEnsemble:
    """Efron bootstrap ensemble of ATE curves.

    Each replicate resamples ``n`` subjects with replacement (as multinomial
    case weights), refits every cause-specific model and evaluates the ATE on
    ``grid``. Failed refits are redrawn; the total is reported as
    ``discarded``.

    Raises
    ------
    DomainError
        ``B < 1``.
    RefitError
        A replicate failed ``redraw_policy.max_attempts`` times.
    """
    if B < 1:
        raise DomainError("B must be at least 1")
    policy = redraw_policy or RedrawPolicy()
    if base_fits is None:
        base_fits = fit_cause_specific_models(ds, models, options=options)
    results = run_indexed(_efron_replicate, range(B), workers, ds=ds, grid=grid,
                          base_fits=tuple(base_fits), seed=seed, options=options,
                          max_attempts=policy.max_attempts)
    draws = np.empty((B, len(grid)))
    discarded = 0
    failures = []
    for b, (values, n_failed, fails) in enumerate(results):
        failures.extend(fails)
        if values is None:
            raise RefitError(f"bootstrap replicate {b} failed {n_failed} times",
                             diagnostics=failures)
        draws[b] = values
        discarded += n_failed
    return ResampleEnsemble(grid, draws, "EBS", ds.n, discarded=discarded,
                            failures=tuple(failures))


# -- influence function ------------------------------------------------------

@dataclass(frozen=True)
class InfluenceMatrix:
    """Influence values ``IF_i(t)``, shape (n, |grid|).

    ``kinks`` marks grid times at which some finite-difference refit moved a
    counterfactual incidence across the clamp at 1; the estimator is not
    differentiable within the difference stencil there (numeric mode only).
    """

    grid: TimeGrid
    values: np.ndarray
    mode: str = "closed_form"
    kinks: np.ndarray | None = None

    @property
    def variance(self):
        """``nu(t) = n^-1 sum_i IF_i(t)^2``."""
        return np.mean(self.values ** 2, axis=0)

    @property
    def n(self):
        return self.values.shape[0]

    def multiplier_ensemble(self, B, seed) -> ResampleEnsemble:
        """Draws ``n^-1/2 sum_i IF_i(t) G_i`` with standard-normal ``G``."""
        G = np.empty((B, self.n))
        for b in range(B):
            G[b] = stream(seed, "IF", b).standard_normal(self.n)
        draws = G @ self.values / math.sqrt(self.n)
        return ResampleEnsemble(self.grid, draws, "IF", self.n,
                                reference_variance=self.variance)


GATEAUX_OPTIONS = SolverOptions(tol=1e-10, polish=True)


def _gateaux_row(i, ds, base_fits, grid, eps, richardson, options, clamp_pattern):
    w0 = ds.weight
    W = w0.sum()
    steps = (eps, 2 * eps) if richardson else (eps,)
    slopes = []
    kinks = np.zeros(len(grid), dtype=bool)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", CIFClampWarning)
            for h in steps:
                vals = []
                for sign in (1.0, -1.0):
                    # (1 - e) P_w + e delta_i, scaled to total mass W
                    w = w0 * (1.0 - sign * h)
                    w[i] += sign * h * W
                    v, raw = _refit_profiles(ds, w, grid, base_fits, options)
                    kinks |= np.any((raw >= 1.0) != clamp_pattern, axis=0)
                    vals.append(v)
                slopes.append((vals[0] - vals[1]) / (2 * h))
    except CompetingATEError as exc:
        raise RefitError(f"refit failed when perturbing subject {i}: {exc}",
                         subject=i, diagnostics=[repr(exc)]) from exc
    if richardson:
        # the O(h^2) error term cancels
        return (4.0 * slopes[0] - slopes[1]) / 3.0, kinks
    return slopes[0], kinks


def influence_matrix(fits, ds, grid, mode="gateaux_numeric", eps=None, richardson=True,
                     options=None, workers=1) -> InfluenceMatrix:
    """Empirical influence values of the ATE on ``grid``.

    Parameters
    ----------
    mode : {"gateaux_numeric", "closed_form"}
        ``gateaux_numeric`` differentiates the refitted estimator along the
        contamination ``(1 - e) P_n + e delta_i`` by central differences at
        ``e = eps`` (default ``0.01 / n``), with Richardson extrapolation from
        ``eps`` and ``2 eps`` unless ``richardson`` is False. ``closed_form``
        uses the analytic linearization.
    """
    fits = tuple(fits)
    if mode == "closed_form":
        lin = linearize(fits, ds, grid)
        return InfluenceMatrix(grid, lin.influence(), mode)
    if mode != "gateaux_numeric":
        raise DomainError(f"unknown influence mode {mode!r}")
    eps = 1e-2 / ds.n if eps is None else eps
    options = options or GATEAUX_OPTIONS
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CIFClampWarning)
        _, raw = ate_with_profiles(fits, ds, grid)
    rows = run_indexed(_gateaux_row, range(ds.n), workers, ds=ds, base_fits=fits,
                       grid=grid, eps=eps, richardson=richardson, options=options,
                       clamp_pattern=raw >= 1.0)
    values = np.vstack([r[0] for r in rows])
    kinks = np.any(np.vstack([r[1] for r in rows]), axis=0)
    return InfluenceMatrix(grid, values, mode, kinks)


# -- wild bootstrap ----------------------------------------------------------

def wild_contributions(fits, ds, grid, linearization=None):
    """Contributions ``c_i(t)``, zero for subjects without an observed event.

    ``U(t) = sum_i c_i(t) G_i`` approximates ``sqrt(n) (ATE_hat - ATE)``.
    """
    lin = linearization or linearize(fits, ds, grid)
    return math.sqrt(ds.n) * lin.wild_contributions()


def wild_draws(contributions, G):
    """``U^(b)(t) = sum_i c_i(t) G_bi``, linear in the multipliers."""
    return np.asarray(G, dtype=float) @ contributions


def wild_ensemble(fits, ds, grid, B, scheme, seed, linearization=None,
                  contributions=None) -> ResampleEnsemble:
    """Wild-bootstrap ensemble of ``B`` process draws."""
    if B < 1:
        raise DomainError("B must be at least 1")
    scheme = _as_scheme(scheme)
    C = wild_contributions(fits, ds, grid, linearization) if contributions is None \
        else contributions
    G = multiplier_matrix(scheme, ds, B, seed, f"WBS-{scheme.kind}")
    method = {v: k for k, v in WILD_METHODS.items()}[scheme.kind]
    return ResampleEnsemble(grid, wild_draws(C, G), method, ds.n)


# -- regions -----------------------------------------------------------------

@dataclass(frozen=True)
class ConfidenceRegion:
    """Pointwise intervals or a simultaneous band on ``grid``.

    ``estimate`` is the ATE on ``grid`` (a subset of the estimate's grid).
    """

    grid: TimeGrid
    estimate: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    level: float
    method: str
    band: bool
    quantile_used: object
    warnings: tuple = ()
    excluded: tuple = ()

    @property
    def width(self):
        return self.upper - self.lower

    def contains(self, truth):
        """Pointwise containment of ``truth`` (values on ``grid``)."""
        truth = np.asarray(truth, dtype=float)
        return (self.lower <= truth) & (truth <= self.upper)


def _check_alpha(alpha):
    if not 0 < alpha < 1:
        raise DomainError("alpha must lie in (0, 1)")


def _select(estimate: ATECurve, times):
    if times is None:
        return np.arange(len(estimate.grid))
    times = np.atleast_1d(np.asarray(times, dtype=float))
    return np.array([estimate.grid.index_of(t) for t in times], dtype=int)


def pointwise_ci(source, estimate: ATECurve, alpha=0.05, times=None) -> ConfidenceRegion:
    """Pointwise ``1 - alpha`` intervals at ``times`` (grid points; default all).

    ``source`` is an EBS or WBS :class:`ResampleEnsemble` or an
    :class:`InfluenceMatrix`.
    """
    _check_alpha(alpha)
    idx = _select(estimate, times)
    est = estimate.values[idx]
    notes = []
    if isinstance(source, InfluenceMatrix):
        method = "IF"
        nu = source.variance[idx]
        q = float(norm.ppf(1 - alpha / 2))
        half = q * np.sqrt(nu / source.n)
        lower, upper = est - half, est + half
    elif source.method == "EBS":
        method = "EBS"
        lo = column_quantiles(source.draws[:, idx], alpha / 2)
        hi = column_quantiles(source.draws[:, idx], 1 - alpha / 2)
        q = np.vstack([lo, hi])
        lower, upper = np.minimum(lo, est), np.maximum(hi, est)
        if np.any(lower < lo) or np.any(upper > hi):
            notes.append("percentile interval widened to contain the estimate")
    elif source.method in WILD_METHODS:
        method = source.method
        nu = source.variance[idx]
        q = column_quantiles(np.abs(source.draws[:, idx]), 1 - alpha)
        half = q / source.scale
        lower, upper = est - half, est + half
    else:
        raise DomainError(f"no pointwise interval for method {source.method!r}")
    if method != "EBS" and np.any(nu <= VAR_EPS):
        notes.append("zero variance at some times; interval degenerates to the estimate")
    return ConfidenceRegion(TimeGrid(estimate.grid.points[idx]), est, lower, upper,
                            1 - alpha, method, False, q, tuple(notes))


def band_mask(ensemble: ResampleEnsemble, t1, t2):
    pts = ensemble.grid.points
    inside = (pts >= t1) & (pts <= t2)
    return inside, inside & (ensemble.standard_variance > VAR_EPS)


def band_statistics(ensemble: ResampleEnsemble, t1, t2):
    """Per-draw suprema of the standardized deviations over ``[t1, t2]``."""
    inside, mask = band_mask(ensemble, t1, t2)
    if not mask.any():
        raise DomainError(f"no grid point in [{t1}, {t2}] with positive variance")
    return np.max(np.abs(ensemble.standardized(mask)), axis=1), inside, mask


def pointwise_standardized_quantile(ensemble: ResampleEnsemble, alpha, t0):
    """``1 - alpha`` quantile of ``|standardized draw at t0|``, same draws as the band."""
    j = ensemble.grid.index_of(t0)
    mask = np.zeros(len(ensemble.grid), dtype=bool)
    mask[j] = True
    return empirical_quantile(np.abs(ensemble.standardized(mask)[:, 0]), 1 - alpha)


def simultaneous_band(source: ResampleEnsemble, estimate: ATECurve, alpha=0.05,
                      t1=0.0, t2=None) -> ConfidenceRegion:
    """Simultaneous ``1 - alpha`` band over ``[t1, t2]``.

    ``source`` is an EBS or WBS ensemble or the multiplier ensemble of an
    influence matrix (:meth:`InfluenceMatrix.multiplier_ensemble`). Grid
    points with variance at most ``1e-12`` are left out.
    """
    _check_alpha(alpha)
    if not np.array_equal(source.grid.points, estimate.grid.points):
        raise DomainError("ensemble and estimate grids differ")
    t2 = estimate.grid.points[-1] if t2 is None else t2
    if t2 < t1:
        raise DomainError("band interval must satisfy t1 <= t2")
    sups, inside, mask = band_statistics(source, t1, t2)
    q = empirical_quantile(sups, 1 - alpha)
    half = q * np.sqrt(source.standard_variance[mask]) / source.scale
    est = estimate.values[mask]
    notes = []
    excluded = tuple(float(t) for t in source.grid.points[inside & ~mask])
    if excluded:
        notes.append(f"{len(excluded)} zero-variance grid point(s) excluded")
    if source.B == 1:
        notes.append("band built from a single draw")
    return ConfidenceRegion(TimeGrid(source.grid.points[mask]), est, est - half, est + half,
                            1 - alpha, source.method, True, float(q), tuple(notes), excluded)
