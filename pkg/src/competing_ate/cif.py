"""Conditional cumulative incidence and the g-formula treatment effect.

The cause-1 cumulative incidence given ``(a, z)`` is the step sum over
cause-1 baseline jumps ``s``::

    F1(t | a, z) = sum_{s <= t} exp(-sum_k Lambda_k(s- | a, z)) dLambda_1(s | a, z)

and the average treatment effect averages ``F1(t | 1, Z_i) - F1(t | 0, Z_i)``
over the (weighted) empirical covariate distribution.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, NonConvergenceError


class CIFClampWarning(UserWarning):
    """A raw cumulative incidence sum exceeded 1 and was clamped."""


@dataclass(frozen=True)
class TimeGrid:
    points: np.ndarray

    def __post_init__(self):
        p = np.atleast_1d(np.asarray(self.points, dtype=float))
        if p.ndim != 1 or p.size == 0:
            raise DomainError("a time grid needs at least one point")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise DomainError("grid points must be finite and nonnegative")
        if np.any(np.diff(p) <= 0):
            raise DomainError("grid points must be strictly increasing")
        p.setflags(write=False)
        object.__setattr__(self, "points", p)

    def __len__(self):
        return self.points.size

    def index_of(self, t):
        """Position of grid point ``t`` (exact match required)."""
        j = int(np.searchsorted(self.points, t))
        if j >= self.points.size or self.points[j] != t:
            raise DomainError(f"time {t!r} is not a grid point")
        return j

    def within(self, t1, t2):
        return (self.points >= t1) & (self.points <= t2)


@dataclass(frozen=True)
class ATECurve:
    grid: TimeGrid
    values: np.ndarray
    n_subjects: int
    clamped: bool = False

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (len(self.grid),):
            raise DomainError("ATE values must match the grid length")
        if np.any(np.abs(v) > 1 + 1e-12):
            raise DomainError("ATE values must lie in [-1, 1]")
        object.__setattr__(self, "values", v)

    def at(self, t):
        return float(self.values[self.grid.index_of(t)])


def default_grid(ds, report_times=(), tau=None):
    """Sorted cause-1 event times together with ``report_times``."""
    pts = np.concatenate([ds.event_times(1), np.asarray(report_times, dtype=float)])
    if tau is not None:
        pts = pts[pts <= tau]
    return TimeGrid(np.unique(pts))


def _require_converged(fits):
    if not fits:
        raise DomainError("at least one cause-specific fit is required")
    for k, f in enumerate(fits, start=1):
        if f.cause != k:
            raise DomainError(f"fit {k} is for cause {f.cause}; fits must be ordered by cause")
        if not f.converged:
            raise NonConvergenceError(f"cause-{k} fit did not converge; refusing to predict")


@dataclass
class Predictor:
    """Cause-1 incidence increments for a stack of covariate profiles.

    Rows are ``(a, z)`` profiles. ``incr[r, j]`` is the cause-1 incidence
    increment of row ``r`` at the ``j``-th cause-1 baseline jump and
    ``cif[r, j]`` its running sum.
    """

    fits: tuple
    a: np.ndarray
    z: np.ndarray
    jumps: np.ndarray = field(init=False)
    rr: np.ndarray = field(init=False)
    base_left: np.ndarray = field(init=False)
    surv_left: np.ndarray = field(init=False)
    incr: np.ndarray = field(init=False)
    cif: np.ndarray = field(init=False)

    def __post_init__(self):
        fits = self.fits
        b1 = fits[0].baseline
        self.jumps = b1.jump_times
        # relative risks, rows x causes
        self.rr = np.exp(np.column_stack([f.linear_predictor(self.a, self.z) for f in fits]))
        # cause-k baseline cumulative hazards just before each cause-1 jump
        self.base_left = np.vstack([f.baseline.left_limit(self.jumps) for f in fits])
        self.surv_left = np.exp(-(self.rr @ self.base_left))
        self.incr = self.surv_left * self.rr[:, :1] * b1.jump_sizes[None, :]
        self.cif = np.cumsum(self.incr, axis=1)

    def positions(self, times):
        """Number of cause-1 jumps at or before each time."""
        return np.searchsorted(self.jumps, times, side="right")

    def cif_at(self, times):
        pos = self.positions(times)
        padded = np.concatenate([np.zeros((self.cif.shape[0], 1)), self.cif], axis=1)
        return padded[:, pos]


def _clamp(values):
    over = values > 1.0
    if np.any(over):
        warnings.warn("cumulative incidence exceeded 1 and was clamped", CIFClampWarning,
                      stacklevel=3)
        return np.minimum(values, 1.0), True
    return values, False


def cumulative_incidence(fits, a, z, grid: TimeGrid):
    """Cause-1 cumulative incidence of profile ``(a, z)`` on ``grid``."""
    fits = tuple(fits)
    _require_converged(fits)
    z = np.atleast_1d(np.asarray(z, dtype=float))
    for f in fits:
        if z.shape[-1] != f.n_covariates:
            raise DomainError(f"covariate vector has length {z.shape[-1]}, "
                              f"the cause-{f.cause} model expects {f.n_covariates}")
    pred = Predictor(fits, np.array([float(a)]), z[None, :])
    values, _ = _clamp(pred.cif_at(grid.points)[0])
    return values


def arm_profiles(ds):
    """Counterfactual rows: every subject under a=1 then under a=0."""
    n = ds.n
    a = np.concatenate([np.ones(n), np.zeros(n)])
    z = np.vstack([ds.covariates, ds.covariates])
    return a, z


def normalized_weights(ds, weights=None):
    w = ds.weight if weights is None else np.asarray(weights, dtype=float)
    return w / w.sum()


def g_formula_ate(fits, ds, grid: TimeGrid, weights=None) -> ATECurve:
    """Average treatment effect on the cause-1 cumulative incidence.

    Parameters
    ----------
    fits : sequence of CoxFit
        Cause-specific fits ordered by cause; the cause-1 model must contain
        the treatment indicator.
    ds : Dataset
        Supplies the covariate distribution to standardise over.
    grid : TimeGrid
    weights : array_like, optional
        Case weights for the average (normalised to sum 1); defaults to the
        dataset's weights.
    """
    return ate_with_profiles(fits, ds, grid, weights)[0]


def ate_with_profiles(fits, ds, grid: TimeGrid, weights=None):
    """:func:`g_formula_ate` together with the raw (unclamped) profile CIFs.

    Returns the curve and a ``(2n, |grid|)`` array whose first ``n`` rows are
    the subjects under treatment and the last ``n`` under control.
    """
    fits = tuple(fits)
    _require_converged(fits)
    if not fits[0].has_treatment:
        raise DomainError("the cause-1 model must include the treatment indicator")
    a, z = arm_profiles(ds)
    pred = Predictor(fits, a, z)
    raw = pred.cif_at(grid.points)
    cif, clamped = _clamp(raw)
    diff = cif[:ds.n] - cif[ds.n:]
    values = normalized_weights(ds, weights) @ diff
    return ATECurve(grid, np.clip(values, -1.0, 1.0), ds.n, clamped), raw
