"""Cause-specific Cox proportional hazards models.

Coefficients maximise the weighted partial likelihood (no tied event times,
so no tie correction is needed) by Newton-Raphson with step-halving; the
baseline cumulative hazard is the weighted Breslow estimator.

The design of a cause-``k`` model is the treatment indicator (optional,
always the first coefficient) followed by a subset of the dataset's
covariate columns.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (DomainError, NonConvergenceError, SchemaError,
                     SingularInformationError)

TREATMENT = "treated"


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-9
    max_iter: int = 50
    max_halvings: int = 20
    divergence_bound: float = 30.0
    # Newton step size required on top of the score tolerance; a monotone
    # likelihood drives the score to 0 while the steps stay of order one.
    step_tol: float = 1e-6
    # take one extra Newton step after convergence (machine-precision beta)
    polish: bool = False


@dataclass(frozen=True)
class CoxModel:
    """Covariate set of one cause-specific model.

    ``columns`` are covariate names or indices (None: all columns).
    ``fixed_treatment`` holds the treatment coefficient at a constant instead
    of estimating it.
    """

    columns: tuple | None = None
    treatment: bool = True
    fixed_treatment: float | None = None

    def resolve(self, ds):
        if self.columns is None:
            idx = tuple(range(ds.p))
        else:
            idx = tuple(c if isinstance(c, (int, np.integer)) else ds.column_index(c)
                        for c in self.columns)
            if any(not 0 <= j < ds.p for j in idx):
                raise SchemaError(f"covariate index out of range in {self.columns!r}")
        return idx


@dataclass(frozen=True)
class StepCumHazard:
    """Right-continuous step function with positive jumps."""

    jump_times: np.ndarray
    jump_sizes: np.ndarray
    cumulative: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        t = np.asarray(self.jump_times, dtype=float)
        s = np.asarray(self.jump_sizes, dtype=float)
        if t.shape != s.shape or np.any(np.diff(t) <= 0):
            raise DomainError("jump times must be strictly increasing and match jump sizes")
        object.__setattr__(self, "jump_times", t)
        object.__setattr__(self, "jump_sizes", s)
        object.__setattr__(self, "cumulative", np.cumsum(s))

    def _at(self, t, side):
        idx = np.searchsorted(self.jump_times, t, side=side)
        out = np.concatenate(([0.0], self.cumulative))[idx]
        return float(out) if np.ndim(out) == 0 else out

    def __call__(self, t):
        """Sum of jumps at times <= t."""
        return self._at(t, "right")

    def left_limit(self, t):
        """Sum of jumps at times < t."""
        return self._at(t, "left")


@dataclass(frozen=True)
class CoxFit:
    cause: int
    beta: np.ndarray
    baseline: StepCumHazard
    loglik: float
    score_norm_at_solution: float
    iterations: int
    converged: bool
    information_matrix: np.ndarray
    columns: tuple
    has_treatment: bool
    coef_names: tuple
    free: np.ndarray
    n_covariates: int
    options: SolverOptions = SolverOptions()

    @property
    def treatment_coef(self):
        return float(self.beta[0]) if self.has_treatment else 0.0

    @property
    def covariate_coef(self):
        return self.beta[1:] if self.has_treatment else self.beta

    def model(self):
        fixed = None if (not self.has_treatment or self.free[0]) else float(self.beta[0])
        return CoxModel(columns=self.columns, treatment=self.has_treatment,
                        fixed_treatment=fixed)

    def linear_predictor(self, a, z):
        """``beta_A * a + beta_Z' z[columns]`` for scalar or stacked inputs.

        ``z`` is a full covariate vector (or matrix of row vectors) in the
        dataset's column layout.
        """
        z = np.asarray(z, dtype=float)
        lp = (z[..., list(self.columns)] @ self.covariate_coef) if self.columns else \
            np.zeros(z.shape[:-1])
        if self.has_treatment:
            lp = lp + self.treatment_coef * np.asarray(a, dtype=float)
        return lp

    def with_treatment_coef(self, value):
        """Copy with the treatment coefficient replaced (baseline unchanged)."""
        if not self.has_treatment:
            raise DomainError("model has no treatment coefficient")
        beta = self.beta.copy()
        beta[0] = value
        return replace(self, beta=beta)


def design_matrix(ds, model: CoxModel):
    cols = model.resolve(ds)
    parts, names = [], []
    if model.treatment:
        parts.append(ds.treated[:, None])
        names.append(TREATMENT)
    if cols:
        parts.append(ds.covariates[:, list(cols)])
        names.extend(ds.covariate_names[j] for j in cols)
    X = np.hstack(parts) if parts else np.zeros((ds.n, 0))
    free = np.ones(X.shape[1], dtype=bool)
    if model.treatment and model.fixed_treatment is not None:
        free[0] = False
    return X, cols, tuple(names), free


def _weights(ds, weights):
    w = ds.weight if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (ds.n,) or np.any(w < 0) or not np.all(np.isfinite(w)):
        raise DomainError("weights must be a nonnegative vector of length n")
    return w


class _RiskSets:
    """Sorted layout of one cause's risk sets, independent of beta."""

    def __init__(self, ds, cause, X, w):
        o = ds.order
        self.t = ds.sorted_time
        self.X = X[o]
        self.w = w[o]
        ev = (ds.cause[o] == cause) & (self.w > 0)
        self.ev = np.flatnonzero(ev)
        if self.ev.size == 0:
            raise DomainError(f"no events of cause {cause}")
        # first sorted position with time >= event time
        self.start = np.searchsorted(self.t, self.t[self.ev], side="left")
        self.event_times = self.t[self.ev]

    def sums(self, beta, order=2):
        """Risk-set sums at each event: log S0, E = S1/S0, V = S2/S0."""
        eta = self.X @ beta
        m = eta.max()
        r = self.w * np.exp(eta - m)
        S0 = np.cumsum(r[::-1])[::-1][self.start]
        if np.any(S0 < 1e-280):
            return self._sums_local(eta, order)
        logS0 = np.log(S0) + m
        rx = r[:, None] * self.X
        E = np.cumsum(rx[::-1], axis=0)[::-1][self.start] / S0[:, None]
        if order < 2:
            return eta, logS0, E, None
        rxx = rx[:, :, None] * self.X[:, None, :]
        V = np.cumsum(rxx[::-1], axis=0)[::-1][self.start] / S0[:, None, None]
        return eta, logS0, E, V

    def _sums_local(self, eta, order):
        # shift each risk set by its own maximum; used only for extreme eta
        q = self.X.shape[1]
        nev = self.ev.size
        logS0 = np.empty(nev)
        E = np.empty((nev, q))
        V = np.empty((nev, q, q)) if order >= 2 else None
        runmax = np.maximum.accumulate(eta[::-1])[::-1]
        for j, s in enumerate(self.start):
            mm = runmax[s]
            r = self.w[s:] * np.exp(eta[s:] - mm)
            s0 = r.sum()
            logS0[j] = np.log(s0) + mm
            rx = r[:, None] * self.X[s:]
            E[j] = rx.sum(axis=0) / s0
            if order >= 2:
                V[j] = rx.T @ self.X[s:] / s0
        return eta, logS0, E, V


def _evaluate(rs, beta, order=2):
    eta, logS0, E, V = rs.sums(beta, order)
    we = rs.w[rs.ev]
    ll = float(np.sum(we * (eta[rs.ev] - logS0)))
    score = (we[:, None] * (rs.X[rs.ev] - E)).sum(axis=0)
    if order < 2:
        return ll, score, None
    cov = V - E[:, :, None] * E[:, None, :]
    hess = -np.einsum("e,eij->ij", we, cov)
    return ll, score, hess


def partial_loglik(ds, cause, beta, weights=None, model: CoxModel | None = None):
    """Weighted log partial likelihood with its gradient and Hessian.

    Parameters
    ----------
    ds : Dataset
    cause : int
    beta : array_like
        Coefficients in design order (treatment first when modelled).
    weights : array_like, optional
        Case weights; defaults to the dataset's weights.
    model : CoxModel, optional
        Defaults to treatment plus all covariates.

    Returns
    -------
    loglik : float
    score : ndarray
    hessian : ndarray
    """
    model = model or CoxModel()
    X, _, _, _ = design_matrix(ds, model)
    beta = np.asarray(beta, dtype=float).reshape(X.shape[1])
    if not np.all(np.isfinite(beta)):
        raise DomainError("beta must be finite")
    rs = _RiskSets(ds, cause, X, _weights(ds, weights))
    return _evaluate(rs, beta)


def breslow_baseline(ds, cause, beta, weights=None, model: CoxModel | None = None):
    """Breslow cumulative baseline hazard of ``cause`` at coefficients ``beta``."""
    model = model or CoxModel()
    X, _, _, _ = design_matrix(ds, model)
    beta = np.asarray(beta, dtype=float).reshape(X.shape[1])
    rs = _RiskSets(ds, cause, X, _weights(ds, weights))
    _, logS0, _, _ = rs.sums(beta, order=1)
    return _breslow(rs, logS0)


def _breslow(rs, logS0):
    sizes = np.exp(np.log(rs.w[rs.ev]) - logS0)
    return StepCumHazard(rs.event_times.copy(), sizes)


def _singular_column(info, names, free_idx):
    vals, vecs = np.linalg.eigh(info)
    j = int(np.argmax(np.abs(vecs[:, 0])))
    return names[free_idx[j]]


def _check_constant_columns(rs, names, free_idx):
    first = rs.start.min()
    at_risk = rs.X[first:][rs.w[first:] > 0]
    for j in free_idx:
        col = at_risk[:, j]
        if col.max() - col.min() <= 1e-12 * max(1.0, abs(col.max())):
            raise SingularInformationError(
                f"covariate {names[j]!r} is constant among subjects at risk; "
                "the information matrix is singular", column=names[j])


def fit_cause_specific(ds, cause, weights=None, options: SolverOptions | None = None,
                       model: CoxModel | None = None, init=None) -> CoxFit:
    """Fit a cause-specific Cox model by Newton-Raphson.

    Raises
    ------
    SingularInformationError
        A free covariate has no variation within the risk sets (the error
        names the column) or the information matrix is otherwise singular.
    NonConvergenceError
        The coefficients left the divergence bound while the likelihood kept
        increasing (monotone likelihood).
    """
    options = options or SolverOptions()
    model = model or CoxModel()
    X, cols, names, free = design_matrix(ds, model)
    w = _weights(ds, weights)
    rs = _RiskSets(ds, cause, X, w)
    if rs.ev.size < 2:
        raise DomainError(f"cause {cause} needs at least 2 events, has {rs.ev.size}")
    free_idx = np.flatnonzero(free)
    _check_constant_columns(rs, names, free_idx)

    q = X.shape[1]
    beta = np.zeros(q) if init is None else np.array(init, dtype=float).reshape(q)
    if not free[0:1].all() and q:
        beta[0] = model.fixed_treatment
    ll, score, hess = _evaluate(rs, beta)
    converged = free_idx.size == 0
    it = 0
    while not converged:
        info = -hess[np.ix_(free_idx, free_idx)]
        try:
            chol = np.linalg.cholesky(info)
        except np.linalg.LinAlgError:
            col = _singular_column(info, names, free_idx)
            raise SingularInformationError(
                f"information matrix is singular (near-collinear covariate {col!r})",
                column=col) from None
        step = np.linalg.solve(chol.T, np.linalg.solve(chol, score[free_idx]))
        if (np.max(np.abs(score[free_idx])) <= options.tol
                and np.max(np.abs(step)) <= options.step_tol):
            converged = True
            if options.polish:
                beta = beta.copy()
                beta[free_idx] += step
                ll, score, hess = _evaluate(rs, beta)
            break
        if it >= options.max_iter:
            break
        it += 1
        new = beta.copy()
        new[free_idx] += step
        ll_new, score_new, hess_new = _evaluate(rs, new)
        halvings = 0
        while not (ll_new >= ll - 1e-12 * max(1.0, abs(ll))) and halvings < options.max_halvings:
            step = step / 2
            new = beta.copy()
            new[free_idx] += step
            ll_new, score_new, hess_new = _evaluate(rs, new)
            halvings += 1
        if np.max(np.abs(new)) > options.divergence_bound and ll_new > ll:
            raise NonConvergenceError(
                f"cause {cause}: coefficients exceed {options.divergence_bound} while the "
                "partial likelihood keeps increasing (monotone likelihood)")
        beta, ll, score, hess = new, ll_new, score_new, hess_new

    _, logS0, _, _ = rs.sums(beta, order=1)
    info_full = -hess
    return CoxFit(
        cause=cause, beta=beta, baseline=_breslow(rs, logS0), loglik=ll,
        score_norm_at_solution=float(np.max(np.abs(score[free_idx]))) if free_idx.size else 0.0,
        iterations=it, converged=converged,
        information_matrix=0.5 * (info_full + info_full.T),
        columns=cols, has_treatment=model.treatment, coef_names=names, free=free,
        n_covariates=ds.p, options=options,
    )


def fit_cause_specific_models(ds, models=None, weights=None, options=None, init=None):
    """Fit one Cox model per cause ``1..K``.

    ``models`` maps cause to :class:`CoxModel` (missing causes use the
    default). The cause-1 model must include the treatment indicator.
    ``init`` is an optional sequence of starting coefficient vectors.
    """
    models = dict(models or {})
    fits = []
    for k in range(1, ds.num_causes + 1):
        model = models.get(k, CoxModel())
        if k == 1 and not model.treatment:
            raise DomainError("the cause-1 model must include the treatment indicator")
        start = None if init is None else init[k - 1]
        fits.append(fit_cause_specific(ds, k, weights, options, model, start))
    return tuple(fits)


def cumulative_hazard_at(fit: CoxFit, a, z, t):
    """Conditional cumulative hazard ``Lambda_0(t) * exp(beta_A a + beta_Z' z)``."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if z.ndim != 1 or z.shape[0] != fit.n_covariates:
        raise DomainError(f"covariate vector has length {z.shape[0]}, "
                          f"the model expects {fit.n_covariates}")
    if np.any(np.asarray(t) < 0):
        raise DomainError("t must be nonnegative")
    return fit.baseline(t) * float(np.exp(fit.linear_predictor(a, z)))
