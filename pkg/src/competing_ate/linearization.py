"""First-order expansion of the g-formula ATE in the subjects' case weights.

For subject ``i`` the derivative of the ATE curve with respect to its case
weight splits into three pieces:

* an *event* part, driven by the subject's own jump ``dN_ki`` (nonzero only
  for subjects with an observed event),
* a *compensator* part, ``-int Y_i exp(beta_k'x_i) dLambda_0k`` times the
  same integrand, and
* an *averaging* part from the empirical covariate distribution.

Event plus compensator is the integral of the integrand against the
estimated martingale ``dM_ki``, obtained from the Cox score and Breslow
expansions by the chain rule. Scaled by ``n`` the three parts sum to the
empirical influence function; the event part alone, multiplied by random
multipliers, gives the wild-bootstrap process.

Profiles whose incidence is clamped at 1 at a grid time are locally
constant there and contribute nothing to the derivative at that time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cif import ATECurve, Predictor, _require_converged, arm_profiles, normalized_weights
from .cox import design_matrix


@dataclass(frozen=True)
class Linearization:
    """Per-subject derivative pieces on a grid, each of shape (n, |grid|)."""

    estimate: ATECurve
    event: np.ndarray
    compensator: np.ndarray
    averaging: np.ndarray
    weights: np.ndarray

    def influence(self):
        """Empirical influence values ``n * w_i * dATE/dw_i``."""
        n = self.event.shape[0]
        total = self.event + self.compensator + self.averaging
        return n * self.weights[:, None] * total

    def wild_contributions(self):
        """Event-driven contributions ``c_i(t)`` of the wild bootstrap."""
        return self.weights[:, None] * self.event


def _cause_terms(fit, ds, w, pred, live, grid_pts, F_grid):
    """Derivative of the ATE w.r.t. one cause's (beta, baseline jumps).

    ``live[r, t]`` is the averaging weight of profile row ``r`` at grid time
    ``t``, already zeroed where that row's incidence is clamped at 1.
    Returns the event and compensator parts, each (n, T).
    """
    k = fit.cause
    n = ds.n
    base = fit.baseline
    s = base.jump_times
    dL = base.jump_sizes
    T = grid_pts.size

    X, _, _, free = design_matrix(ds, fit.model())
    rr_subj = np.exp(X @ fit.beta)
    # risk-set mean covariate E_k(s_m) and weighted risk sum S0_k(s_m)
    at_risk_from = np.searchsorted(ds.sorted_time, s, side="left")
    o = ds.order
    r_sorted = (w * rr_subj)[o]
    S0 = np.cumsum(r_sorted[::-1])[::-1][at_risk_from]
    S1 = np.cumsum((r_sorted[:, None] * X[o])[::-1], axis=0)[::-1][at_risk_from]
    E = S1 / S0[:, None]

    rr_k = pred.rr[:, k - 1]
    after = s[:, None] <= grid_pts[None, :]  # (J, T) jump s_m counts at grid time t

    # d ATE / d dLambda_{k,m}
    F_at_s = pred.cif_at(s)  # (rows, J)
    Q = (rr_k[:, None] * F_at_s).T @ live  # (J, T)
    R = np.sum(live * rr_k[:, None] * F_grid, axis=0)  # (T,)
    g_lam = Q - R[None, :]
    if k == 1:
        g_lam = g_lam + (pred.surv_left * pred.rr[:, :1]).T @ live
    g_lam = np.where(after, g_lam, 0.0)

    # d ATE / d beta_k holding the baseline jumps fixed
    Xrows = _profile_design(fit, pred)
    P = np.cumsum(pred.incr * pred.base_left[k - 1][None, :], axis=1)
    P_grid = np.concatenate([np.zeros((P.shape[0], 1)), P], axis=1)[:, pred.positions(grid_pts)]
    inner = -rr_k[:, None] * P_grid
    if k == 1:
        inner = inner + F_grid
    g_beta = Xrows.T @ (live * inner)  # (q, T)
    # total beta derivative including the baseline's dependence on beta
    G = g_beta - (E * dL[:, None]).T @ g_lam  # (q, T)

    free_idx = np.flatnonzero(free)
    M = np.zeros((X.shape[1], T))
    if free_idx.size:
        info = fit.information_matrix[np.ix_(free_idx, free_idx)]
        M[free_idx] = np.linalg.solve(info, G[free_idx])

    # event part: subjects with a cause-k event at jump m(i)
    event = np.zeros((n, T))
    is_event = (ds.cause == k) & (w > 0)
    idx = np.flatnonzero(is_event)
    m = np.searchsorted(s, ds.time[idx])
    event[idx] = (X[idx] - E[m]) @ M + g_lam[m] / S0[m, None]

    # compensator part: -r_k(x_i) * sum_{s_m <= T_i} dLambda_m [ ... ]
    pos = np.searchsorted(s, ds.time, side="right")
    cum_lam = np.concatenate([[0.0], np.cumsum(dL)])[pos]
    cum_E = np.concatenate([np.zeros((1, E.shape[1])), np.cumsum(E * dL[:, None], axis=0)])[pos]
    cum_g = np.concatenate([np.zeros((1, T)), np.cumsum(g_lam * (dL / S0)[:, None], axis=0)])[pos]
    comp = (X * cum_lam[:, None] - cum_E) @ M + cum_g
    compensator = -rr_subj[:, None] * comp
    return event, compensator


def _profile_design(fit, pred):
    """Design rows of the counterfactual profiles for ``fit``."""
    parts = []
    if fit.has_treatment:
        parts.append(pred.a[:, None])
    if fit.columns:
        parts.append(pred.z[:, list(fit.columns)])
    return np.hstack(parts) if parts else np.zeros((pred.a.size, 0))


def linearize(fits, ds, grid, weights=None) -> Linearization:
    """Weight derivative of the g-formula ATE, split by source.

    Parameters
    ----------
    fits : sequence of CoxFit
        Converged fits on ``ds`` (with the same case weights).
    ds : Dataset
    grid : TimeGrid
    weights : array_like, optional
        Case weights the fits were computed with; defaults to ``ds.weight``.
    """
    fits = tuple(fits)
    _require_converged(fits)
    w = ds.weight if weights is None else np.asarray(weights, dtype=float)
    n = ds.n
    a, z = arm_profiles(ds)
    pred = Predictor(fits, a, z)
    omega = normalized_weights(ds, w)
    coef = np.concatenate([omega, -omega])
    pts = grid.points
    F_grid = pred.cif_at(pts)
    # clamped incidences are locally constant and drop out of the derivative
    live = coef[:, None] * (F_grid < 1.0)
    cif = np.minimum(F_grid, 1.0)
    diff = cif[:n] - cif[n:]
    ate = omega @ diff

    event = np.zeros((n, pts.size))
    compensator = np.zeros((n, pts.size))
    for fit in fits:
        ev, cp = _cause_terms(fit, ds, w, pred, live, pts, F_grid)
        event += ev
        compensator += cp
    averaging = (diff - ate[None, :]) / w.sum()
    estimate = ATECurve(grid, np.clip(ate, -1.0, 1.0), n, bool(np.any(F_grid > 1.0)))
    return Linearization(estimate, event, compensator, averaging, w)
