"""Reference implementations written from first principles with plain loops.

None of these import the estimation code; they only read raw dataset arrays.
"""

import numpy as np
from scipy.optimize import brentq, minimize


def brute_loglik(time, cause, X, beta, k=1, w=None):
    """Weighted log partial likelihood by explicit risk-set loops."""
    n = len(time)
    w = np.ones(n) if w is None else w
    ll = 0.0
    for i in range(n):
        if cause[i] != k:
            continue
        denom = sum(w[j] * np.exp(X[j] @ beta) for j in range(n) if time[j] >= time[i])
        ll += w[i] * (X[i] @ beta - np.log(denom))
    return ll


def brute_fit(time, cause, X, k=1):
    """Maximise :func:`brute_loglik` with a generic quasi-Newton optimiser."""
    res = minimize(lambda b: -brute_loglik(time, cause, X, b, k), np.zeros(X.shape[1]),
                   method="BFGS", options={"gtol": 1e-10})
    return res.x


def brute_breslow(time, cause, X, beta, k=1):
    """Breslow jumps as a dict ``{event time: jump}``."""
    out = {}
    for i in range(len(time)):
        if cause[i] == k:
            denom = sum(np.exp(X[j] @ beta) for j in range(len(time)) if time[j] >= time[i])
            out[time[i]] = 1.0 / denom
    return out


def brute_cif(time, cause, a_col, z, fits_beta, K, a, zq, t, X_of):
    """Cause-1 incidence of profile ``(a, zq)`` at ``t`` from per-cause betas.

    ``X_of(a, z)`` maps a profile to the design row shared by all causes.
    """
    x = X_of(a, zq)
    X = np.array([X_of(a_col[j], z[j]) for j in range(len(time))])
    jumps = [brute_breslow(time, cause, X, fits_beta[k], k + 1) for k in range(K)]
    total = 0.0
    for s in sorted(jumps[0]):
        if s > t:
            break
        cum = 0.0
        for k in range(K):
            cum += sum(v for u, v in jumps[k].items() if u < s) * np.exp(x @ fits_beta[k])
        total += np.exp(-cum) * jumps[0][s] * np.exp(x @ fits_beta[0])
    return total


def stratified_treatment_ate(time, cause, treated, K, grid):
    """ATE of a treatment-only Cox model from arm-stratified risk counts.

    Returns the ATE on ``grid``, the per-cause coefficients and the per-arm
    incidences ``{0: F1(grid | 0), 1: F1(grid | 1)}``.

    For each cause the coefficient is the root of the one-dimensional score
    ``sum_events (a_i - e^b Y1 / (Y0 + e^b Y1))``; the arm hazards are then
    ``e^{b a} dN(s) / (Y0(s) + e^b Y1(s))`` and the incidence is the
    product-integral step sum with left-limit survival.
    """
    time = np.asarray(time, float)
    order = np.argsort(time)
    t_s, c_s, a_s = time[order], np.asarray(cause)[order], np.asarray(treated, float)[order]
    n = len(t_s)
    y1 = np.cumsum(a_s[::-1])[::-1]
    y0 = np.arange(n, 0, -1) - y1

    betas = []
    for k in range(1, K + 1):
        ev = c_s == k

        def score(b):
            e = np.exp(b)
            return np.sum(a_s[ev] - e * y1[ev] / (y0[ev] + e * y1[ev]))
        betas.append(brentq(score, -30, 30, xtol=1e-14, rtol=1e-15))
    betas = np.array(betas)

    ev_idx = np.flatnonzero(c_s > 0)
    out = {}
    for arm in (0, 1):
        cum = np.zeros(K)
        F = 0.0
        steps = []
        for i in ev_idx:
            k = c_s[i] - 1
            e = np.exp(betas[k])
            dl = np.exp(betas[k] * arm) / (y0[i] + e * y1[i])
            if k == 0:
                F += np.exp(-cum.sum()) * dl
            cum[k] += dl
            steps.append((t_s[i], F))
        ts = np.array([s for s, _ in steps])
        fs = np.array([f for _, f in steps])
        pos = np.searchsorted(ts, grid, side="right")
        out[arm] = np.concatenate([[0.0], fs])[pos]
    return out[1] - out[0], betas, out


def brute_grad_hess(time, cause, X, beta, k=1, h=1e-4):
    """Central-difference gradient and Hessian of :func:`brute_loglik`."""
    q = len(beta)
    f = lambda b: brute_loglik(time, cause, X, b, k)
    E = np.eye(q) * h
    grad = np.array([(f(beta + E[j]) - f(beta - E[j])) / (2 * h) for j in range(q)])
    hess = np.empty((q, q))
    for i in range(q):
        for j in range(q):
            hess[i, j] = (f(beta + E[i] + E[j]) - f(beta + E[i] - E[j])
                          - f(beta - E[i] + E[j]) + f(beta - E[i] - E[j])) / (4 * h * h)
    return grad, hess
