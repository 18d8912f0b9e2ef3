"""Synthetic competing-risks data and the true treatment effect.

Twelve baseline covariates: ``Z1..Z6`` normal with mean 0, ``Z7..Z12``
Bernoulli(1/2). Treatment follows a logistic model and three latent Weibull
times (cause 1, cause 2, censoring) share the hazard shape
``0.02 t exp(lp)``; the observed record is their minimum. Because every
hazard has the same shape, conditional cause probabilities and cumulative
incidences have closed forms, which the calibration helpers exploit.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit

from .data import Dataset
from .errors import DomainError, NumericalError
from .rng import stream

LOG2 = math.log(2.0)
COVARIATE_NAMES = tuple(f"Z{j}" for j in range(1, 13))

# log odds ratios / log hazard ratios, in units of log 2, for Z1..Z6; the
# Bernoulli covariates Z7..Z12 repeat the pattern of their normal partners
_TREATMENT = (1, -1, 0, 0, 0, 1)
_CAUSE1 = (1, 0, 1, 0, 0, 1)
_CAUSE2 = (-1, 0, 0, 0, 1, 1)
_CENSOR = (-1, 0, 0, 1, 0, -1)


def _loadings(pattern):
    return LOG2 * np.array(pattern * 2, dtype=float)


TREATMENT_LOADINGS = _loadings(_TREATMENT)
CAUSE1_LOADINGS = _loadings(_CAUSE1)
CAUSE2_LOADINGS = _loadings(_CAUSE2)
CENSOR_LOADINGS = _loadings(_CENSOR)

# Weibull scale: cumulative hazard 0.01 t^2 exp(lp)
HAZARD_SCALE = 0.01

# Calibrated constants; see ``calibrate_censoring_scale`` and
# ``calibrate_alpha0`` (reproduced in the test suite).
LIGHT_CENSORING = 0.4980655793   # 15% censored overall at beta_1A = 0
HEAVY_CENSORING = 1.9760854946   # 30% censored overall at beta_1A = 0
ALPHA0_TREATED_20 = -2.1729324734
ALPHA0_TREATED_85 = 1.9109878750


@dataclass(frozen=True)
class Type2Config:
    """Type-II censoring with staggered entry (single cause).

    ``target_event_count`` of None means ``ceil(target_fraction * n)``.
    """

    target_event_count: int | None = None
    entry_horizon: float = 1.0
    target_fraction: float = 0.7

    def events_for(self, n):
        if self.target_event_count is not None:
            return int(self.target_event_count)
        return int(math.ceil(self.target_fraction * n - 1e-12))


@dataclass(frozen=True)
class ScenarioConfig:
    beta_1A: float = 0.0
    alpha_0: float = 0.0
    normal_covariate_sd: float = 1.0
    censoring_scale: float = LIGHT_CENSORING
    type2: Type2Config | None = None
    min_events_per_cause: int = 10
    max_attempts: int = 1000
    name: str = "default"

    def __post_init__(self):
        if not self.normal_covariate_sd > 0:
            raise DomainError("normal_covariate_sd must be positive")
        if self.censoring_scale < 0:
            raise DomainError("censoring_scale must be nonnegative")
        if self.max_attempts < 1:
            raise DomainError("max_attempts must be at least 1")
        if isinstance(self.type2, dict):
            object.__setattr__(self, "type2", Type2Config(**self.type2))

    @property
    def num_causes(self):
        return 1 if self.type2 is not None else 2

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if d.get("type2") is not None:
            d["type2"] = Type2Config(**d["type2"])
        return cls(**d)

    def content_hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, default=repr)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def preset(name, beta_1A=0.0):
    """Named scenarios of the simulation study.

    ``default`` (light censoring, about half treated), ``no_censoring``,
    ``heavy_censoring``, ``treated_20``, ``treated_85``, ``sd_0.5``
    (covariate variance 0.25), ``sd_2`` (variance 4) and ``type2``.
    """
    base = ScenarioConfig(beta_1A=beta_1A, name=name)
    table = {
        "default": {},
        "no_censoring": {"censoring_scale": 0.0},
        "heavy_censoring": {"censoring_scale": HEAVY_CENSORING},
        "treated_20": {"alpha_0": ALPHA0_TREATED_20},
        "treated_85": {"alpha_0": ALPHA0_TREATED_85},
        "sd_0.5": {"normal_covariate_sd": 0.5},
        "sd_2": {"normal_covariate_sd": 2.0},
        "type2": {"censoring_scale": 0.0, "type2": Type2Config()},
    }
    if name not in table:
        raise DomainError(f"unknown scenario preset {name!r}; choose from {sorted(table)}")
    return replace(base, **table[name])


PRESETS = ("default", "no_censoring", "heavy_censoring", "treated_20", "treated_85",
           "sd_0.5", "sd_2", "type2")


# -- generator -------------------------------------------------------------

def draw_covariates(n, sd, rng):
    normal = rng.normal(0.0, sd, size=(n, 6))
    binary = rng.integers(0, 2, size=(n, 6)).astype(float)
    return np.hstack([normal, binary])


def latent_times(lp, rng):
    """Inverse-transform Weibull draws ``sqrt(-100 log U / exp(lp))``."""
    u = rng.random(np.shape(lp))
    # 1 - U lies in (0, 1]; -log of it is finite
    return np.sqrt(-np.log1p(-u) / HAZARD_SCALE / np.exp(lp))


def _draw_once(cfg, n, rng, randomized=False):
    Z = draw_covariates(n, cfg.normal_covariate_sd, rng)
    if randomized:
        prob = np.full(n, 0.5)
    else:
        prob = expit(cfg.alpha_0 + Z @ TREATMENT_LOADINGS)
    A = (rng.random(n) < prob).astype(float)
    t1 = latent_times(cfg.beta_1A * A + Z @ CAUSE1_LOADINGS, rng)
    if cfg.type2 is not None:
        return Z, A, t1[:, None]
    t2 = latent_times(Z @ CAUSE2_LOADINGS, rng)
    cols = [t1, t2]
    if cfg.censoring_scale > 0 and not randomized:
        cols.append(latent_times(Z @ CENSOR_LOADINGS + math.log(cfg.censoring_scale), rng))
    return Z, A, np.column_stack(cols)


def generate_dataset(cfg: ScenarioConfig, n: int, rng) -> Dataset:
    """Draw one dataset, regenerating until every cause has enough events.

    Parameters
    ----------
    cfg : ScenarioConfig
    n : int
    rng : numpy.random.Generator

    Raises
    ------
    NumericalError
        No acceptable dataset within ``cfg.max_attempts`` draws.
    """
    if n < 2:
        raise DomainError("n must be at least 2")
    for _ in range(cfg.max_attempts):
        Z, A, T = _draw_once(cfg, n, rng)
        if cfg.type2 is not None:
            ds = apply_type2_censoring(T[:, 0], cfg.type2, rng, treated=A, covariates=Z)
        else:
            j = T.argmin(axis=1)
            time = T[np.arange(n), j]
            # columns are cause 1, cause 2, censoring
            cause = np.where(j == 2, 0, j + 1)
            ds = Dataset(time, cause, A, Z, num_causes=2, covariate_names=COVARIATE_NAMES)
        counts = [ds.event_count(k) for k in range(1, ds.num_causes + 1)]
        if min(counts) >= cfg.min_events_per_cause:
            return ds
    raise NumericalError(
        f"no dataset with {cfg.min_events_per_cause} events per cause after "
        f"{cfg.max_attempts} attempts (n={n})")


def apply_type2_censoring(latent_event_times, settings: Type2Config, rng,
                          treated=None, covariates=None) -> Dataset:
    """Staggered entry followed by stopping at the r-th calendar event.

    Entry times are uniform on ``[0, entry_horizon]``; the study stops at the
    calendar time of event number ``r`` and everyone without an event by then
    is censored at ``stop - entry`` (at least 0).
    """
    t = np.asarray(latent_event_times, dtype=float)
    n = t.size
    r = settings.events_for(n)
    if not 1 <= r <= n:
        raise DomainError(f"target event count {r} must lie in 1..{n}")
    entry = rng.uniform(0.0, settings.entry_horizon, size=n)
    calendar = entry + t
    stop = np.partition(calendar, r - 1)[r - 1]
    event = calendar <= stop
    time = np.where(event, t, np.maximum(stop - entry, 0.0))
    treated = np.zeros(n) if treated is None else treated
    covariates = np.zeros((n, 0)) if covariates is None else covariates
    names = COVARIATE_NAMES if np.shape(covariates)[1] == 12 else None
    return Dataset(time, event.astype(int), treated, covariates, num_causes=1,
                   covariate_names=names)


# -- closed-form calibration -------------------------------------------------

def _calibration_sample(sd, size=200_000, seed=20240101):
    return draw_covariates(size, sd, stream(seed, "calibration"))


def cause_proportions(cfg: ScenarioConfig, t=None, z_sample=None):
    """Population probabilities of (cause 1, cause 2, censored), by time ``t``.

    Exact given covariates; the covariate expectation uses a fixed sample.
    ``t=None`` gives the proportions over unlimited follow-up.
    """
    Z = _calibration_sample(cfg.normal_covariate_sd) if z_sample is None else z_sample
    pi = expit(cfg.alpha_0 + Z @ TREATMENT_LOADINGS)
    out = np.zeros(3)
    for a, pa in ((1.0, pi), (0.0, 1.0 - pi)):
        h = [np.exp(cfg.beta_1A * a + Z @ CAUSE1_LOADINGS), np.exp(Z @ CAUSE2_LOADINGS),
             cfg.censoring_scale * np.exp(Z @ CENSOR_LOADINGS)]
        H = h[0] + h[1] + h[2]
        reach = 1.0 if t is None else -np.expm1(-HAZARD_SCALE * t * t * H)
        for d in range(3):
            out[d] += np.mean(pa * h[d] / H * reach)
    return out


def treatment_rate(alpha_0, sd=1.0, z_sample=None):
    Z = _calibration_sample(sd) if z_sample is None else z_sample
    return float(np.mean(expit(alpha_0 + Z @ TREATMENT_LOADINGS)))


def calibrate_censoring_scale(target, cfg: ScenarioConfig | None = None):
    """Censoring scale giving overall censored fraction ``target``."""
    cfg = cfg or ScenarioConfig()
    Z = _calibration_sample(cfg.normal_covariate_sd)

    def f(log_s):
        return cause_proportions(replace(cfg, censoring_scale=math.exp(log_s)), None, Z)[2] - target

    return math.exp(brentq(f, -15.0, 15.0, xtol=1e-13))


def calibrate_alpha0(target, sd=1.0):
    """Intercept giving marginal treatment probability ``target``."""
    Z = _calibration_sample(sd)
    return brentq(lambda a: treatment_rate(a, sd, Z) - target, -20.0, 20.0, xtol=1e-13)


def analytic_true_ate(cfg: ScenarioConfig, times, z_sample=None):
    """Randomised-treatment ATE on cause-1 incidence from the closed form.

    ``F1(t | a, z) = h1 / (h1 + h2) * (1 - exp(-0.01 t^2 (h1 + h2)))`` without
    censoring; averaged over a fixed covariate sample.
    """
    Z = _calibration_sample(cfg.normal_covariate_sd) if z_sample is None else z_sample
    t = np.asarray(times, dtype=float)
    h2 = 0.0 if cfg.type2 is not None else np.exp(Z @ CAUSE2_LOADINGS)
    out = np.zeros(t.shape)
    for a, sign in ((1.0, 1.0), (0.0, -1.0)):
        h1 = np.exp(cfg.beta_1A * a + Z @ CAUSE1_LOADINGS)
        H = h1 + h2
        F = (h1 / H)[:, None] * -np.expm1(-HAZARD_SCALE * np.outer(H, t * t))
        out += sign * F.mean(axis=0)
    return out


# -- true-ATE oracle -----------------------------------------------------------

@dataclass
class TrueATE:
    """Piecewise-linear true ATE on a fine grid."""

    times: np.ndarray
    values: np.ndarray
    key: str = ""
    meta: dict = field(default_factory=dict)

    def __call__(self, t):
        return np.interp(t, self.times, self.values)


_TRUE_ATE_CACHE: dict = {}


def _empirical_arm_difference(cfg, n_large, rng, grid_pts):
    Z, A, T = _draw_once(cfg, n_large, rng, randomized=True)
    j = T.argmin(axis=1)
    t = T[np.arange(n_large), j]
    out = np.zeros(grid_pts.size)
    for a, sign in ((1.0, 1.0), (0.0, -1.0)):
        arm = A == a
        m = int(arm.sum())
        if m == 0:
            continue
        t1 = np.sort(t[arm & (j == 0)])
        out += sign * np.searchsorted(t1, grid_pts, side="right") / m
    return out


def true_ate_oracle(cfg: ScenarioConfig, grid, n_large=100_000, reps=1000, seed=0,
                    workers=1, cache_dir=None) -> TrueATE:
    """Monte Carlo true ATE with randomised treatment and no censoring.

    Each repetition draws ``n_large`` subjects with ``A ~ Bernoulli(1/2)``
    independent of the covariates and no censoring, and takes the difference
    of the arm-wise empirical cause-1 cumulative incidences on ``grid``. The
    result is the mean over repetitions; it is cached in memory (and in
    ``cache_dir`` when given) under a hash of the scenario and settings.
    """
    if n_large < 1000:
        raise DomainError("n_large must be at least 1000")
    if reps < 1:
        raise DomainError("reps must be at least 1")
    pts = np.asarray(getattr(grid, "points", grid), dtype=float)
    key_doc = {"scenario": cfg.to_dict(), "grid": [float(x) for x in pts],
               "n_large": int(n_large), "reps": int(reps), "seed": int(seed)}
    key = hashlib.sha256(json.dumps(key_doc, sort_keys=True, default=repr)
                         .encode("utf-8")).hexdigest()
    if key in _TRUE_ATE_CACHE:
        return _TRUE_ATE_CACHE[key]
    path = None
    if cache_dir is not None:
        import os
        os.makedirs(cache_dir, exist_ok=True)
        path = os.path.join(cache_dir, f"true_ate_{key[:24]}.npy")
        if os.path.exists(path):
            res = TrueATE(pts.copy(), np.load(path), key, key_doc)
            _TRUE_ATE_CACHE[key] = res
            return res

    from .parallel import run_indexed
    parts = run_indexed(_oracle_rep, range(reps), workers,
                        cfg=cfg, n_large=n_large, seed=seed, pts=pts)
    total = np.zeros(pts.size)
    for p in parts:  # fixed-order reduction
        total += p
    res = TrueATE(pts.copy(), total / reps, key, key_doc)
    if path is not None:
        np.save(path, res.values)
    _TRUE_ATE_CACHE[key] = res
    return res


def _oracle_rep(r, cfg, n_large, seed, pts):
    return _empirical_arm_difference(cfg, n_large, stream(seed, "true-ate", r), pts)


def fine_grid(t_max, step=0.01):
    return np.round(np.arange(0.0, t_max + step / 2, step), 10)
