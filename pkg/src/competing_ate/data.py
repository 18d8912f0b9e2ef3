"""Right-censored competing-risks data: records, validation and risk sets.

A :class:`Dataset` stores one row per subject as read-only numpy arrays
together with a time-sorted index that every estimator reuses.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import DomainError, ParseError, SchemaError, TiedEventTimesError
from .rng import stream

DEFAULT_SCHEMA = {"time": "time", "cause": "cause", "treated": "treated", "weight": "weight"}


@dataclass(frozen=True)
class SubjectRecord:
    time: float
    cause: int
    treated: int
    covariates: tuple
    weight: float = 1.0


@dataclass(frozen=True)
class ValidationReport:
    tie_violations: list
    events_per_cause: list
    min_event_threshold_met: bool
    warnings: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.tie_violations and self.min_event_threshold_met


def _readonly(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


class Dataset:
    """Immutable subject-level competing-risks data.

    Parameters
    ----------
    time : array_like, shape (n,)
        Observed times ``min(T, C)``.
    cause : array_like of int, shape (n,)
        Failure type; 0 marks a censored observation.
    treated : array_like of {0, 1}, shape (n,)
    covariates : array_like, shape (n, p)
    weight : array_like, optional
        Positive case weights, default 1.
    num_causes : int, optional
        Number of competing causes ``K``. Inferred as the largest cause code
        when omitted.
    covariate_names : sequence of str, optional
    """

    def __init__(self, time, cause, treated, covariates, weight=None,
                 num_causes=None, covariate_names=None):
        time = np.asarray(time, dtype=float)
        n = time.shape[0]
        if time.ndim != 1:
            raise DomainError("time must be one-dimensional")
        if n < 2:
            raise DomainError(f"a dataset needs at least 2 subjects, got {n}")
        cause_f = np.asarray(cause, dtype=float)
        if np.any(cause_f != np.round(cause_f)):
            raise DomainError("cause codes must be integers")
        cause = cause_f.astype(np.int64)
        treated_f = np.asarray(treated, dtype=float)
        if not np.all((treated_f == 0) | (treated_f == 1)):
            raise DomainError("treatment indicator must be 0 or 1")
        covariates = np.asarray(covariates, dtype=float)
        if covariates.ndim == 1 and covariates.size == 0:
            covariates = np.zeros((n, 0))
        elif covariates.ndim == 1:
            covariates = covariates.reshape(n, -1)
        if covariates.shape[0] != n:
            raise DomainError("covariate rows must match the number of subjects")
        weight = np.ones(n) if weight is None else np.asarray(weight, dtype=float)

        if cause.shape != (n,) or treated_f.shape != (n,) or weight.shape != (n,):
            raise DomainError("time, cause, treated and weight must have equal length")
        if not np.all(np.isfinite(time)) or np.any(time < 0):
            raise DomainError("observed times must be finite and nonnegative")
        if not np.all(np.isfinite(covariates)):
            raise DomainError("covariates must be finite")
        if not np.all(np.isfinite(weight)) or np.any(weight <= 0):
            raise DomainError("case weights must be positive")
        if np.any(cause < 0):
            raise DomainError("cause codes must be nonnegative")
        max_cause = int(cause.max())
        if num_causes is None:
            num_causes = max(max_cause, 1)
        num_causes = int(num_causes)
        if num_causes < 1:
            raise DomainError("num_causes must be positive")
        if max_cause > num_causes:
            raise DomainError(
                f"cause code {max_cause} outside {{0, ..., {num_causes}}}")
        p = covariates.shape[1]
        if covariate_names is None:
            covariate_names = [f"z{j + 1}" for j in range(p)]
        covariate_names = [str(c) for c in covariate_names]
        if len(covariate_names) != p:
            raise DomainError("covariate_names length must equal the number of covariates")

        self.time = _readonly(time, float)
        self.cause = _readonly(cause, np.int64)
        self.treated = _readonly(treated_f, float)
        self.covariates = _readonly(covariates, float)
        self.weight = _readonly(weight, float)
        self.num_causes = num_causes
        self.covariate_names = tuple(covariate_names)
        # event-time index: stable ascending order and the sorted times
        self.order = _readonly(np.argsort(self.time, kind="stable"), np.int64)
        self.sorted_time = _readonly(self.time[self.order], float)

    @classmethod
    def from_records(cls, records: Sequence[SubjectRecord], num_causes=None,
                     covariate_names=None):
        records = list(records)
        if not records:
            raise DomainError("no records")
        p = len(records[0].covariates)
        if any(len(r.covariates) != p for r in records):
            raise DomainError("all records must have the same number of covariates")
        return cls(
            time=[r.time for r in records],
            cause=[r.cause for r in records],
            treated=[r.treated for r in records],
            covariates=np.array([r.covariates for r in records], dtype=float).reshape(len(records), p),
            weight=[r.weight for r in records],
            num_causes=num_causes,
            covariate_names=covariate_names,
        )

    @property
    def n(self):
        return self.time.shape[0]

    @property
    def p(self):
        return self.covariates.shape[1]

    @property
    def records(self):
        return tuple(
            SubjectRecord(float(t), int(c), int(a), tuple(float(v) for v in z), float(w))
            for t, c, a, z, w in zip(self.time, self.cause, self.treated,
                                     self.covariates, self.weight)
        )

    def __len__(self):
        return self.n

    def __repr__(self):
        return (f"Dataset(n={self.n}, K={self.num_causes}, "
                f"covariates={list(self.covariate_names)})")

    def column_index(self, name):
        try:
            return self.covariate_names.index(name)
        except ValueError:
            raise SchemaError(f"unknown covariate {name!r}") from None

    def event_count(self, cause):
        return int(np.sum(self.cause == cause))

    def event_times(self, cause=None):
        """Sorted event times of ``cause`` (all causes when None)."""
        mask = self.cause >= 1 if cause is None else self.cause == cause
        return np.sort(self.time[mask])

    def subset(self, index, weight=None):
        """New dataset from rows ``index``, optionally with new case weights."""
        index = np.asarray(index)
        w = self.weight[index] if weight is None else weight
        return Dataset(self.time[index], self.cause[index], self.treated[index],
                       self.covariates[index], w, self.num_causes, self.covariate_names)

    def with_weights(self, weight):
        return Dataset(self.time, self.cause, self.treated, self.covariates, weight,
                       self.num_causes, self.covariate_names)

    def with_times(self, time):
        return Dataset(time, self.cause, self.treated, self.covariates, self.weight,
                       self.num_causes, self.covariate_names)

    def to_dict(self):
        return {
            "time": self.time.tolist(), "cause": self.cause.tolist(),
            "treated": self.treated.astype(int).tolist(),
            "covariates": self.covariates.tolist(), "weight": self.weight.tolist(),
            "num_causes": self.num_causes, "covariate_names": list(self.covariate_names),
        }


def tied_event_times(ds):
    """Event times (cause >= 1) shared by more than one record, sorted."""
    t = ds.event_times()
    dup = t[1:][t[1:] == t[:-1]]
    return sorted(set(dup.tolist()))


def validate(ds: Dataset, min_events_per_cause: int = 10) -> ValidationReport:
    ties = tied_event_times(ds)
    counts = [ds.event_count(k) for k in range(1, ds.num_causes + 1)]
    met = all(c >= min_events_per_cause for c in counts)
    warnings = []
    if ties:
        warnings.append(f"{len(ties)} tied event time(s)")
    for k, c in enumerate(counts, start=1):
        if c < min_events_per_cause:
            warnings.append(f"cause {k} has {c} events (< {min_events_per_cause})")
    return ValidationReport(ties, counts, met, warnings)


def require_no_ties(ds):
    ties = tied_event_times(ds)
    if ties:
        raise TiedEventTimesError(ties)


def jitter_ties(ds, seed):
    """Break event-time ties with uniform noise on (0, eps).

    ``eps`` is half the smallest positive gap between sorted distinct observed
    times, so jittered records never cross a neighbouring distinct time. Only
    records in a tied group of event times are moved.
    """
    ties = tied_event_times(ds)
    if not ties:
        return ds
    distinct = np.unique(ds.time)
    gaps = np.diff(distinct)
    if gaps.size:
        eps = 0.5 * gaps.min()
    else:
        eps = 1e-8 * max(1.0, float(distinct[0]))
    rng = stream(seed, "jitter")
    time = ds.time.copy()
    moved = np.isin(time, ties) & (ds.cause >= 1)
    idx = np.flatnonzero(moved)
    noise = rng.uniform(0.0, eps, size=idx.size)
    # uniform() can return exactly 0; keep the draw strictly inside (0, eps)
    noise = np.where(noise > 0, noise, 0.5 * eps)
    time[idx] += noise
    return ds.with_times(time)


def risk_set_size(ds: Dataset, t: float) -> int:
    """Number of subjects with observed time >= t."""
    if t < 0:
        raise DomainError("t must be nonnegative")
    return int(ds.n - np.searchsorted(ds.sorted_time, t, side="left"))


def risk_set_sizes(ds, times):
    """Vectorised :func:`risk_set_size`."""
    times = np.asarray(times, dtype=float)
    if np.any(times < 0):
        raise DomainError("t must be nonnegative")
    return ds.n - np.searchsorted(ds.sorted_time, times, side="left")


# -- CSV ingestion ---------------------------------------------------------

def _resolve_schema(header, schema):
    user = dict(schema or {})
    schema = dict(DEFAULT_SCHEMA, **user)
    for key in ("time", "cause", "treated"):
        col = schema.get(key)
        if col not in header:
            raise SchemaError(f"missing column {col!r} (schema field {key!r})")
    weight_col = schema.get("weight")
    if "weight" in user and weight_col is not None and weight_col not in header:
        raise SchemaError(f"missing column {weight_col!r} (schema field 'weight')")
    if weight_col not in header:
        weight_col = None
    categorical = dict(schema.get("categorical") or {})
    reserved = {schema["time"], schema["cause"], schema["treated"], weight_col}
    covs = schema.get("covariates")
    if covs is None:
        covs = [h for h in header if h not in reserved]
    for c in covs:
        if c not in header:
            raise SchemaError(f"missing column {c!r} (covariate)")
    for c in categorical:
        if c not in covs:
            raise SchemaError(f"categorical column {c!r} is not a covariate")
    return schema, weight_col, list(covs), categorical


def _number(text, row, col):
    try:
        v = float(text)
    except (TypeError, ValueError):
        raise ParseError(f"row {row}: non-numeric value {text!r} in column {col!r}",
                         row=row) from None
    return v


def parse_dataset(csv_bytes, schema: Mapping | None = None, num_causes=None) -> Dataset:
    """Parse CSV text into a :class:`Dataset`.

    ``schema`` maps the fields ``time``, ``cause``, ``treated`` and optionally
    ``weight`` to column names, may list ``covariates`` explicitly (default:
    all remaining columns in header order) and may declare ``categorical``
    covariates as ``{column: {"levels": [...], "reference": level}}``; these
    are dummy coded against the reference level into columns named
    ``column[level]``. Row numbers in errors count data rows from 1.
    """
    if isinstance(csv_bytes, (bytes, bytearray)):
        text = bytes(csv_bytes).decode("utf-8-sig")
    else:
        text = str(csv_bytes)
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise SchemaError("empty input: a header row is required") from None
    schema, weight_col, covs, categorical = _resolve_schema(header, schema)
    pos = {h: j for j, h in enumerate(header)}

    names = []
    for c in covs:
        if c in categorical:
            spec = categorical[c]
            levels = [str(v) for v in spec["levels"]]
            ref = str(spec.get("reference", levels[0]))
            if ref not in levels:
                raise SchemaError(f"reference level {ref!r} not among levels of {c!r}")
            names.extend(f"{c}[{lv}]" for lv in levels if lv != ref)
        else:
            names.append(c)

    time, cause, treated, weight, rows = [], [], [], [], []
    for r, raw in enumerate(reader, start=1):
        if not raw or all(not x.strip() for x in raw):
            continue
        if len(raw) != len(header):
            raise ParseError(f"row {r}: expected {len(header)} fields, got {len(raw)}", row=r)
        cell = lambda col: raw[pos[col]].strip()  # noqa: E731
        time.append(_number(cell(schema["time"]), r, schema["time"]))
        c = _number(cell(schema["cause"]), r, schema["cause"])
        if c != int(c) or c < 0:
            raise DomainError(f"row {r}: cause code {cell(schema['cause'])!r} is not in {{0, 1, ...}}")
        if num_causes is not None and c > num_causes:
            raise DomainError(f"row {r}: cause code {int(c)} outside {{0, ..., {num_causes}}}")
        cause.append(int(c))
        a = _number(cell(schema["treated"]), r, schema["treated"])
        if a not in (0.0, 1.0):
            raise DomainError(f"row {r}: treatment indicator must be 0 or 1, got {a!r}")
        treated.append(a)
        weight.append(_number(cell(weight_col), r, weight_col) if weight_col else 1.0)
        z = []
        for col in covs:
            if col in categorical:
                spec = categorical[col]
                levels = [str(v) for v in spec["levels"]]
                ref = str(spec.get("reference", levels[0]))
                value = cell(col)
                if value not in levels:
                    raise ParseError(f"row {r}: unknown level {value!r} in column {col!r}", row=r)
                z.extend(1.0 if value == lv else 0.0 for lv in levels if lv != ref)
            else:
                z.append(_number(cell(col), r, col))
        rows.append(z)
    if not time:
        raise ParseError("no data rows", row=0)
    z = np.array(rows, dtype=float).reshape(len(time), len(names))
    return Dataset(time, cause, treated, z, weight, num_causes=num_causes,
                   covariate_names=names)


def fmt(x):
    """Format a float at 17 significant digits (round-trips exactly)."""
    return format(float(x), ".17g")


def serialize_dataset(ds: Dataset, include_weight=None) -> bytes:
    """Write ``ds`` as CSV in the default schema."""
    if include_weight is None:
        include_weight = bool(np.any(ds.weight != 1.0))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = ["time", "cause", "treated", *ds.covariate_names]
    if include_weight:
        header.append("weight")
    w.writerow(header)
    for i in range(ds.n):
        row = [fmt(ds.time[i]), str(int(ds.cause[i])), str(int(ds.treated[i]))]
        row.extend(fmt(v) for v in ds.covariates[i])
        if include_weight:
            row.append(fmt(ds.weight[i]))
        w.writerow(row)
    return buf.getvalue().encode("utf-8")
