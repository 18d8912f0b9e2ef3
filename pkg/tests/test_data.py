import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from competing_ate.data import (Dataset, SubjectRecord, jitter_ties, parse_dataset,
                                require_no_ties, risk_set_size, risk_set_sizes,
                                serialize_dataset, tied_event_times, validate)
from competing_ate.errors import (DomainError, ParseError, SchemaError,
                                  TiedEventTimesError)

from conftest import HODGKIN_SCHEMA, hodgkin_like_csv, toy_competing


def test_parse_two_rows():
    ds = parse_dataset(b"time,cause,treated,z\n1,1,0,0.5\n2,0,1,-1\n")
    assert ds.n == 2 and ds.num_causes == 1 and ds.p == 1
    np.testing.assert_array_equal(ds.time, [1.0, 2.0])
    np.testing.assert_array_equal(ds.covariates[:, 0], [0.5, -1.0])
    assert ds.covariate_names == ("z",)


def test_parse_hodgkin_schema_arm_counts():
    ds = parse_dataset(hodgkin_like_csv(), HODGKIN_SCHEMA)
    assert ds.n == 865
    assert int((ds.treated == 0).sum()) == 616
    assert int((ds.treated == 1).sum()) == 249
    assert "mediastinum[small]" in ds.covariate_names
    assert "mediastinum[large]" in ds.covariate_names
    assert "mediastinum[none]" not in ds.covariate_names


def test_cause_above_declared_k():
    with pytest.raises(DomainError):
        parse_dataset(b"time,cause,treated\n1,3,0\n2,0,1\n", num_causes=2)


def test_missing_column_named():
    with pytest.raises(SchemaError, match="cause"):
        parse_dataset(b"time,treated,z\n1,0,1\n2,1,0\n")


def test_non_numeric_cell_row_index():
    with pytest.raises(ParseError) as info:
        parse_dataset(b"time,cause,treated,z\n1,1,0,0.5\n2,0,1,abc\n")
    assert info.value.row == 2


def test_explicit_weight_column_missing():
    with pytest.raises(SchemaError):
        parse_dataset(b"time,cause,treated\n1,1,0\n2,0,1\n", {"weight": "w"})


def test_weight_column_read():
    ds = parse_dataset(b"time,cause,treated,weight,z\n1,1,0,2.5,0\n2,0,1,1,1\n")
    np.testing.assert_array_equal(ds.weight, [2.5, 1.0])
    assert ds.p == 1


def test_unknown_categorical_level():
    schema = {"categorical": {"g": {"levels": ["a", "b"], "reference": "a"}}}
    with pytest.raises(ParseError):
        parse_dataset(b"time,cause,treated,g\n1,1,0,a\n2,0,1,c\n", schema)


def test_dataset_invariants():
    with pytest.raises(DomainError):
        Dataset([1.0], [1], [0], [[0.0]])
    with pytest.raises(DomainError):
        Dataset([1.0, -1.0], [1, 0], [0, 1], [[0.0], [1.0]])
    with pytest.raises(DomainError):
        Dataset([1.0, 2.0], [1, 0], [0, 2], [[0.0], [1.0]])
    with pytest.raises(DomainError):
        Dataset([1.0, 2.0], [1, 0], [0, 1], [[0.0], [1.0]], weight=[1.0, 0.0])


def test_arrays_read_only():
    ds = toy_competing(10, 0)
    with pytest.raises(ValueError):
        ds.time[0] = 5.0


def test_records_round_trip():
    ds = toy_competing(12, 3)
    again = Dataset.from_records(ds.records, ds.num_causes, ds.covariate_names)
    np.testing.assert_array_equal(again.time, ds.time)
    np.testing.assert_array_equal(again.covariates, ds.covariates)
    assert isinstance(ds.records[0], SubjectRecord)


def test_validate_ties_and_threshold():
    ds = Dataset([3.0, 3.0, 1.0, 2.0], [1, 1, 2, 0], [0, 1, 0, 1], np.zeros((4, 1)))
    rep = validate(ds, 1)
    assert rep.tie_violations == [3.0]
    assert rep.events_per_cause == [2, 1]
    assert rep.min_event_threshold_met


def test_validate_threshold_not_met():
    # 12 cause-1 and 9 cause-2 events
    t = np.arange(1, 26, dtype=float)
    cause = np.r_[np.ones(12, int), np.full(9, 2), np.zeros(4, int)]
    rep = validate(Dataset(t, cause, np.zeros(25), np.zeros((25, 0))), 10)
    assert not rep.min_event_threshold_met
    assert sum(rep.events_per_cause) == 21


def test_validate_clean():
    t = np.arange(1, 31, dtype=float)
    cause = np.r_[np.ones(12, int), np.full(12, 2), np.zeros(6, int)]
    rep = validate(Dataset(t, cause, np.zeros(30), np.zeros((30, 0))), 10)
    assert rep.tie_violations == [] and rep.min_event_threshold_met and rep.ok


def test_censored_ties_are_not_violations():
    ds = Dataset([2.0, 2.0, 1.0], [0, 1, 1], [0, 1, 0], np.zeros((3, 0)))
    assert tied_event_times(ds) == []


def test_require_no_ties_and_jitter():
    ds = Dataset([1.0, 1.0, 2.0, 4.0], [1, 2, 0, 1], [0, 1, 0, 1], np.zeros((4, 0)))
    with pytest.raises(TiedEventTimesError):
        require_no_ties(ds)
    j1 = jitter_ties(ds, seed=5)
    j2 = jitter_ties(ds, seed=5)
    np.testing.assert_array_equal(j1.time, j2.time)
    require_no_ties(j1)
    # eps is half the smallest gap between distinct times (here 0.5)
    moved = j1.time - ds.time
    assert np.all((moved[:2] > 0) & (moved[:2] < 0.5))
    np.testing.assert_array_equal(moved[2:], 0.0)


def test_risk_set_size_examples():
    ds = Dataset([1.0, 2.0, 3.0], [1, 0, 1], [0, 1, 0], np.zeros((3, 0)))
    assert risk_set_size(ds, 0.0) == 3
    assert risk_set_size(ds, 2.0) == 2
    assert risk_set_size(ds, 3.5) == 0
    with pytest.raises(DomainError):
        risk_set_size(ds, -1.0)


def test_partition_of_subjects():
    ds = toy_competing(60, 11, K=3, beta_a=(0.1, 0.2, 0.3),
                       beta_z=[np.zeros(2)] * 3)
    grid = np.unique(ds.time)
    for t in grid:
        events = sum(int(np.sum((ds.cause == k) & (ds.time <= t))) for k in (1, 2, 3))
        cens = int(np.sum((ds.cause == 0) & (ds.time <= t)))
        after = int(np.sum(ds.time > t))
        assert events + cens + after == ds.n
    y = risk_set_sizes(ds, grid)
    assert np.all(np.diff(y) <= 0) and y[0] == ds.n


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 40), st.integers(0, 10_000))
def test_serialize_round_trip(n, seed):
    ds = toy_competing(n, seed, p=3)
    back = parse_dataset(serialize_dataset(ds), num_causes=ds.num_causes)
    np.testing.assert_array_equal(back.time, ds.time)
    np.testing.assert_array_equal(back.cause, ds.cause)
    np.testing.assert_array_equal(back.treated, ds.treated)
    np.testing.assert_array_equal(back.covariates, ds.covariates)
    assert back.covariate_names == ds.covariate_names


def test_round_trip_with_weights():
    ds = toy_competing(10, 2).with_weights(np.linspace(0.5, 2.0, 10))
    back = parse_dataset(serialize_dataset(ds))
    np.testing.assert_array_equal(back.weight, ds.weight)
