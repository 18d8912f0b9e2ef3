import numpy as np
import pytest

from competing_ate.cif import TimeGrid, default_grid, g_formula_ate
from competing_ate.cox import SolverOptions, fit_cause_specific_models
from competing_ate.linearization import linearize

from conftest import toy_with_events

TIGHT = SolverOptions(tol=1e-11, polish=True)


def weight_derivative(ds, grid, i, h=1e-6):
    """Central difference of the ATE in the case weight of subject ``i``."""
    out = []
    for s in (1, -1):
        w = np.ones(ds.n)
        w[i] += s * h
        fits = fit_cause_specific_models(ds, weights=w, options=TIGHT)
        out.append(g_formula_ate(fits, ds, grid, weights=w).values)
    return (out[0] - out[1]) / (2 * h)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_matches_weight_finite_differences(seed):
    ds = toy_with_events(40, seed)
    fits = fit_cause_specific_models(ds, options=TIGHT)
    grid = TimeGrid(np.quantile(ds.event_times(1), [0.2, 0.5, 0.8]))
    lin = linearize(fits, ds, grid)
    total = lin.event + lin.compensator + lin.averaging
    for i in (0, 7, 19, 33):
        np.testing.assert_allclose(total[i], weight_derivative(ds, grid, i), rtol=1e-5,
                                   atol=1e-8)


def test_influence_sums_to_zero(small_ds):
    fits = fit_cause_specific_models(small_ds, options=TIGHT)
    lin = linearize(fits, small_ds, default_grid(small_ds))
    IF = lin.influence()
    assert np.max(np.abs(IF.sum(axis=0))) < 1e-7 * small_ds.n
    np.testing.assert_allclose(lin.averaging.sum(axis=0), 0.0, atol=1e-12)


def test_estimate_matches_g_formula(small_ds):
    fits = fit_cause_specific_models(small_ds)
    grid = default_grid(small_ds)
    lin = linearize(fits, small_ds, grid)
    np.testing.assert_allclose(lin.estimate.values, g_formula_ate(fits, small_ds, grid).values,
                               atol=1e-14)


def test_event_part_zero_for_censored(small_ds):
    fits = fit_cause_specific_models(small_ds)
    lin = linearize(fits, small_ds, default_grid(small_ds))
    censored = small_ds.cause == 0
    np.testing.assert_array_equal(lin.event[censored], 0.0)
    np.testing.assert_array_equal(lin.wild_contributions()[censored], 0.0)

