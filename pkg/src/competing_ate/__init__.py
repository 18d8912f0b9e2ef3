"""g-formula average treatment effects for competing-risks data.

Cause-specific Cox models feed a standardized (g-formula) contrast of
cause-1 cumulative incidences. Confidence intervals and simultaneous bands
come from Efron's bootstrap, the influence function or the wild bootstrap.
"""

from .cif import ATECurve, TimeGrid, cumulative_incidence, default_grid, g_formula_ate
from .cox import (CoxFit, CoxModel, SolverOptions, StepCumHazard, breslow_baseline,
                  cumulative_hazard_at, fit_cause_specific, fit_cause_specific_models,
                  partial_loglik)
from .data import (Dataset, SubjectRecord, ValidationReport, parse_dataset, risk_set_size,
                   serialize_dataset, validate)
from .errors import (CompetingATEError, DataError, DomainError, NonConvergenceError,
                     NumericalError, ParseError, RefitError, SchemaError,
                     SingularInformationError, TiedEventTimesError)
from .resampling import (ConfidenceRegion, InfluenceMatrix, MultiplierScheme,
                         ResampleEnsemble, efron_ensemble, empirical_quantile,
                         gen_multipliers, influence_matrix, pointwise_ci, simultaneous_band,
                         wild_ensemble)

__version__ = "0.1.0"

__all__ = [
    "ATECurve", "TimeGrid", "cumulative_incidence", "default_grid", "g_formula_ate",
    "CoxFit", "CoxModel", "SolverOptions", "StepCumHazard", "breslow_baseline",
    "cumulative_hazard_at", "fit_cause_specific", "fit_cause_specific_models",
    "partial_loglik", "Dataset", "SubjectRecord", "ValidationReport", "parse_dataset",
    "risk_set_size", "serialize_dataset", "validate", "CompetingATEError", "DataError",
    "DomainError", "NonConvergenceError", "NumericalError", "ParseError", "RefitError",
    "SchemaError", "SingularInformationError", "TiedEventTimesError", "ConfidenceRegion",
    "InfluenceMatrix", "MultiplierScheme", "ResampleEnsemble", "efron_ensemble",
    "empirical_quantile", "gen_multipliers", "influence_matrix", "pointwise_ci",
    "simultaneous_band", "wild_ensemble",
]
