"""Sufficient dimension reduction via sliced inverse moments.

The package estimates the central dimension reduction subspace of a
regression from the first two inverse moments, tests its dimension with
weighted chi-squared marginal tests, and selects the moment-mixing weight
from data. Scikit-learn style estimators live alongside the functional
building blocks; a CLI (``simr``) covers fitting, testing, selection, and
simulation studies.
"""

from .candidates import (
    CandidateKind,
    CandidateMatrix,
    CdrsEstimate,
    estimate_cdrs,
    mzz_matrix,
    phd_matrix,
    save_matrix,
    simr_matrix,
    sir_matrix,
)
from .data import (
    Dataset,
    SliceAssignment,
    SliceMoments,
    StandardizedData,
    intraslice_moments,
    load_dataset_csv,
    slice_by_response,
    standardize,
)
from .estimators import (
    PrincipalHessianDirections,
    SlicedAverageVariance,
    SlicedInverseMomentRegression,
    SlicedInverseRegression,
)
from .inference import (
    DimensionTestResult,
    InferenceWorkspace,
    UhatDecomposition,
    WeightedChisqLaw,
    build_uhat,
    dimension_test_sequence,
    estimate_delta,
    estimate_delta0,
    estimate_w,
    lambda_statistic,
    montecarlo_pvalue,
    satterthwaite_pvalue,
    test_dimension_sequence,
)
from .selection import (
    DEFAULT_ALPHA_GRID,
    AlphaSelectionReport,
    DistanceMetric,
    SubspaceDistance,
    select_alpha_bootstrap,
    select_alpha_pvalue,
    subspace_distance,
)
from .simulation import (
    PowerTable,
    SimModel,
    StudyConfig,
    generate_model_a,
    generate_null_model,
    mc_weighted_chisq_quantile,
    model_a,
    null_model,
    run_power_study,
    sir_dimension_test_sequence,
)

__version__ = "0.1.0"

__all__ = [
    "AlphaSelectionReport",
    "CandidateKind",
    "CandidateMatrix",
    "CdrsEstimate",
    "DEFAULT_ALPHA_GRID",
    "Dataset",
    "DimensionTestResult",
    "DistanceMetric",
    "InferenceWorkspace",
    "PowerTable",
    "PrincipalHessianDirections",
    "SimModel",
    "SliceAssignment",
    "SliceMoments",
    "SlicedAverageVariance",
    "SlicedInverseMomentRegression",
    "SlicedInverseRegression",
    "StandardizedData",
    "StudyConfig",
    "SubspaceDistance",
    "UhatDecomposition",
    "WeightedChisqLaw",
    "build_uhat",
    "dimension_test_sequence",
    "estimate_cdrs",
    "estimate_delta",
    "estimate_delta0",
    "estimate_w",
    "generate_model_a",
    "generate_null_model",
    "intraslice_moments",
    "lambda_statistic",
    "load_dataset_csv",
    "mc_weighted_chisq_quantile",
    "model_a",
    "montecarlo_pvalue",
    "mzz_matrix",
    "null_model",
    "phd_matrix",
    "run_power_study",
    "satterthwaite_pvalue",
    "save_matrix",
    "select_alpha_bootstrap",
    "select_alpha_pvalue",
    "simr_matrix",
    "sir_dimension_test_sequence",
    "sir_matrix",
    "slice_by_response",
    "standardize",
    "subspace_distance",
    "test_dimension_sequence",
]
