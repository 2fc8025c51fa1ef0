"""Piecewise polynomial recovery with overparameterized sparsity models."""

from .bgapn import BGAPNConfig, bgapn, bgapn_continuity, solve_cosupport_ls
from .operators import (AnalysisOperator, InvalidArgument, MeasurementOperator, Parameterization,
                        build_planar_parameterization, build_poly_parameterization,
                        dense_measurement, dif_operator, gaussian_measurement,
                        heaviside_dictionary, identity_measurement)
from .output import RecoveryOutput
from .projection import (PiecewisePolyFit, SegmentErrorTable, continuous_refit, fit_segments,
                         optimal_projection, segment_error_table, segment_fit)
from .sscosamp import SSCoSaMPConfig, constrained_ls, sscosamp

__all__ = [
    "AnalysisOperator", "BGAPNConfig", "InvalidArgument", "MeasurementOperator",
    "Parameterization", "PiecewisePolyFit", "RecoveryOutput", "SSCoSaMPConfig",
    "SegmentErrorTable", "bgapn", "bgapn_continuity", "build_planar_parameterization",
    "build_poly_parameterization", "constrained_ls", "continuous_refit", "dense_measurement",
    "dif_operator", "fit_segments", "gaussian_measurement", "heaviside_dictionary",
    "identity_measurement", "optimal_projection", "segment_error_table", "segment_fit",
    "solve_cosupport_ls", "sscosamp",
]
