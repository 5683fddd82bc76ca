"""
Deviation metrics: latent and feature-space Mahalanobis distances, per-feature
z-scores, outlier calls and the significance-ratio evaluation.
"""

from .stats import (
    StatsSource,
    CohortStats,
    FeatureNormStats,
    fit_cohort_stats,
    fit_feature_norm_stats,
    d_ml,
    d_mf,
    d_uf,
)
from .outliers import (
    OutlierCalls,
    outlier_test_latent,
    outlier_test_feature,
    chi2_flag_boundary,
    significance_ratio,
    pearson_corr,
)
from .report import DeviationReport, Metric, REPORT_COLUMNS, load_report
from .evaluation import (
    AVERAGE_UNIMODAL,
    evaluate_report,
    significance_table,
    pivot_significance,
    covariate_correlations,
    plot_data,
)

__all__ = [
    "StatsSource",
    "CohortStats",
    "FeatureNormStats",
    "fit_cohort_stats",
    "fit_feature_norm_stats",
    "d_ml",
    "d_mf",
    "d_uf",
    "OutlierCalls",
    "outlier_test_latent",
    "outlier_test_feature",
    "chi2_flag_boundary",
    "significance_ratio",
    "pearson_corr",
    "DeviationReport",
    "Metric",
    "REPORT_COLUMNS",
    "load_report",
    "AVERAGE_UNIMODAL",
    "evaluate_report",
    "significance_table",
    "pivot_significance",
    "covariate_correlations",
    "plot_data",
]
