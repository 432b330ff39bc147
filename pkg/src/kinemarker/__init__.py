"""Movement biomarkers from 3D skeleton joint time series."""

__version__ = "0.1.0"

from .biomarker import aggregate_histogram, feature_importance, pca_fit, standardize, top_k_features
from .ingest import (
    CanonicalSeries,
    JointId,
    RawRecording,
    SkeletonConvention,
    map_to_canonical,
    parse_recording,
    resample_uniform,
    validate_series,
)
from .kinematics import (
    AngleDefinition,
    FeatureMatrix,
    WindowSpec,
    assemble_feature_matrix,
    compute_angle_series,
    joint_angle,
    window_statistics,
)
from .stats import (
    apply_calibration,
    bland_altman,
    fit_calibration,
    paired_t_test,
    pearson_p,
    pearson_r,
    t_cdf,
    t_critical,
)
from .temporal import ScalarSeries, angular_impulse, second_derivative, smoothness, trapezoid_integral

__all__ = [
    "AngleDefinition", "CanonicalSeries", "FeatureMatrix", "JointId", "RawRecording",
    "ScalarSeries", "SkeletonConvention", "WindowSpec", "aggregate_histogram",
    "angular_impulse", "apply_calibration", "assemble_feature_matrix", "bland_altman",
    "compute_angle_series", "feature_importance", "fit_calibration", "joint_angle",
    "map_to_canonical", "paired_t_test", "parse_recording", "pca_fit", "pearson_p",
    "pearson_r", "resample_uniform", "second_derivative", "smoothness", "standardize",
    "t_cdf", "t_critical", "top_k_features", "trapezoid_integral", "validate_series",
    "window_statistics",
]
