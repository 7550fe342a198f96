"""Retinal hemorrhage detection: enhancement, seeding, SWAT segmentation, features and a linear SVM."""

from ._core import (
    FundusError,
    adaptive_thresholds,
    analyze,
    config_keys,
    conventional_feature_names,
    default_config,
    feature_dim,
    make_synthetic,
    matched_filter,
    multilevel_otsu,
    preprocess,
    sensitivity,
    specificity,
    validate_features,
    write_synthetic_dataset,
)

__all__ = [
    "FundusError",
    "adaptive_thresholds",
    "analyze",
    "config_keys",
    "conventional_feature_names",
    "default_config",
    "feature_dim",
    "make_synthetic",
    "matched_filter",
    "multilevel_otsu",
    "preprocess",
    "sensitivity",
    "specificity",
    "validate_features",
    "write_synthetic_dataset",
]
