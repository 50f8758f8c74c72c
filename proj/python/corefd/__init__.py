"""Consistency-regularized face forgery detection on a synthetic tamper dataset."""

from ._corefd import (
    BoundsError,
    ConfigError,
    ContractError,
    DegenerateVectorError,
    Error,
    FormatError,
    MetricUndefinedError,
    Model,
    ShapeError,
    auc,
    augment,
    consistency,
    gen_dataset,
    init_model,
    load_model,
    roc_points,
    run_cli,
    tdr_at_fdr,
)

__all__ = [
    "BoundsError",
    "ConfigError",
    "ContractError",
    "DegenerateVectorError",
    "Error",
    "FormatError",
    "MetricUndefinedError",
    "Model",
    "ShapeError",
    "auc",
    "augment",
    "consistency",
    "gen_dataset",
    "init_model",
    "load_model",
    "roc_points",
    "run_cli",
    "tdr_at_fdr",
]
