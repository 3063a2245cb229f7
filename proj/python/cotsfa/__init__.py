"""Python access to the cotsfa core: curves, metrics, alignment loss and the CLI."""

from ._core import (
    IoError,
    SamplingError,
    ValidationError,
    alignment_loss,
    anomaly_curve,
    check_constraints,
    compute_metrics,
    delta_improvement,
    early_stopper,
    gen_synthetic,
    paired_t_test,
    run_cli,
    sample_curve_params,
)

__all__ = [
    "IoError",
    "SamplingError",
    "ValidationError",
    "alignment_loss",
    "anomaly_curve",
    "check_constraints",
    "compute_metrics",
    "delta_improvement",
    "early_stopper",
    "gen_synthetic",
    "paired_t_test",
    "run_cli",
    "sample_curve_params",
]
