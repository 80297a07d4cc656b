"""Post-hoc OOD detection on frozen feature banks (C++ core)."""

from ._core import (
    IoError,
    MetricModel,
    ValidationError,
    auroc,
    class_counts,
    class_covariance,
    energy,
    fpr_at_tpr,
    les,
    load_bank,
    msp,
    pooled_covariance,
    project_sphere,
    projectors,
    run_cli,
    save_bank,
    spectrum,
)

__all__ = [
    "IoError",
    "MetricModel",
    "ValidationError",
    "auroc",
    "class_counts",
    "class_covariance",
    "energy",
    "fpr_at_tpr",
    "les",
    "load_bank",
    "msp",
    "pooled_covariance",
    "project_sphere",
    "projectors",
    "run_cli",
    "save_bank",
    "spectrum",
]
