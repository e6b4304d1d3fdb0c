"""
Services for the simulator.

This package contains scenario generation, the classifier, OOD scoring,
metrics and the self-training pipelines.
"""

from .synthdata_service import bag_kind, generate_scenario, sample_background
from .classifier_service import (
    Batch,
    ce_loss_and_grad,
    ema_update,
    forward,
    init_params,
    predict,
    sgd_step,
    softmax,
)
from .score_functions import (
    energy_score,
    entropy_score,
    euclidean_score,
    iac_score,
    mahalanobis_score,
    msp_score,
)
from .scorer_registry import get_scorer, get_scorer_registry
from .ood_score_service import (
    calibrate_threshold,
    fit_class_stats,
    ood_filter,
    resolve_delta_ood,
    score_batch,
)
from .metrics_service import auroc, fpr_at_tnr, ood_report, pseudo_stats, test_accuracy
from .training_service import pseudo_label, ssod_step, train_offline_ood, train_supervised
from .pipeline_service import evaluate_score_kinds, probe_ood_auroc, run_pipeline

__all__ = [
    # Scenario
    "bag_kind",
    "generate_scenario",
    "sample_background",

    # Classifier
    "Batch",
    "ce_loss_and_grad",
    "ema_update",
    "forward",
    "init_params",
    "predict",
    "sgd_step",
    "softmax",

    # Scoring
    "calibrate_threshold",
    "energy_score",
    "entropy_score",
    "euclidean_score",
    "fit_class_stats",
    "get_scorer",
    "get_scorer_registry",
    "iac_score",
    "mahalanobis_score",
    "msp_score",
    "ood_filter",
    "resolve_delta_ood",
    "score_batch",

    # Metrics
    "auroc",
    "fpr_at_tnr",
    "ood_report",
    "pseudo_stats",
    "test_accuracy",

    # Self-training
    "evaluate_score_kinds",
    "probe_ood_auroc",
    "pseudo_label",
    "run_pipeline",
    "ssod_step",
    "train_offline_ood",
    "train_supervised",
]
