"""
Offline OOD scoring: class statistics, batch scoring, threshold calibration and
the OOD filter applied to thresholded pseudo-labels.
"""
from __future__ import annotations

import math
from typing import Literal, Optional, Sequence, Union

import numpy as np
import structlog
from sklearn.covariance import shrunk_covariance

from ..exceptions import NumericalError
from ..models.data_models import Instance
from ..models.network_models import ClassifierParams
from ..models.score_models import (
    ClassStats,
    FeatureSource,
    PseudoLabel,
    ScoreKind,
    ScoringOptions,
)
from .classifier_service import forward
from .scorer_registry import NetworkOutputs, get_scorer

logger = structlog.get_logger(__name__)

BOUNDED_DEFAULT_DELTA = 0.5
SINGULARITY_TOLERANCE = 1e-12


def fit_class_stats(
    features: np.ndarray,
    labels: Sequence[int] | np.ndarray,
    epsilon: float,
    n_classes: Optional[int] = None,
) -> ClassStats:
    """Per-class means and shrinkage-regularised pooled within-class covariance.

    ``S`` is the pooled scatter divided by ``N - K``; the returned covariance is
    ``(1 - eps) * S + eps * trace(S) / p * I``.
    """
    x = np.atleast_2d(np.asarray(features, dtype=np.float64))
    y = np.asarray(labels, dtype=np.int64).reshape(-1)
    if x.shape[0] != y.shape[0]:
        raise ValueError("features and labels differ in length")
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must be in [0, 1], got {epsilon}")
    k = int(y.max()) + 1 if n_classes is None else n_classes
    n = x.shape[0]
    if np.any(y < 0) or np.any(y >= k):
        raise ValueError(f"labels must lie in [0, {k})")
    counts = np.bincount(y, minlength=k)
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        raise ValueError(f"class {int(empty[0])} has no samples")
    if n <= k:
        raise ValueError(f"need more samples than classes (N={n}, K={k})")

    means = np.stack([x[y == c].mean(axis=0) for c in range(k)])
    centered = x - means[y]
    scatter = centered.T @ centered / (n - k)
    cov = np.asarray(shrunk_covariance(scatter, shrinkage=epsilon), dtype=np.float64)
    cov = (cov + cov.T) / 2.0

    eigenvalues = np.linalg.eigvalsh(cov)
    if eigenvalues[0] <= SINGULARITY_TOLERANCE * max(1.0, float(eigenvalues[-1])):
        raise NumericalError(
            f"pooled covariance is singular (smallest eigenvalue {eigenvalues[0]:.3e}, "
            f"shrinkage {epsilon})"
        )
    precision = np.linalg.inv(cov)
    precision = (precision + precision.T) / 2.0
    return ClassStats(means=means, pooled_cov=cov, shrinkage=epsilon, precision=precision)


def _as_matrix(instances: Union[Sequence[Instance], np.ndarray]) -> np.ndarray:
    if isinstance(instances, np.ndarray):
        return np.atleast_2d(instances.astype(np.float64))
    if len(instances) == 0:
        return np.zeros((0, 0))
    return np.stack([item.features for item in instances])


def network_outputs(net: ClassifierParams, features: np.ndarray) -> NetworkOutputs:
    """Raw features, hidden activations and logits of ``net`` for a feature matrix."""
    result = forward(net, features)
    return NetworkOutputs(features=features, hidden=result.hidden, logits=result.logits)


def score_batch(
    kind: ScoreKind,
    instances: Union[Sequence[Instance], np.ndarray],
    ood_net: ClassifierParams,
    stats: Optional[ClassStats] = None,
    options: ScoringOptions = ScoringOptions(),
    k: Optional[int] = None,
) -> np.ndarray:
    """One ID-ness score per instance.

    ``k`` is the number of ID classes; it defaults to ``C - 1`` (a K + 1 OOD
    network). Pass ``k = C`` to score a plain detector head.
    """
    scorer = get_scorer(kind)
    if scorer.needs_stats and stats is None:
        raise ValueError(f"{ScoreKind(kind).value} scores need class statistics")
    k = ood_net.n_outputs - 1 if k is None else k
    if not 1 <= k <= ood_net.n_outputs:
        raise ValueError(f"k={k} incompatible with a {ood_net.n_outputs}-output network")
    features = _as_matrix(instances)
    if features.shape[0] == 0:
        return np.zeros(0)
    outputs = network_outputs(ood_net, features)
    return np.asarray(scorer.score(outputs, k, options, stats), dtype=np.float64).reshape(-1)


def fit_stats_for_net(
    net: ClassifierParams,
    features: np.ndarray,
    labels: np.ndarray,
    epsilon: float,
    feature_source: FeatureSource,
    n_classes: int,
) -> ClassStats:
    """Class statistics in the representation a distance scorer will read."""
    if feature_source is FeatureSource.RAW:
        representation = features
    else:
        representation = forward(net, features).hidden
    return fit_class_stats(representation, labels, epsilon, n_classes=n_classes)


def calibrate_threshold(id_scores: Sequence[float] | np.ndarray, target_tnr: float) -> float:
    """Largest observed score ``t`` with at least ``target_tnr`` of ``id_scores >= t``."""
    scores = np.sort(np.asarray(id_scores, dtype=np.float64).reshape(-1))
    n = scores.size
    if n == 0:
        raise ValueError("id_scores must not be empty")
    if not 0.0 < target_tnr <= 1.0:
        raise ValueError(f"target_tnr must be in (0, 1], got {target_tnr}")
    needed = math.ceil(target_tnr * n - 1e-9)
    at_or_above = n - np.searchsorted(scores, scores, side="left")
    return float(scores[at_or_above >= needed].max())


def ood_filter(
    pseudo: Sequence[PseudoLabel],
    scores: Sequence[float] | np.ndarray,
    delta_ood: float,
) -> list[PseudoLabel]:
    """Keep the pseudo-labels whose score is at least ``delta_ood``, in order."""
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    if len(pseudo) != scores.size:
        raise ValueError(f"{len(pseudo)} pseudo-labels but {scores.size} scores")
    return [
        PseudoLabel(label.instance_ref, label.klass, label.confidence, float(score))
        for label, score in zip(pseudo, scores)
        if score >= delta_ood
    ]


def resolve_delta_ood(
    kind: ScoreKind,
    configured: Optional[Union[float, Literal["auto"]]],
    id_scores: Sequence[float] | np.ndarray,
    target_tnr: float = 0.95,
) -> float:
    """Turn the configured threshold into a number.

    A real is used as given; ``"auto"`` calibrates on ``id_scores``; None
    means 0.5 for bounded scores and calibration otherwise.
    """
    if isinstance(configured, (int, float)):
        return float(configured)
    if configured is None and ScoreKind(kind).is_bounded:
        return BOUNDED_DEFAULT_DELTA
    delta = calibrate_threshold(id_scores, target_tnr)
    logger.info("delta_ood_calibrated", kind=ScoreKind(kind).value, delta_ood=delta, tnr=target_tnr)
    return delta
