"""
OOD-detection metrics, pseudo-label quality and the accuracy proxy.

Scores are ID-ness scores (higher = ID). Thresholds are attained at observed
score values only; there is no ROC interpolation.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from ..models.data_models import Instance, Origin, OriginKind
from ..models.network_models import ClassifierParams
from ..models.score_models import OodReport, PseudoLabel, PseudoStats
from .classifier_service import predict
from .ood_score_service import calibrate_threshold


def _nonempty(scores: Sequence[float] | np.ndarray, name: str) -> np.ndarray:
    values = np.asarray(scores, dtype=np.float64).reshape(-1)
    if values.size == 0:
        raise ValueError(f"{name} must not be empty")
    return values


def auroc(
    id_scores: Sequence[float] | np.ndarray, ood_scores: Sequence[float] | np.ndarray
) -> float:
    """P(ID score > OOD score) with ties counted 1/2, via the Mann-Whitney rank sum."""
    ids = _nonempty(id_scores, "id_scores")
    oods = _nonempty(ood_scores, "ood_scores")
    ranks = rankdata(np.concatenate([ids, oods]), method="average")
    n_id, n_ood = ids.size, oods.size
    u_stat = ranks[:n_id].sum() - n_id * (n_id + 1) / 2.0
    return float(u_stat / (n_id * n_ood))


def fpr_at_tnr(
    id_scores: Sequence[float] | np.ndarray,
    ood_scores: Sequence[float] | np.ndarray,
    tnr: float,
) -> float:
    """Fraction of OOD scores retained at the threshold keeping ``tnr`` of ID scores."""
    ids = _nonempty(id_scores, "id_scores")
    oods = _nonempty(ood_scores, "ood_scores")
    threshold = calibrate_threshold(ids, tnr)
    return float(np.count_nonzero(oods >= threshold) / oods.size)


def ood_report(
    id_scores: Sequence[float] | np.ndarray, ood_scores: Sequence[float] | np.ndarray
) -> OodReport:
    return OodReport(
        auroc=auroc(id_scores, ood_scores),
        fpr50=fpr_at_tnr(id_scores, ood_scores, 0.50),
        fpr75=fpr_at_tnr(id_scores, ood_scores, 0.75),
        fpr95=fpr_at_tnr(id_scores, ood_scores, 0.95),
    )


def pseudo_stats(
    pseudo: Sequence[PseudoLabel],
    truth: Sequence[Origin],
    n_id_available: int,
) -> PseudoStats:
    """Count pseudo-labels on ID vs OOD/background instances.

    ``truth[i]`` is the origin of the instance referenced by ``instance_ref == i``.
    """
    n_id = 0
    n_ood = 0
    for label in pseudo:
        if not 0 <= label.instance_ref < len(truth):
            raise ValueError(f"dangling instance_ref {label.instance_ref}")
        if truth[label.instance_ref].kind is OriginKind.ID_CLASS:
            n_id += 1
        else:
            n_ood += 1
    if n_id_available < n_id:
        raise ValueError(
            f"n_id_available ({n_id_available}) is smaller than the ID pseudo-labels ({n_id})"
        )
    total = n_id + n_ood
    return PseudoStats(
        n_pseudo_id=n_id,
        n_pseudo_ood=n_ood,
        fp_rate=n_ood / total if total else 0.0,
        id_recall=n_id / n_id_available if n_id_available else 0.0,
    )


def test_accuracy(params: ClassifierParams, test: Sequence[Instance], k: int) -> float:
    """Fraction of ID test instances whose predicted class is their true class."""
    if not test:
        raise ValueError("test set must not be empty")
    if any(item.origin.kind is not OriginKind.ID_CLASS for item in test):
        raise ValueError("test set must contain ID instances only")
    features = np.stack([item.features for item in test])
    truth = np.array([item.origin.index for item in test])
    classes, _ = predict(params, features, k)
    return float(np.mean(classes == truth))


# keep pytest from collecting this as a test when imported into a test module
test_accuracy.__test__ = False  # type: ignore[attr-defined]
