"""Registry of ID-ness scorers keyed by ScoreKind.

Each scorer turns a network's outputs on a batch into one score per row. The
registry keeps dispatch in one place, so adding a score means adding a class
here and nothing else.
"""
from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..models.score_models import ClassStats, FeatureSource, ScoreKind, ScoringOptions
from .classifier_service import detector_probs, softmax
from .score_functions import (
    energy_score,
    entropy_score,
    euclidean_score,
    iac_score,
    mahalanobis_score,
    msp_score,
)


@dataclass(frozen=True)
class NetworkOutputs:
    """What a scorer may look at for a batch: raw inputs, hidden activations, logits."""
    features: np.ndarray
    hidden: np.ndarray
    logits: np.ndarray


class IdnessScorer(ABC):
    """Abstract base class for scorers."""

    kind: ScoreKind
    needs_stats: bool = False

    @abstractmethod
    def score(
        self,
        outputs: NetworkOutputs,
        k: int,
        options: ScoringOptions,
        stats: Optional[ClassStats] = None,
    ) -> np.ndarray:
        """Return one ID-ness score per row of ``outputs``."""


class MspScorer(IdnessScorer):
    kind = ScoreKind.MSP

    def score(
        self,
        outputs: NetworkOutputs,
        k: int,
        options: ScoringOptions,
        stats: Optional[ClassStats] = None,
    ) -> np.ndarray:
        return np.asarray(msp_score(detector_probs(outputs.logits, k)))


class IacScorer(IdnessScorer):
    kind = ScoreKind.IAC

    def score(
        self,
        outputs: NetworkOutputs,
        k: int,
        options: ScoringOptions,
        stats: Optional[ClassStats] = None,
    ) -> np.ndarray:
        if outputs.logits.shape[-1] != k + 1:
            raise ValueError(
                f"IAC needs a K + 1 output network (K={k}), got {outputs.logits.shape[-1]} outputs"
            )
        return np.asarray(iac_score(softmax(outputs.logits), k))


class EnergyScorer(IdnessScorer):
    kind = ScoreKind.ENERGY

    def score(
        self,
        outputs: NetworkOutputs,
        k: int,
        options: ScoringOptions,
        stats: Optional[ClassStats] = None,
    ) -> np.ndarray:
        return np.asarray(energy_score(outputs.logits[..., :k], options.temperature))


class EntropyScorer(IdnessScorer):
    kind = ScoreKind.ENTROPY

    def score(
        self,
        outputs: NetworkOutputs,
        k: int,
        options: ScoringOptions,
        stats: Optional[ClassStats] = None,
    ) -> np.ndarray:
        if options.entropy_includes_abstention:
            probs = softmax(outputs.logits)
        else:
            probs = detector_probs(outputs.logits, k)
        return np.asarray(entropy_score(probs))


class _DistanceScorer(IdnessScorer):
    needs_stats = True

    @staticmethod
    def _features(outputs: NetworkOutputs, options: ScoringOptions) -> np.ndarray:
        if options.feature_source is FeatureSource.RAW:
            return outputs.features
        return outputs.hidden


class MahalanobisScorer(_DistanceScorer):
    kind = ScoreKind.MAHALANOBIS

    def score(
        self,
        outputs: NetworkOutputs,
        k: int,
        options: ScoringOptions,
        stats: Optional[ClassStats] = None,
    ) -> np.ndarray:
        assert stats is not None
        return np.asarray(mahalanobis_score(self._features(outputs, options), stats))


class EuclideanScorer(_DistanceScorer):
    kind = ScoreKind.EUCLIDEAN

    def score(
        self,
        outputs: NetworkOutputs,
        k: int,
        options: ScoringOptions,
        stats: Optional[ClassStats] = None,
    ) -> np.ndarray:
        assert stats is not None
        return np.asarray(euclidean_score(self._features(outputs, options), stats))


class ScorerRegistry:
    """Holds one scorer per ScoreKind."""

    def __init__(self) -> None:
        self._scorers: dict[ScoreKind, IdnessScorer] = {
            scorer.kind: scorer
            for scorer in (
                MspScorer(),
                IacScorer(),
                EnergyScorer(),
                EntropyScorer(),
                MahalanobisScorer(),
                EuclideanScorer(),
            )
        }

    def get(self, kind: ScoreKind) -> IdnessScorer:
        return self._scorers[ScoreKind(kind)]

    def kinds(self) -> list[ScoreKind]:
        return list(self._scorers)


_registry: ScorerRegistry | None = None


def get_scorer_registry() -> ScorerRegistry:
    global _registry
    if _registry is None:
        _registry = ScorerRegistry()
    return _registry


def get_scorer(kind: ScoreKind) -> IdnessScorer:
    return get_scorer_registry().get(kind)
