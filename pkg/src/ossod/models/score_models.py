"""
OOD scoring models: score kinds, class statistics, pseudo-labels and the
statistics and reports computed over them.

Every score is oriented as ID-ness: higher means more in-distribution.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field


class ScoreKind(str, Enum):
    """Available ID-ness scores."""
    MSP = "msp"
    IAC = "iac"
    ENERGY = "energy"
    ENTROPY = "entropy"
    MAHALANOBIS = "mahalanobis"
    EUCLIDEAN = "euclidean"

    @property
    def is_bounded(self) -> bool:
        return self in (ScoreKind.MSP, ScoreKind.IAC)

    @property
    def needs_stats(self) -> bool:
        return self in (ScoreKind.MAHALANOBIS, ScoreKind.EUCLIDEAN)


class FeatureSource(str, Enum):
    """Representation fed to distance scores."""
    HIDDEN = "hidden"
    RAW = "raw"


class ScoringOptions(BaseModel):
    """Knobs shared by all scorers."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    temperature: float = Field(default=1.0, gt=0, allow_inf_nan=False)
    feature_source: FeatureSource = FeatureSource.HIDDEN
    entropy_includes_abstention: bool = True


@dataclass(frozen=True, eq=False)
class ClassStats:
    """Per-class means and a shrinkage-regularised pooled covariance."""
    means: np.ndarray
    pooled_cov: np.ndarray
    shrinkage: float
    precision: np.ndarray

    @property
    def n_classes(self) -> int:
        return int(self.means.shape[0])

    @property
    def dim(self) -> int:
        return int(self.means.shape[1])


@dataclass(frozen=True)
class PseudoLabel:
    """A teacher prediction on an unlabeled instance that passed thresholding.

    ``idness`` is attached by the OOD filter.
    """
    instance_ref: int
    klass: int
    confidence: float
    idness: Optional[float] = None


@dataclass(frozen=True)
class PseudoStats:
    """Pseudo-label quality against ground truth."""
    n_pseudo_id: int
    n_pseudo_ood: int
    fp_rate: float
    id_recall: float

    @property
    def n_pseudo(self) -> int:
        return self.n_pseudo_id + self.n_pseudo_ood


@dataclass(frozen=True)
class OodReport:
    """OOD-detection metrics for one score."""
    auroc: float
    fpr50: float
    fpr75: float
    fpr95: float
