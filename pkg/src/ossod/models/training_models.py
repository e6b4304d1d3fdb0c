"""
Self-training configuration and telemetry models.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator

from .network_models import ClassifierParams, TeacherStudent
from .score_models import ClassStats, FeatureSource, PseudoLabel, ScoreKind, ScoringOptions


class PipelineMode(str, Enum):
    """Self-training variants."""
    BASELINE = "baseline"
    OFFLINE = "offline"
    ONLINE = "online"


class SelfTrainConfig(BaseModel):
    """Hyper-parameters of burn-in, offline OOD training and self-training.

    ``delta_ood`` is a real threshold, ``"auto"`` for the threshold keeping
    ``target_tnr`` of the labeled ID scores, or None for the default rule
    (0.5 for bounded scores, calibrated otherwise).
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    lambda_unsup: float = Field(default=1.0, ge=0, allow_inf_nan=False)
    tau_conf: float = Field(default=0.5, gt=0, lt=1)
    delta_ood: Optional[Union[float, Literal["auto"]]] = None
    target_tnr: float = Field(default=0.95, gt=0, le=1)
    alpha: float = Field(default=0.999, ge=0, le=1)
    lambda_ood: float = Field(default=1.0, ge=0, allow_inf_nan=False)
    eta: float = Field(default=0.01, gt=0, allow_inf_nan=False)
    momentum: float = Field(default=0.0, ge=0, lt=1)

    iters_supervised: int = Field(default=500, ge=0)
    iters_ood: int = Field(default=500, ge=0)
    iters_ssod: int = Field(default=2000, ge=0)
    batch_labeled: int = Field(default=32, ge=1)
    batch_unlabeled: int = Field(default=32, ge=1)
    checkpoint_every: int = Field(default=100, ge=1)
    sigma_aug: float = Field(default=0.3, ge=0, allow_inf_nan=False)

    score_kind: ScoreKind = ScoreKind.IAC
    energy_temperature: float = Field(default=1.0, gt=0, allow_inf_nan=False)
    feature_source: FeatureSource = FeatureSource.HIDDEN
    entropy_includes_abstention: bool = True
    shrinkage: float = Field(default=0.05, ge=0, le=1)

    hidden_width: int = Field(default=32, ge=1)
    init_scale: float = Field(default=0.3, gt=0, allow_inf_nan=False)
    seed: int = 0

    @field_validator("delta_ood", mode="before")
    @classmethod
    def _check_delta(cls, value: object) -> object:
        if isinstance(value, str) and value.strip().lower() != "auto":
            try:
                value = float(value)
            except ValueError as exc:
                raise ValueError("delta_ood must be a real number or 'auto'") from exc
        elif isinstance(value, str):
            value = "auto"
        if isinstance(value, float) and math.isnan(value):
            raise ValueError("delta_ood must not be NaN")
        return value

    @property
    def scoring_options(self) -> ScoringOptions:
        return ScoringOptions(
            temperature=self.energy_temperature,
            feature_source=self.feature_source,
            entropy_includes_abstention=self.entropy_includes_abstention,
        )


@dataclass(frozen=True)
class TelemetryRecord:
    """Pipeline state at one checkpoint.

    ``id_recall`` is kept beside the telemetry columns and written to its own file.
    """
    iteration: int
    n_pseudo_id: int
    n_pseudo_ood: int
    fp_rate: float
    test_acc: float
    ood_auroc: float
    id_recall: float


@dataclass
class Telemetry:
    """Append-only checkpoint log owned by one pipeline run."""
    records: list[TelemetryRecord] = field(default_factory=list)

    HEADER = "iter,n_pseudo_id,n_pseudo_ood,fp_rate,test_acc,ood_auroc"
    PSEUDO_HEADER = "iter,n_pseudo_id,n_pseudo_ood,fp_rate,id_recall"

    def append(self, record: TelemetryRecord) -> None:
        if self.records and record.iteration <= self.records[-1].iteration:
            raise ValueError("telemetry iterations must be strictly increasing")
        self.records.append(record)

    @property
    def first(self) -> TelemetryRecord:
        return self.records[0]

    @property
    def final(self) -> TelemetryRecord:
        return self.records[-1]

    def __len__(self) -> int:
        return len(self.records)


@dataclass(frozen=True)
class TrainingState:
    """Everything one SSOD iteration reads and replaces.

    ``ood_net`` and ``stats`` are set in offline mode only and are never
    updated after construction. ``last_thresholded`` and ``last_filtered`` hold
    the previous step's pseudo-labels; their ``instance_ref`` is the position
    within that step's unlabeled batch.
    """
    ts: TeacherStudent
    k: int
    ood_net: Optional[ClassifierParams] = None
    stats: Optional[ClassStats] = None
    delta_ood: float = -math.inf
    velocity: Optional[ClassifierParams] = None
    iteration: int = 0
    last_thresholded: tuple[PseudoLabel, ...] = ()
    last_filtered: tuple[PseudoLabel, ...] = ()


@dataclass(frozen=True)
class PipelineResult:
    """Outcome of one pipeline run."""
    mode: PipelineMode
    teacher_student: TeacherStudent
    telemetry: Telemetry
    burn_in: ClassifierParams
    offline_net: Optional[ClassifierParams] = None
    offline_stats: Optional[ClassStats] = None
    delta_ood: Optional[float] = None
    offline_auroc: Optional[float] = None
