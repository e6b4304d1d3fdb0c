"""
Data models for the simulator.

This package contains the scenario, network, scoring and training models used
throughout the services.
"""

from .data_models import (
    Bag,
    BagKind,
    Instance,
    OodPlacement,
    Origin,
    OriginKind,
    Scenario,
    ScenarioConfig,
)
from .network_models import ClassifierParams, ForwardResult, TeacherStudent
from .score_models import (
    ClassStats,
    FeatureSource,
    OodReport,
    PseudoLabel,
    PseudoStats,
    ScoreKind,
    ScoringOptions,
)
from .training_models import (
    PipelineMode,
    PipelineResult,
    SelfTrainConfig,
    Telemetry,
    TelemetryRecord,
    TrainingState,
)

__all__ = [
    # Scenario Models
    "Bag",
    "BagKind",
    "Instance",
    "OodPlacement",
    "Origin",
    "OriginKind",
    "Scenario",
    "ScenarioConfig",

    # Network Models
    "ClassifierParams",
    "ForwardResult",
    "TeacherStudent",

    # Scoring Models
    "ClassStats",
    "FeatureSource",
    "OodReport",
    "PseudoLabel",
    "PseudoStats",
    "ScoreKind",
    "ScoringOptions",

    # Training Models
    "PipelineMode",
    "PipelineResult",
    "SelfTrainConfig",
    "Telemetry",
    "TelemetryRecord",
    "TrainingState",
]
