"""
Scenario data models.

Defines instances with hidden ground-truth origin, bags of instances standing
in for multi-object images, the scenario configuration and the generated
scenario itself.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Iterable, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator


class OriginKind(str, Enum):
    """Ground-truth source of an instance."""
    ID_CLASS = "id"
    OOD_CLASS = "ood"
    BACKGROUND = "background"


class BagKind(str, Enum):
    """Composition of a bag, ignoring background instances."""
    PURE_ID = "pure_id"
    MIXED = "mixed"
    PURE_OOD = "pure_ood"


class OodPlacement(str, Enum):
    """Where OOD cluster means go on the sphere of ID means.

    ``orthogonal`` draws from the part of the sphere orthogonal to every ID mean,
    so each OOD cluster is equidistant from all ID classes. ``uniform`` draws
    anywhere on the sphere.
    """
    ORTHOGONAL = "orthogonal"
    UNIFORM = "uniform"


@dataclass(frozen=True)
class Origin:
    """Ground truth of an instance: ID class k, OOD cluster m, or background."""
    kind: OriginKind
    index: int = -1

    @classmethod
    def id_class(cls, k: int) -> "Origin":
        return cls(OriginKind.ID_CLASS, k)

    @classmethod
    def ood_class(cls, m: int) -> "Origin":
        return cls(OriginKind.OOD_CLASS, m)

    @classmethod
    def background(cls) -> "Origin":
        return cls(OriginKind.BACKGROUND)

    @property
    def is_id(self) -> bool:
        return self.kind is OriginKind.ID_CLASS


@dataclass(frozen=True, eq=False)
class Instance:
    """A feature vector and its hidden origin.

    The origin is read only by metrics and by labeled-set construction.
    """
    features: np.ndarray
    origin: Origin

    def __post_init__(self) -> None:
        features = np.array(self.features, dtype=np.float64)
        if features.ndim != 1:
            raise ValueError("instance features must be a vector")
        if not np.all(np.isfinite(features)):
            raise ValueError("instance features must be finite")
        features.setflags(write=False)
        object.__setattr__(self, "features", features)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Instance):
            return NotImplemented
        return self.origin == other.origin and np.array_equal(self.features, other.features)

    __hash__ = None  # type: ignore[assignment]


def bag_kind(instances: Iterable[Instance]) -> BagKind:
    """Classify a bag by its ID and OOD content; background is ignored."""
    items = list(instances)
    if not items:
        raise ValueError("bag must contain at least one instance")
    has_id = any(item.origin.kind is OriginKind.ID_CLASS for item in items)
    has_ood = any(item.origin.kind is OriginKind.OOD_CLASS for item in items)
    if has_id and has_ood:
        return BagKind.MIXED
    if has_id:
        return BagKind.PURE_ID
    if has_ood:
        return BagKind.PURE_OOD
    raise ValueError("bag holds only background instances and has no kind")


@dataclass(frozen=True)
class Bag:
    """A multi-object image analogue."""
    instances: tuple[Instance, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "instances", tuple(self.instances))
        # validates non-emptiness and the presence of a foreground instance
        bag_kind(self.instances)

    @property
    def kind(self) -> BagKind:
        return bag_kind(self.instances)


class ScenarioConfig(BaseModel):
    """Parameters of a synthetic open-set scenario.

    The defaults are the desk-scale default scenario.
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    d: int = Field(default=8, ge=2, description="feature dimension")
    k: int = Field(default=3, ge=2, description="number of ID classes")
    m: int = Field(default=3, ge=0, description="number of OOD clusters")
    mean_radius: float = Field(default=4.0, gt=0, allow_inf_nan=False)
    class_spread: float = Field(default=1.0, gt=0, allow_inf_nan=False)
    background_box: float = Field(default=10.0, gt=0, allow_inf_nan=False)
    ood_min_separation: Optional[float] = Field(default=None, ge=0, allow_inf_nan=False)
    ood_placement: OodPlacement = OodPlacement.ORTHOGONAL
    p_background: float = Field(default=0.2, ge=0, lt=1)

    n_labeled_bags: int = Field(default=60, ge=0)
    n_unlabeled_pure_id: int = Field(default=300, ge=0)
    n_unlabeled_mixed: int = Field(default=300, ge=0)
    n_unlabeled_pure_ood: int = Field(default=300, ge=0)
    bag_size_min: int = Field(default=1, ge=1)
    bag_size_max: int = Field(default=5, ge=1)
    n_test_per_class: int = Field(default=200, ge=0)
    n_probe_per_origin: int = Field(default=200, ge=0)
    n_background: int = Field(default=1000, ge=0)

    @model_validator(mode="after")
    def _check_consistency(self) -> "ScenarioConfig":
        if self.bag_size_max < self.bag_size_min:
            raise ValueError("bag_size_max must be >= bag_size_min")
        if self.n_unlabeled_mixed > 0 and self.bag_size_max < 2:
            raise ValueError("bag_size_max must be >= 2 when n_unlabeled_mixed > 0")
        if self.m == 0 and (self.n_unlabeled_mixed > 0 or self.n_unlabeled_pure_ood > 0):
            raise ValueError("m must be >= 1 when mixed or pure-OOD bags are requested")
        if self.m == 0 and self.n_probe_per_origin > 0:
            raise ValueError("m must be >= 1 when a probe set is requested")
        return self

    @property
    def rejection_radius(self) -> float:
        return self.class_spread if self.ood_min_separation is None else self.ood_min_separation

    def with_unlabeled_kinds(self, kinds: Iterable[BagKind]) -> "ScenarioConfig":
        """Copy of this config keeping only the listed unlabeled bag kinds."""
        keep = set(kinds)
        return self.model_copy(
            update={
                "n_unlabeled_pure_id": self.n_unlabeled_pure_id if BagKind.PURE_ID in keep else 0,
                "n_unlabeled_mixed": self.n_unlabeled_mixed if BagKind.MIXED in keep else 0,
                "n_unlabeled_pure_ood": (
                    self.n_unlabeled_pure_ood if BagKind.PURE_OOD in keep else 0
                ),
            }
        )


def _stack(instances: tuple[Instance, ...], dim: int) -> np.ndarray:
    if not instances:
        return np.zeros((0, dim))
    return np.stack([item.features for item in instances])


@dataclass(frozen=True, eq=False)
class Scenario:
    """A generated open-set scenario.

    ``labeled`` bags are pure-ID with exposed labels; ``unlabeled`` bags hide
    their origins from training; ``test`` holds ID instances only; ``probe``
    holds equal numbers of ID and OOD instances for OOD-detector checks;
    ``background`` holds the negatives used to train the abstention class.
    """
    config: ScenarioConfig
    seed: int
    labeled: tuple[Bag, ...]
    unlabeled: tuple[Bag, ...]
    test: tuple[Instance, ...]
    probe: tuple[Instance, ...] = ()
    background: tuple[Instance, ...] = ()
    id_means: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    ood_means: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Scenario):
            return NotImplemented
        return (
            self.config == other.config
            and self.seed == other.seed
            and self.labeled == other.labeled
            and self.unlabeled == other.unlabeled
            and self.test == other.test
            and self.probe == other.probe
            and self.background == other.background
            and np.array_equal(self.id_means, other.id_means)
            and np.array_equal(self.ood_means, other.ood_means)
        )

    __hash__ = None  # type: ignore[assignment]

    @cached_property
    def labeled_instances(self) -> tuple[Instance, ...]:
        return tuple(item for bag in self.labeled for item in bag.instances)

    @cached_property
    def unlabeled_instances(self) -> tuple[Instance, ...]:
        return tuple(item for bag in self.unlabeled for item in bag.instances)

    @cached_property
    def labeled_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Features and class ids of every labeled instance."""
        items = self.labeled_instances
        targets = np.array([item.origin.index for item in items], dtype=np.int64)
        return _stack(items, self.config.d), targets

    @cached_property
    def unlabeled_features(self) -> np.ndarray:
        return _stack(self.unlabeled_instances, self.config.d)

    @cached_property
    def unlabeled_origins(self) -> tuple[Origin, ...]:
        return tuple(item.origin for item in self.unlabeled_instances)

    @cached_property
    def background_features(self) -> np.ndarray:
        return _stack(self.background, self.config.d)

    def kind_histogram(self) -> dict[BagKind, int]:
        counts = {kind: 0 for kind in BagKind}
        for bag in self.unlabeled:
            counts[bag.kind] += 1
        return counts
