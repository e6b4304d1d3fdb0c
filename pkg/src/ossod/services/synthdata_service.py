"""
Synthetic open-set scenario generation.

Renders the pure-ID / mixed / pure-OOD unlabeled-pool protocol at instance
level: ID classes and OOD clusters are isotropic Gaussians whose means lie on
a sphere, background instances are uniform over a hypercube enclosing them.

All draws come from numpy's PCG64 generator (``numpy.random.default_rng``), so
a (config, seed) pair fixes the scenario bit for bit.
"""
from __future__ import annotations

from typing import Any, Callable, Mapping, Union

import numpy as np
import structlog

from ..config.run_spec import build_config
from ..exceptions import ConfigError
from ..models.data_models import (
    Bag,
    BagKind,
    Instance,
    OodPlacement,
    Origin,
    Scenario,
    ScenarioConfig,
    bag_kind,
)

logger = structlog.get_logger(__name__)

MAX_PLACEMENT_ATTEMPTS = 10_000
DISTINCT_TOLERANCE = 1e-9
BACKGROUND_STREAM = 1
TEST_STREAM = 2
PROBE_STREAM = 3

__all__ = ["generate_scenario", "sample_background", "bag_kind"]


def _as_config(config: Union[ScenarioConfig, Mapping[str, Any]]) -> ScenarioConfig:
    if isinstance(config, ScenarioConfig):
        return config
    return build_config(ScenarioConfig, config)


def _stream(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([seed, stream])


def _sphere_point(rng: np.random.Generator, dim: int, radius: float) -> np.ndarray:
    direction = rng.standard_normal(dim)
    norm = np.linalg.norm(direction)
    while norm == 0.0:
        direction = rng.standard_normal(dim)
        norm = np.linalg.norm(direction)
    return direction / norm * radius


def _place_means(config: ScenarioConfig, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    id_means: list[np.ndarray] = []
    while len(id_means) < config.k:
        candidate = _sphere_point(rng, config.d, config.mean_radius)
        if all(np.linalg.norm(candidate - other) > 0.0 for other in id_means):
            id_means.append(candidate)

    draw_ood = _ood_sampler(config, np.array(id_means))
    ood_means: list[np.ndarray] = []
    attempts = 0
    while len(ood_means) < config.m:
        attempts += 1
        if attempts > MAX_PLACEMENT_ATTEMPTS:
            raise ConfigError(
                "could not place OOD cluster means outside the rejection radius",
                field="ood_min_separation",
            )
        candidate = draw_ood(rng)
        if any(np.linalg.norm(candidate - mean) < config.rejection_radius for mean in id_means):
            continue
        if any(
            np.linalg.norm(candidate - other) <= DISTINCT_TOLERANCE * config.mean_radius
            for other in ood_means
        ):
            continue
        ood_means.append(candidate)

    return np.array(id_means), np.array(ood_means).reshape(config.m, config.d)


def _ood_sampler(
    config: ScenarioConfig, id_means: np.ndarray
) -> Callable[[np.random.Generator], np.ndarray]:
    if config.ood_placement is OodPlacement.UNIFORM or config.m == 0:
        return lambda rng: _sphere_point(rng, config.d, config.mean_radius)

    free_dims = config.d - np.linalg.matrix_rank(id_means)
    # a one-dimensional complement only holds the two antipodal points
    if free_dims < 1 or (free_dims == 1 and config.m > 2):
        raise ConfigError(
            f"orthogonal OOD placement cannot fit m={config.m} clusters beside "
            f"k={config.k} ID means in d={config.d}",
            field="ood_placement",
        )
    basis, _ = np.linalg.qr(id_means.T)

    def draw(rng: np.random.Generator) -> np.ndarray:
        direction = rng.standard_normal(config.d)
        direction -= basis @ (basis.T @ direction)
        norm = np.linalg.norm(direction)
        while norm < 1e-12:
            direction = rng.standard_normal(config.d)
            direction -= basis @ (basis.T @ direction)
            norm = np.linalg.norm(direction)
        return direction / norm * config.mean_radius

    return draw


class _InstanceFactory:
    """Draws instances around fixed cluster means from one generator."""

    def __init__(
        self,
        config: ScenarioConfig,
        rng: np.random.Generator,
        id_means: np.ndarray,
        ood_means: np.ndarray,
    ):
        self.config = config
        self.rng = rng
        self.id_means = id_means
        self.ood_means = ood_means

    def id_instance(self, klass: int | None = None) -> Instance:
        k = int(self.rng.integers(self.config.k)) if klass is None else klass
        noise = self.rng.standard_normal(self.config.d) * self.config.class_spread
        return Instance(self.id_means[k] + noise, Origin.id_class(k))

    def ood_instance(self, cluster: int | None = None) -> Instance:
        m = int(self.rng.integers(self.config.m)) if cluster is None else cluster
        noise = self.rng.standard_normal(self.config.d) * self.config.class_spread
        return Instance(self.ood_means[m] + noise, Origin.ood_class(m))

    def background_instance(self) -> Instance:
        box = self.config.background_box
        return Instance(self.rng.uniform(-box, box, size=self.config.d), Origin.background())

    def bag(self, kind: BagKind, allow_background: bool = True) -> Bag:
        low = self.config.bag_size_min
        if kind is BagKind.MIXED:
            low = max(low, 2)
        size = int(self.rng.integers(low, self.config.bag_size_max + 1))

        if kind is BagKind.PURE_ID:
            items = [self.id_instance()]
        elif kind is BagKind.PURE_OOD:
            items = [self.ood_instance()]
        else:
            items = [self.id_instance(), self.ood_instance()]

        while len(items) < size:
            if allow_background and self.rng.random() < self.config.p_background:
                items.append(self.background_instance())
            elif kind is BagKind.PURE_ID:
                items.append(self.id_instance())
            elif kind is BagKind.PURE_OOD:
                items.append(self.ood_instance())
            elif self.rng.random() < 0.5:
                items.append(self.id_instance())
            else:
                items.append(self.ood_instance())

        order = self.rng.permutation(len(items))
        return Bag(tuple(items[i] for i in order))


def generate_scenario(
    config: Union[ScenarioConfig, Mapping[str, Any]], seed: int
) -> Scenario:
    """Generate a scenario; identical (config, seed) pairs give identical scenarios."""
    config = _as_config(config)
    rng = np.random.default_rng(seed)
    id_means, ood_means = _place_means(config, rng)
    factory = _InstanceFactory(config, rng, id_means, ood_means)

    labeled = tuple(
        factory.bag(BagKind.PURE_ID, allow_background=False) for _ in range(config.n_labeled_bags)
    )

    unlabeled_kinds = (
        [BagKind.PURE_ID] * config.n_unlabeled_pure_id
        + [BagKind.MIXED] * config.n_unlabeled_mixed
        + [BagKind.PURE_OOD] * config.n_unlabeled_pure_ood
    )
    unlabeled = [factory.bag(kind) for kind in unlabeled_kinds]
    unlabeled = [unlabeled[i] for i in rng.permutation(len(unlabeled))]

    # evaluation sets have their own streams, so they do not depend on the unlabeled pool
    tester = _InstanceFactory(config, _stream(seed, TEST_STREAM), id_means, ood_means)
    test = tuple(
        tester.id_instance(k) for k in range(config.k) for _ in range(config.n_test_per_class)
    )
    prober = _InstanceFactory(config, _stream(seed, PROBE_STREAM), id_means, ood_means)
    probe = tuple(
        prober.id_instance(i % config.k) for i in range(config.n_probe_per_origin)
    ) + tuple(prober.ood_instance(i % config.m) for i in range(config.n_probe_per_origin))

    background = tuple(
        _draw_background(config, config.n_background, _stream(seed, BACKGROUND_STREAM))
    )

    scenario = Scenario(
        config=config,
        seed=seed,
        labeled=labeled,
        unlabeled=tuple(unlabeled),
        test=test,
        probe=probe,
        background=background,
        id_means=id_means,
        ood_means=ood_means,
    )
    logger.debug(
        "scenario_generated",
        seed=seed,
        n_labeled_instances=len(scenario.labeled_instances),
        n_unlabeled_instances=len(scenario.unlabeled_instances),
        n_test=len(test),
    )
    return scenario


def _draw_background(config: ScenarioConfig, n: int, rng: np.random.Generator) -> list[Instance]:
    box = config.background_box
    features = rng.uniform(-box, box, size=(n, config.d))
    return [Instance(row, Origin.background()) for row in features]


def sample_background(
    config: Union[ScenarioConfig, Mapping[str, Any]], n: int, seed: int
) -> list[Instance]:
    """Draw ``n`` background instances uniformly from the enclosing hypercube."""
    config = _as_config(config)
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    return _draw_background(config, n, np.random.default_rng(seed))
