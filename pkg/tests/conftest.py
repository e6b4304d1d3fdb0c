"""Shared fixtures: small scenarios and short training budgets."""

import numpy as np
import pytest

from ossod.log_config import configure_logging
from ossod.models import ClassifierParams, ScenarioConfig, SelfTrainConfig
from ossod.services import generate_scenario


@pytest.fixture(autouse=True)
def _quiet_logging():
    # CLI invocations rebind the log stream to their captured stderr
    configure_logging("WARNING")


@pytest.fixture
def small_scenario_config() -> ScenarioConfig:
    return ScenarioConfig(
        d=4,
        k=3,
        m=2,
        n_labeled_bags=20,
        n_unlabeled_pure_id=15,
        n_unlabeled_mixed=15,
        n_unlabeled_pure_ood=15,
        bag_size_min=1,
        bag_size_max=3,
        n_test_per_class=20,
        n_probe_per_origin=30,
        n_background=120,
    )


@pytest.fixture
def small_scenario(small_scenario_config):
    return generate_scenario(small_scenario_config, seed=3)


@pytest.fixture
def small_training_config() -> SelfTrainConfig:
    return SelfTrainConfig(
        iters_supervised=40,
        iters_ood=40,
        iters_ssod=20,
        checkpoint_every=5,
        batch_labeled=8,
        batch_unlabeled=8,
        hidden_width=8,
        eta=0.05,
        alpha=0.9,
        seed=11,
    )


def logit_net(log_probs) -> ClassifierParams:
    """A network whose logits equal ``log_probs`` for every input of dimension 2."""
    column = np.asarray(log_probs, dtype=float).reshape(-1, 1)
    return ClassifierParams(
        W1=np.zeros((1, 2)),
        b1=np.ones(1),
        W2=column,
        b2=np.zeros(column.shape[0]),
    )


@pytest.fixture
def make_logit_net():
    return logit_net
