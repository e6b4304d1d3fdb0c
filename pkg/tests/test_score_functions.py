"""Tests for the single-input ID-ness scores and the scorer registry."""

import math

import numpy as np
import pytest

from ossod.models import ClassStats, ScoreKind, ScoringOptions
from ossod.services import (
    energy_score,
    entropy_score,
    euclidean_score,
    get_scorer,
    get_scorer_registry,
    iac_score,
    mahalanobis_score,
    msp_score,
)


def _stats(means, cov) -> ClassStats:
    cov = np.asarray(cov, dtype=float)
    return ClassStats(
        means=np.asarray(means, dtype=float),
        pooled_cov=cov,
        shrinkage=0.0,
        precision=np.linalg.inv(cov),
    )


def test_msp_examples():
    assert msp_score(np.full(4, 0.25)) == pytest.approx(0.25)
    assert msp_score(np.array([0.0, 1.0, 0.0])) == 1.0
    assert msp_score(np.array([0.5, 0.3, 0.2])) == 0.5


def test_msp_rejects_unnormalised_input():
    with pytest.raises(ValueError):
        msp_score(np.array([0.5, 0.6]))


def test_iac_examples():
    assert iac_score(np.array([0.0, 0.0, 1.0]), 2) == 0.0
    assert iac_score(np.array([0.4, 0.6, 0.0]), 2) == 1.0
    assert iac_score(np.array([0.2, 0.3, 0.5]), 2) == pytest.approx(0.5)


def test_iac_rejects_wrong_length():
    with pytest.raises(ValueError):
        iac_score(np.array([0.2, 0.3, 0.5]), 3)


def test_energy_examples():
    assert energy_score(np.array([0.0, 0.0])) == pytest.approx(math.log(2.0), abs=1e-12)
    assert energy_score(np.array([1.0, 0.0])) == pytest.approx(math.log(math.e + 1), abs=1e-12)
    assert energy_score(np.array([2.0, 0.0]), 2.0) == pytest.approx(
        2 * math.log(math.e + 1), abs=1e-12
    )


def test_energy_shift_and_bounds():
    logits = np.array([0.3, -1.2, 2.5])
    assert energy_score(logits + 7.0) == pytest.approx(energy_score(logits) + 7.0, abs=1e-12)
    value = energy_score(logits, 1.5)
    assert logits.max() <= value <= logits.max() + 1.5 * math.log(3)


def test_energy_rejects_bad_input():
    with pytest.raises(ValueError):
        energy_score(np.array([]))
    with pytest.raises(ValueError):
        energy_score(np.array([1.0]), 0.0)


def test_entropy_examples():
    assert entropy_score(np.array([0.0, 1.0, 0.0])) == 0.0
    assert entropy_score(np.full(5, 0.2)) == pytest.approx(-math.log(5), abs=1e-12)
    assert entropy_score(np.array([0.5, 0.5, 0.0])) == pytest.approx(-math.log(2), abs=1e-12)


def test_mahalanobis_examples():
    stats = _stats([[0, 0]], np.eye(2))
    assert mahalanobis_score(np.array([3.0, 4.0]), stats) == pytest.approx(-25)
    two_means = _stats([[0, 0], [10, 0]], np.eye(2))
    assert mahalanobis_score(np.array([9.0, 0.0]), two_means) == pytest.approx(-1)
    scaled = _stats([[0, 0]], np.diag([4.0, 1.0]))
    assert mahalanobis_score(np.array([2.0, 1.0]), scaled) == pytest.approx(-2)


def test_euclidean_examples():
    stats = _stats([[0, 0], [10, 0]], np.eye(2))
    assert euclidean_score(np.array([10.0, 0.0]), stats) == 0.0
    assert euclidean_score(np.array([3.0, 4.0]), _stats([[0, 0]], np.eye(2))) == pytest.approx(-5)
    assert euclidean_score(np.array([9.0, 0.0]), stats) == pytest.approx(-1)


def test_identity_covariance_reduction():
    rng = np.random.default_rng(0)
    stats = _stats(rng.normal(size=(3, 4)), np.eye(4))
    for f in rng.normal(size=(20, 4)):
        expected = -euclidean_score(f, stats) ** 2
        assert mahalanobis_score(f, stats) == pytest.approx(expected, abs=1e-9)


def test_distance_scores_reject_dimension_mismatch():
    stats = _stats([[0, 0]], np.eye(2))
    with pytest.raises(ValueError):
        mahalanobis_score(np.zeros(3), stats)
    with pytest.raises(ValueError):
        euclidean_score(np.zeros(3), stats)


def test_batched_scores_match_rows():
    rng = np.random.default_rng(1)
    logits = rng.normal(size=(10, 4))
    probs = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
    np.testing.assert_allclose(msp_score(probs), [msp_score(p) for p in probs])
    np.testing.assert_allclose(entropy_score(probs), [entropy_score(p) for p in probs])
    np.testing.assert_allclose(energy_score(logits), [energy_score(row) for row in logits])


def test_bounds_hold_on_random_inputs():
    rng = np.random.default_rng(2)
    stats = _stats(rng.normal(size=(3, 5)), np.diag(rng.uniform(0.5, 2.0, size=5)))
    for _ in range(1000):
        c = int(rng.integers(2, 7))
        k = c - 1
        logits = rng.normal(0.0, 3.0, size=c)
        probs = np.exp(logits - logits.max())
        probs /= probs.sum()
        foreground = probs[:k] / probs[:k].sum()
        temperature = float(rng.uniform(0.1, 5.0))
        assert 1.0 / k - 1e-12 <= msp_score(foreground) <= 1.0
        assert 0.0 <= iac_score(probs, k) <= 1.0
        assert -math.log(c) - 1e-12 <= entropy_score(probs) <= 0.0
        energy = energy_score(logits[:k], temperature)
        top = logits[:k].max()
        assert top - 1e-9 <= energy <= top + temperature * math.log(k) + 1e-9
        f = rng.normal(0.0, 4.0, size=5)
        assert mahalanobis_score(f, stats) <= 0.0
        assert euclidean_score(f, stats) <= 0.0


def test_registry_covers_every_kind():
    registry = get_scorer_registry()
    assert set(registry.kinds()) == set(ScoreKind)
    for kind in ScoreKind:
        assert get_scorer(kind).kind is kind
        assert get_scorer(kind).needs_stats == kind.needs_stats


def test_bounded_kinds():
    assert {kind for kind in ScoreKind if kind.is_bounded} == {ScoreKind.MSP, ScoreKind.IAC}


def test_scoring_options_reject_bad_temperature():
    with pytest.raises(ValueError):
        ScoringOptions(temperature=0.0)
