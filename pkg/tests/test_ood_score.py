"""Tests for class statistics, batch scoring, threshold calibration and the OOD filter."""

import math

import numpy as np
import pytest
from sklearn.covariance import empirical_covariance, shrunk_covariance

from ossod.exceptions import NumericalError
from ossod.models import ClassifierParams, FeatureSource, Instance, Origin, PseudoLabel
from ossod.models import ScoreKind, ScoringOptions
from ossod.services import (
    calibrate_threshold,
    energy_score,
    entropy_score,
    euclidean_score,
    fit_class_stats,
    forward,
    iac_score,
    init_params,
    mahalanobis_score,
    msp_score,
    ood_filter,
    resolve_delta_ood,
    score_batch,
    softmax,
)
from ossod.services.classifier_service import detector_probs
from ossod.services.ood_score_service import fit_stats_for_net


# ---------------------------------------------------------------------------
# fit_class_stats
# ---------------------------------------------------------------------------


def test_pooled_scatter_hand_example():
    features = np.array([[0, 0], [2, 0], [1, 1], [1, 3]], dtype=float)
    stats = fit_class_stats(features, [0, 0, 1, 1], epsilon=0.0)
    np.testing.assert_allclose(stats.means, [[1, 0], [1, 2]])
    np.testing.assert_allclose(stats.pooled_cov, np.eye(2), atol=1e-12)
    np.testing.assert_allclose(stats.precision, np.eye(2), atol=1e-12)


def test_shrinkage_formula():
    stats = fit_class_stats(np.array([[0.0, 0.0], [2.0, 0.0]]), [0, 0], epsilon=0.5)
    np.testing.assert_allclose(stats.pooled_cov, [[1.5, 0.0], [0.0, 0.5]], atol=1e-12)


def test_single_class_covariance_matches_sklearn_shrinkage():
    features = np.random.default_rng(5).normal(size=(40, 4)) * [1.0, 2.0, 0.5, 3.0]
    n = features.shape[0]
    stats = fit_class_stats(features, np.zeros(n, dtype=int), epsilon=0.2)
    unbiased = empirical_covariance(features) * n / (n - 1)
    np.testing.assert_allclose(stats.pooled_cov, shrunk_covariance(unbiased, 0.2), atol=1e-12)


def test_identical_samples_are_singular():
    with pytest.raises(NumericalError):
        fit_class_stats(np.ones((3, 2)), [0, 0, 0], epsilon=0.1)


def test_fit_class_stats_preconditions():
    with pytest.raises(ValueError):
        fit_class_stats(np.zeros((3, 2)), [0, 0, 2], epsilon=0.1)
    with pytest.raises(ValueError):
        fit_class_stats(np.array([[0.0, 1.0], [1.0, 0.0]]), [0, 1], epsilon=0.1)
    with pytest.raises(ValueError):
        fit_class_stats(np.zeros((3, 2)), [0, 0, 0], epsilon=1.5)


def test_shrinkage_keeps_covariance_positive_definite():
    rng = np.random.default_rng(0)
    # fewer samples than dimensions: the raw scatter is rank deficient
    features = rng.normal(size=(5, 8))
    stats = fit_class_stats(features, [0, 0, 1, 1, 1], epsilon=0.05)
    assert np.linalg.eigvalsh(stats.pooled_cov).min() > 0
    np.testing.assert_allclose(stats.pooled_cov, stats.pooled_cov.T)


def test_fit_stats_for_net_uses_requested_representation():
    rng = np.random.default_rng(1)
    net = init_params(3, 6, 3, seed=2)
    features = rng.normal(size=(30, 3))
    labels = np.arange(30) % 2
    hidden = fit_stats_for_net(net, features, labels, 0.1, FeatureSource.HIDDEN, 2)
    raw = fit_stats_for_net(net, features, labels, 0.1, FeatureSource.RAW, 2)
    assert hidden.dim == 6
    assert raw.dim == 3


# ---------------------------------------------------------------------------
# score_batch
# ---------------------------------------------------------------------------


def test_iac_on_abstention_saturated_network_is_near_zero():
    net = ClassifierParams(
        W1=np.zeros((2, 3)),
        b1=np.ones(2),
        W2=np.array([[0.0, 0.0], [0.0, 0.0], [30.0, 30.0]]),
        b2=np.zeros(3),
    )
    scores = score_batch(ScoreKind.IAC, np.random.default_rng(0).normal(size=(5, 3)), net)
    assert np.all(scores < 1e-20)


def test_score_batch_is_permutation_equivariant():
    rng = np.random.default_rng(3)
    net = init_params(3, 5, 4, seed=4)
    features = rng.normal(size=(12, 3))
    order = rng.permutation(12)
    scores = score_batch(ScoreKind.ENERGY, features, net)
    permuted = score_batch(ScoreKind.ENERGY, features[order], net)
    np.testing.assert_array_equal(permuted, scores[order])


def test_dispatch_matches_direct_single_instance_scores():
    rng = np.random.default_rng(5)
    k = 3
    net = init_params(4, 6, k + 1, seed=6, scale=1.0)
    train = rng.normal(size=(40, 4))
    labels = np.arange(40) % k
    stats = fit_stats_for_net(net, train, labels, 0.05, FeatureSource.HIDDEN, k)
    instances = [Instance(x, Origin.id_class(0)) for x in rng.normal(size=(100, 4))]
    options = ScoringOptions(temperature=1.5)

    direct = {kind: [] for kind in ScoreKind}
    for item in instances:
        result = forward(net, item.features)
        probs = softmax(result.logits)
        direct[ScoreKind.MSP].append(msp_score(detector_probs(result.logits, k)))
        direct[ScoreKind.IAC].append(iac_score(probs, k))
        direct[ScoreKind.ENERGY].append(energy_score(result.logits[:k], 1.5))
        direct[ScoreKind.ENTROPY].append(entropy_score(probs))
        direct[ScoreKind.MAHALANOBIS].append(mahalanobis_score(result.hidden, stats))
        direct[ScoreKind.EUCLIDEAN].append(euclidean_score(result.hidden, stats))

    for kind in ScoreKind:
        batch = score_batch(kind, instances, net, stats, options)
        np.testing.assert_allclose(batch, direct[kind], rtol=1e-12, atol=1e-12)


def test_entropy_can_exclude_abstention():
    net = init_params(3, 4, 3, seed=1, scale=1.0)
    x = np.random.default_rng(2).normal(size=(6, 3))
    options = ScoringOptions(entropy_includes_abstention=False)
    expected = entropy_score(detector_probs(forward(net, x).logits, 2))
    np.testing.assert_allclose(score_batch(ScoreKind.ENTROPY, x, net, options=options), expected)


def test_raw_feature_source_scores_inputs():
    net = init_params(2, 4, 3, seed=1)
    stats = fit_class_stats(
        np.array([[0, 0], [1, 0], [0, 1], [5, 5], [6, 5], [5, 6]], dtype=float),
        [0, 0, 0, 1, 1, 1],
        epsilon=0.1,
    )
    options = ScoringOptions(feature_source=FeatureSource.RAW)
    x = np.array([[5.0, 5.0], [0.0, 0.0]])
    scores = score_batch(ScoreKind.EUCLIDEAN, x, net, stats, options)
    np.testing.assert_allclose(scores, [euclidean_score(x[0], stats), euclidean_score(x[1], stats)])


def test_score_batch_errors():
    net = init_params(2, 4, 3, seed=1)
    with pytest.raises(ValueError):
        score_batch(ScoreKind.MAHALANOBIS, np.zeros((2, 2)), net)
    with pytest.raises(ValueError):
        score_batch(ScoreKind.IAC, np.zeros((2, 2)), net, k=3)
    with pytest.raises(ValueError):
        score_batch(ScoreKind.MSP, np.zeros((2, 5)), net)


def test_score_batch_empty_input():
    assert score_batch(ScoreKind.MSP, [], init_params(2, 4, 3, seed=1)).shape == (0,)


def _two_class_detector() -> ClassifierParams:
    """A K + 1 detector for ID means at (+-4, 0).

    Hidden units split each input axis into its positive and negative parts. Each ID
    logit reads its own half of the first axis, and the abstention logit grows mildly
    along the second axis, which no ID class occupies.
    """
    return ClassifierParams(
        W1=np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]]),
        b1=np.zeros(4),
        W2=np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 0.1, 0.1]]),
        b2=np.zeros(3),
    )


def test_id_means_outscore_far_background_for_every_kind():
    net = _two_class_detector()
    means = np.array([[4.0, 0.0], [-4.0, 0.0]])
    rng = np.random.default_rng(6)
    labels = np.repeat([0, 1], 50)
    samples = means[labels] + rng.normal(size=(100, 2))
    stats = fit_stats_for_net(net, samples, labels, 0.05, FeatureSource.HIDDEN, 2)
    # three times the mean radius, along the axis no class occupies
    far = np.array([[0.0, 12.0], [0.0, -12.0]])
    for kind in ScoreKind:
        id_scores = score_batch(kind, means, net, stats)
        far_scores = score_batch(kind, far, net, stats)
        assert id_scores.min() > far_scores.max(), kind


# ---------------------------------------------------------------------------
# calibrate_threshold / ood_filter / resolve_delta_ood
# ---------------------------------------------------------------------------


def test_calibrate_threshold_examples():
    assert calibrate_threshold(np.arange(1, 101), 0.95) == 6.0
    assert calibrate_threshold([2.5] * 7, 0.3) == 2.5
    assert calibrate_threshold([4.0, -1.0, 3.0], 1.0) == -1.0


def test_calibrate_threshold_is_largest_valid_observed_value():
    rng = np.random.default_rng(7)
    for _ in range(30):
        scores = rng.normal(size=int(rng.integers(1, 40)))
        tnr = float(rng.uniform(0.05, 1.0))
        t = calibrate_threshold(scores, tnr)
        valid = [s for s in scores if np.mean(scores >= s) >= tnr]
        assert t == max(valid)


def test_calibrate_threshold_errors():
    with pytest.raises(ValueError):
        calibrate_threshold([], 0.9)
    with pytest.raises(ValueError):
        calibrate_threshold([1.0], 0.0)


def test_ood_filter_examples():
    pseudo = [PseudoLabel(0, 1, 0.9), PseudoLabel(1, 0, 0.8)]
    assert [p.instance_ref for p in ood_filter(pseudo, [0.1, -5.0], -math.inf)] == [0, 1]
    kept = ood_filter(pseudo, [0.9, 0.3], 0.5)
    assert kept == [PseudoLabel(0, 1, 0.9, 0.9)]


def test_ood_filter_subset_and_predicate():
    rng = np.random.default_rng(8)
    for _ in range(20):
        n = int(rng.integers(0, 30))
        pseudo = [
            PseudoLabel(i, int(rng.integers(3)), float(rng.uniform(0.5, 1))) for i in range(n)
        ]
        scores = rng.normal(size=n)
        delta = float(rng.normal())
        kept = ood_filter(pseudo, scores, delta)
        refs = [p.instance_ref for p in kept]
        assert refs == sorted(refs)
        assert set(refs) <= set(range(n))
        assert refs == [i for i in range(n) if scores[i] >= delta]
        assert all(p.idness >= delta for p in kept)


def test_ood_filter_length_mismatch():
    with pytest.raises(ValueError):
        ood_filter([PseudoLabel(0, 0, 0.9)], [0.1, 0.2], 0.0)


def test_resolve_delta_ood_rules():
    id_scores = np.arange(1, 101, dtype=float)
    assert resolve_delta_ood(ScoreKind.ENERGY, 0.25, id_scores) == 0.25
    assert resolve_delta_ood(ScoreKind.ENERGY, -math.inf, id_scores) == -math.inf
    assert resolve_delta_ood(ScoreKind.IAC, None, id_scores) == 0.5
    assert resolve_delta_ood(ScoreKind.MSP, None, id_scores) == 0.5
    assert resolve_delta_ood(ScoreKind.ENERGY, None, id_scores, 0.95) == 6.0
    assert resolve_delta_ood(ScoreKind.IAC, "auto", id_scores, 0.95) == 6.0
