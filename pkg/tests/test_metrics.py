"""Tests for AUROC, FPR at a fixed TNR, pseudo-label statistics and test accuracy."""

import numpy as np
import pytest
from sklearn.metrics import roc_auc_score

from ossod.models import ClassifierParams, Instance, Origin, PseudoLabel
from ossod.services import auroc, fpr_at_tnr, ood_report, pseudo_stats, test_accuracy as accuracy


def _brute_force_auroc(ids, oods) -> float:
    wins = sum((i > o) + 0.5 * (i == o) for i in ids for o in oods)
    return wins / (len(ids) * len(oods))


# ---------------------------------------------------------------------------
# auroc
# ---------------------------------------------------------------------------


def test_auroc_examples():
    assert auroc([0.9, 0.8], [0.1, 0.2]) == 1.0
    assert auroc([0.5], [0.5]) == 0.5
    assert auroc([0.8, 0.4], [0.6, 0.2]) == 0.75


def test_auroc_matches_brute_force_with_ties():
    rng = np.random.default_rng(0)
    for _ in range(200):
        ids = rng.integers(0, 6, size=int(rng.integers(1, 101))).astype(float)
        oods = rng.integers(0, 6, size=int(rng.integers(1, 101))).astype(float)
        assert auroc(ids, oods) == pytest.approx(_brute_force_auroc(ids, oods), abs=1e-12)


def test_auroc_matches_sklearn():
    rng = np.random.default_rng(1)
    ids = rng.normal(1.0, 1.0, size=200)
    oods = rng.normal(0.0, 1.0, size=150)
    labels = np.r_[np.ones(200), np.zeros(150)]
    expected = roc_auc_score(labels, np.r_[ids, oods])
    assert auroc(ids, oods) == pytest.approx(expected, abs=1e-12)


def test_auroc_invariant_under_monotone_transform():
    rng = np.random.default_rng(2)
    ids = rng.normal(size=40)
    oods = rng.normal(size=30)
    assert auroc(np.exp(ids), np.exp(oods)) == auroc(ids, oods)
    assert auroc(3 * ids + 1, 3 * oods + 1) == auroc(ids, oods)


def test_auroc_complement_symmetry():
    rng = np.random.default_rng(3)
    ids = rng.integers(0, 4, size=25).astype(float)
    oods = rng.integers(0, 4, size=17).astype(float)
    assert auroc(ids, oods) + auroc(oods, ids) == pytest.approx(1.0, abs=1e-12)


def test_auroc_rejects_empty_lists():
    with pytest.raises(ValueError):
        auroc([], [0.1])
    with pytest.raises(ValueError):
        auroc([0.1], [])


# ---------------------------------------------------------------------------
# fpr_at_tnr / ood_report
# ---------------------------------------------------------------------------


def test_fpr_examples():
    ids = np.arange(1, 101, dtype=float)
    for x in (0.5, 0.75, 0.95):
        assert fpr_at_tnr(ids, [0.0], x) == 0.0
    assert fpr_at_tnr([0.9, 0.8, 0.7, 0.6], [0.75, 0.1], 0.75) == 0.5
    same = np.random.default_rng(4).normal(size=50)
    assert fpr_at_tnr(same, same, 0.95) >= 0.95


def test_fpr_is_monotone_in_tnr():
    rng = np.random.default_rng(5)
    for _ in range(20):
        ids = rng.normal(1.0, size=30)
        oods = rng.normal(size=30)
        values = [fpr_at_tnr(ids, oods, x) for x in np.linspace(0.05, 0.95, 19)]
        assert values == sorted(values)


def _threshold_scan_fpr(ids, oods, tnr) -> float:
    valid = [t for t in ids if np.mean(ids >= t) >= tnr]
    threshold = max(valid)
    return float(np.mean(oods >= threshold))


def test_fpr_matches_threshold_scan():
    rng = np.random.default_rng(6)
    for _ in range(200):
        ids = rng.integers(0, 8, size=int(rng.integers(1, 60))).astype(float)
        oods = rng.normal(3.0, 2.0, size=int(rng.integers(1, 60))).round()
        for x in (0.5, 0.75, 0.95):
            assert fpr_at_tnr(ids, oods, x) == _threshold_scan_fpr(ids, oods, x)


def test_fpr_is_ordered_at_reported_tnrs():
    rng = np.random.default_rng(7)
    for _ in range(100):
        ids = rng.normal(float(rng.uniform(0, 2)), size=int(rng.integers(1, 80)))
        oods = rng.normal(size=int(rng.integers(1, 80)))
        fpr50, fpr75, fpr95 = (fpr_at_tnr(ids, oods, x) for x in (0.50, 0.75, 0.95))
        assert fpr95 >= fpr75 >= fpr50


def test_ood_report_perfect_separation():
    report = ood_report([0.9, 0.8, 0.7], [0.1, 0.2])
    assert (report.auroc, report.fpr50, report.fpr75, report.fpr95) == (1.0, 0.0, 0.0, 0.0)
    assert report.fpr95 >= report.fpr75 >= report.fpr50


# ---------------------------------------------------------------------------
# pseudo_stats
# ---------------------------------------------------------------------------


def test_pseudo_stats_examples():
    truth = [Origin.id_class(0), Origin.ood_class(1), Origin.id_class(2)]
    stats = pseudo_stats([PseudoLabel(i, 0, 0.9) for i in range(3)], truth, 2)
    assert stats.fp_rate == pytest.approx(1 / 3)

    empty = pseudo_stats([], truth, 2)
    assert (empty.fp_rate, empty.id_recall) == (0.0, 0.0)

    truth = [Origin.id_class(0)] * 7 + [Origin.ood_class(0)] * 2 + [Origin.background()]
    stats = pseudo_stats([PseudoLabel(i, 0, 0.9) for i in range(10)], truth, 14)
    assert (stats.n_pseudo_id, stats.n_pseudo_ood) == (7, 3)
    assert stats.fp_rate == pytest.approx(0.3)
    assert stats.id_recall == pytest.approx(0.5)
    assert stats.fp_rate == stats.n_pseudo_ood / stats.n_pseudo


def test_pseudo_stats_errors():
    with pytest.raises(ValueError):
        pseudo_stats([PseudoLabel(3, 0, 0.9)], [Origin.id_class(0)], 1)
    with pytest.raises(ValueError):
        pseudo_stats([PseudoLabel(0, 0, 0.9)], [Origin.id_class(0)], 0)


# ---------------------------------------------------------------------------
# test_accuracy
# ---------------------------------------------------------------------------


def _balanced_test_set(k: int, per_class: int) -> list:
    rng = np.random.default_rng(6)
    return [
        Instance(rng.normal(size=2), Origin.id_class(c)) for c in range(k) for _ in range(per_class)
    ]


def test_constant_classifier_accuracy(make_logit_net):
    net = make_logit_net([5.0, 0.0, 0.0, 0.0])
    assert accuracy(net, _balanced_test_set(4, 5), 4) == 0.25


def test_oracle_classifier_accuracy():
    # class c sits at x = (c, 0) and the net scores -(x0 - c)^2 via hidden ReLU ramps
    test = [Instance(np.array([float(c), 0.0]), Origin.id_class(c)) for c in range(3)] * 4
    net = ClassifierParams(
        W1=np.array([[1.0, 0.0]]),
        b1=np.zeros(1),
        W2=np.array([[-1.0], [0.0], [1.0]]),
        b2=np.array([0.5, 0.0, -1.5]),
    )
    assert accuracy(net, test, 3) == 1.0


def test_accuracy_matches_enumerated_predictions():
    rng = np.random.default_rng(7)
    net = ClassifierParams(
        rng.normal(size=(5, 2)), np.zeros(5), rng.normal(size=(3, 5)), np.zeros(3)
    )
    test = [Instance(rng.normal(size=2), Origin.id_class(int(rng.integers(3)))) for _ in range(20)]
    hits = 0
    for item in test:
        hidden = np.maximum(net.W1 @ item.features, 0.0)
        hits += int(np.argmax(net.W2 @ hidden) == item.origin.index)
    assert accuracy(net, test, 3) == hits / 20


def test_accuracy_rejects_ood_instances(make_logit_net):
    test = [Instance(np.zeros(2), Origin.ood_class(0))]
    with pytest.raises(ValueError):
        accuracy(make_logit_net([1.0, 0.0]), test, 2)
