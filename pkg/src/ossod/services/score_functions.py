"""
Single-input ID-ness scores.

Each function takes one vector (returns a float) or a batch of row vectors
(returns an array). Higher always means more in-distribution.
"""
from __future__ import annotations

from typing import Union

import numpy as np
from scipy.special import entr, logsumexp

from ..models.score_models import ClassStats

ScoreValue = Union[float, np.ndarray]

PROB_SUM_TOLERANCE = 1e-6


def _out(values: np.ndarray) -> ScoreValue:
    return float(values) if values.ndim == 0 else values


def _check_probs(probs: np.ndarray) -> np.ndarray:
    probs = np.asarray(probs, dtype=np.float64)
    if probs.shape[-1] == 0:
        raise ValueError("probability vector must not be empty")
    if np.any(probs < -PROB_SUM_TOLERANCE) or np.any(
        np.abs(probs.sum(axis=-1) - 1.0) > PROB_SUM_TOLERANCE
    ):
        raise ValueError("input is not a normalised probability vector")
    return probs


def msp_score(probs: np.ndarray) -> ScoreValue:
    """Maximum softmax probability over the K detector classes."""
    return _out(np.max(_check_probs(probs), axis=-1))


def iac_score(probs: np.ndarray, k: int) -> ScoreValue:
    """Inverse abstaining confidence ``1 - p_abstain`` over K + 1 outputs."""
    probs = _check_probs(probs)
    if probs.shape[-1] != k + 1:
        raise ValueError(f"expected {k + 1} probabilities (K + 1), got {probs.shape[-1]}")
    return _out(1.0 - probs[..., k])


def energy_score(logits: np.ndarray, temperature: float = 1.0) -> ScoreValue:
    """``T * log sum_i exp(f_i / T)`` over foreground logits.

    This is the negated free energy, so that confident ID inputs score high.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if logits.shape[-1] == 0:
        raise ValueError("logits must not be empty")
    if not temperature > 0:
        raise ValueError(f"temperature must be > 0, got {temperature}")
    return _out(temperature * logsumexp(logits / temperature, axis=-1))


def entropy_score(probs: np.ndarray) -> ScoreValue:
    """Negative Shannon entropy ``sum_i p_i log p_i`` with ``0 log 0 = 0``."""
    return _out(-np.sum(entr(_check_probs(probs)), axis=-1))


def _diffs(f: np.ndarray, stats: ClassStats) -> np.ndarray:
    f = np.asarray(f, dtype=np.float64)
    if f.shape[-1] != stats.dim:
        raise ValueError(f"feature dimension {f.shape[-1]} does not match statistics ({stats.dim})")
    return f[..., None, :] - stats.means


def mahalanobis_score(f: np.ndarray, stats: ClassStats) -> ScoreValue:
    """``max_k -(f - mu_k)^T Sigma^-1 (f - mu_k)``."""
    diffs = _diffs(f, stats)
    quad = np.einsum("...kp,pq,...kq->...k", diffs, stats.precision, diffs)
    return _out(np.max(-quad, axis=-1))


def euclidean_score(f: np.ndarray, stats: ClassStats) -> ScoreValue:
    """``-min_k ||f - mu_k||``."""
    return _out(-np.min(np.linalg.norm(_diffs(f, stats), axis=-1), axis=-1))
