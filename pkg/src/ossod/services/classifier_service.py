"""
One-hidden-layer softmax classifier with hand-derived gradients.

Stands in both for the detector's classification head (C = K outputs) and for
the offline OOD network (C = K + 1 outputs, the last one being abstention).
Every function is pure; parameters are immutable values and training builds
new ones. All arithmetic is 64-bit.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from scipy.special import log_softmax, softmax as _scipy_softmax

from ..exceptions import NumericalError
from ..models.network_models import ClassifierParams, ForwardResult, TeacherStudent

SeedLike = Union[int, Sequence[int]]


@dataclass(frozen=True)
class Batch:
    """Training examples: features (n x d), integer targets and non-negative weights."""
    features: np.ndarray
    targets: np.ndarray
    weights: np.ndarray

    @classmethod
    def build(
        cls,
        features: np.ndarray,
        targets: Sequence[int] | np.ndarray,
        weights: Optional[Sequence[float] | np.ndarray | float] = None,
    ) -> "Batch":
        x = np.atleast_2d(np.asarray(features, dtype=np.float64))
        y = np.asarray(targets, dtype=np.int64).reshape(-1)
        if weights is None:
            w = np.ones(len(y))
        else:
            w = np.broadcast_to(np.asarray(weights, dtype=np.float64), y.shape).copy()
        return cls(x, y, w)

    def __len__(self) -> int:
        return int(self.targets.shape[0])


def init_params(
    d: int, hidden: int, n_outputs: int, seed: SeedLike, scale: float = 0.3
) -> ClassifierParams:
    """Weights i.i.d. uniform in [-scale, scale], biases zero."""
    if min(d, hidden, n_outputs) < 1:
        raise ValueError(f"dimensions must be >= 1, got d={d}, H={hidden}, C={n_outputs}")
    if not scale > 0:
        raise ValueError(f"scale must be > 0, got {scale}")
    rng = np.random.default_rng(seed)
    return ClassifierParams(
        W1=rng.uniform(-scale, scale, size=(hidden, d)),
        b1=np.zeros(hidden),
        W2=rng.uniform(-scale, scale, size=(n_outputs, hidden)),
        b2=np.zeros(n_outputs),
    )


def forward(params: ClassifierParams, x: np.ndarray) -> ForwardResult:
    """Logits and hidden activations for one vector or a batch of row vectors."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != params.n_inputs or x.ndim not in (1, 2):
        raise ValueError(f"expected input of dimension {params.n_inputs}, got shape {x.shape}")
    hidden = np.maximum(x @ params.W1.T + params.b1, 0.0)
    logits = hidden @ params.W2.T + params.b2
    return ForwardResult(logits=logits, hidden=hidden)


def softmax(logits: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    """Temperature softmax over the last axis, max-shifted for stability."""
    if not temperature > 0:
        raise ValueError(f"temperature must be > 0, got {temperature}")
    return _scipy_softmax(np.asarray(logits, dtype=np.float64) / temperature, axis=-1)


def ce_loss_and_grad(params: ClassifierParams, batch: Batch) -> tuple[float, ClassifierParams]:
    """Weighted mean cross-entropy ``sum(w_i * nll_i) / n`` and its exact gradient."""
    n = len(batch)
    if n == 0:
        raise ValueError("batch must not be empty")
    if np.any(batch.targets < 0) or np.any(batch.targets >= params.n_outputs):
        raise ValueError(f"targets must lie in [0, {params.n_outputs})")
    if np.any(batch.weights < 0):
        raise ValueError("weights must be non-negative")

    x = batch.features
    pre = x @ params.W1.T + params.b1
    hidden = np.maximum(pre, 0.0)
    logits = hidden @ params.W2.T + params.b2

    rows = np.arange(n)
    log_probs = log_softmax(logits, axis=1)
    loss = float(-np.sum(batch.weights * log_probs[rows, batch.targets]) / n)
    if not np.isfinite(loss):
        raise NumericalError(f"non-finite loss {loss}")

    dlogits = np.exp(log_probs)
    dlogits[rows, batch.targets] -= 1.0
    dlogits *= (batch.weights / n)[:, None]

    dW2 = dlogits.T @ hidden
    db2 = dlogits.sum(axis=0)
    dpre = (dlogits @ params.W2) * (pre > 0.0)
    dW1 = dpre.T @ x
    db1 = dpre.sum(axis=0)
    return loss, ClassifierParams(W1=dW1, b1=db1, W2=dW2, b2=db2)


def add_grads(
    first: ClassifierParams, second: ClassifierParams, scale: float = 1.0
) -> ClassifierParams:
    """``first + scale * second``."""
    return first.map(lambda a, b: a + scale * b, second)


def sgd_step(params: ClassifierParams, grads: ClassifierParams, eta: float) -> ClassifierParams:
    """``params - eta * grads``; raises NumericalError if the step overflows."""
    if not eta > 0:
        raise ValueError(f"eta must be > 0, got {eta}")
    return params.map(lambda p, g: p - eta * g, grads)


def momentum_step(
    params: ClassifierParams,
    grads: ClassifierParams,
    velocity: ClassifierParams,
    eta: float,
    momentum: float,
) -> tuple[ClassifierParams, ClassifierParams]:
    """Heavy-ball SGD: ``v <- momentum * v + g``, ``p <- p - eta * v``."""
    new_velocity = velocity.map(lambda v, g: momentum * v + g, grads)
    return sgd_step(params, new_velocity, eta), new_velocity


def ema_update(ts: TeacherStudent) -> TeacherStudent:
    """``teacher <- alpha * teacher + (1 - alpha) * student``; the student is untouched."""
    alpha = ts.alpha
    teacher = ts.teacher.map(lambda t, s: alpha * t + (1.0 - alpha) * s, ts.student)
    return TeacherStudent(teacher=teacher, student=ts.student, alpha=alpha)


def detector_probs(logits: np.ndarray, k: int, temperature: float = 1.0) -> np.ndarray:
    """Softmax over the first ``k`` outputs, i.e. the C-way softmax renormalised over them."""
    logits = np.asarray(logits, dtype=np.float64)
    if k < 1 or k > logits.shape[-1]:
        raise ValueError(f"k={k} must lie in [1, {logits.shape[-1]}]")
    return softmax(logits[..., :k], temperature)


def predict(
    params: ClassifierParams, x: np.ndarray, k: Optional[int] = None
) -> tuple[np.ndarray | int, np.ndarray | float]:
    """Detector class (argmax over the first ``k`` outputs, lowest index on ties) and confidence.

    Returns scalars for a single vector and arrays for a batch.
    """
    k = params.n_outputs if k is None else k
    if k > params.n_outputs:
        raise ValueError(f"k={k} exceeds the network's {params.n_outputs} outputs")
    probs = detector_probs(forward(params, x).logits, k)
    classes = np.argmax(probs, axis=-1)
    confidence = np.max(probs, axis=-1)
    if probs.ndim == 1:
        return int(classes), float(confidence)
    return classes, confidence


def mean_loss(params: ClassifierParams, features: np.ndarray, targets: np.ndarray) -> float:
    """Unweighted cross-entropy of a whole labeled set."""
    loss, _ = ce_loss_and_grad(params, Batch.build(features, targets))
    return loss
