"""
Training phases: supervised burn-in, the offline K + 1 OOD detector, teacher
pseudo-labeling and one self-training iteration.

Every source of randomness is its own PCG64 stream derived from
``[cfg.seed, stream]`` so that mode-specific work (OOD training, background
batches) never shifts the draws the modes share.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import IntEnum
from typing import Optional, Sequence, Union

import numpy as np
import structlog

from ..exceptions import NumericalError
from ..models.data_models import Bag, Instance
from ..models.network_models import ClassifierParams, TeacherStudent
from ..models.score_models import ClassStats, PseudoLabel
from ..models.training_models import PipelineMode, SelfTrainConfig, TrainingState
from .classifier_service import (
    Batch,
    add_grads,
    ce_loss_and_grad,
    ema_update,
    init_params,
    momentum_step,
    predict,
    sgd_step,
)
from .ood_score_service import ood_filter, score_batch

logger = structlog.get_logger(__name__)

LabeledInput = Union[Sequence[Bag], tuple[np.ndarray, np.ndarray]]
FeatureInput = Union[Sequence[Instance], np.ndarray]


class RngStream(IntEnum):
    """Stream ids appended to the run seed."""
    DETECTOR_INIT = 10
    BURN_IN = 11
    BURN_IN_BACKGROUND = 12
    OOD_INIT = 13
    OOD_BATCHES = 14
    SSOD_LABELED = 15
    SSOD_UNLABELED = 16
    JITTER = 17
    SSOD_BACKGROUND = 18


def stream_rng(seed: int, stream: RngStream) -> np.random.Generator:
    return np.random.default_rng([seed, int(stream)])


@dataclass(frozen=True)
class LabeledBatch:
    """Labeled foreground rows plus, in online mode, background rows (target K)."""
    features: np.ndarray
    targets: np.ndarray
    background: Optional[np.ndarray] = None


@dataclass(frozen=True)
class UnlabeledBatch:
    """Clean unlabeled rows, their jittered student view, and their pool indices."""
    features: np.ndarray
    jittered: np.ndarray
    refs: np.ndarray

    def __len__(self) -> int:
        return int(self.features.shape[0])


def labeled_arrays(labeled: LabeledInput) -> tuple[np.ndarray, np.ndarray]:
    """Features and class ids of a labeled set given as bags or as ``(X, y)``."""
    if isinstance(labeled, tuple) and len(labeled) == 2 and isinstance(labeled[0], np.ndarray):
        x, y = labeled
        return np.atleast_2d(np.asarray(x, dtype=np.float64)), np.asarray(y, dtype=np.int64)
    items = [item for bag in labeled for item in bag.instances]  # type: ignore[union-attr]
    if not items:
        return np.zeros((0, 0)), np.zeros(0, dtype=np.int64)
    if any(not item.origin.is_id for item in items):
        raise ValueError("labeled bags must contain ID instances only")
    x = np.stack([item.features for item in items])
    y = np.array([item.origin.index for item in items], dtype=np.int64)
    return x, y


def _feature_matrix(instances: FeatureInput) -> np.ndarray:
    if isinstance(instances, np.ndarray):
        return np.atleast_2d(instances.astype(np.float64))
    if len(instances) == 0:
        return np.zeros((0, 0))
    return np.stack([item.features for item in instances])


def sample_rows(rng: np.random.Generator, n_rows: int, size: int) -> np.ndarray:
    """Row indices drawn uniformly with replacement."""
    if n_rows == 0:
        return np.zeros(0, dtype=np.int64)
    return rng.integers(0, n_rows, size=size)


def sample_labeled_batch(
    rng: np.random.Generator,
    x: np.ndarray,
    y: np.ndarray,
    size: int,
    background: Optional[np.ndarray] = None,
    background_rng: Optional[np.random.Generator] = None,
) -> LabeledBatch:
    rows = sample_rows(rng, x.shape[0], size)
    bg = None
    if background is not None:
        if background_rng is None:
            raise ValueError("background rows need their own generator")
        bg = background[sample_rows(background_rng, background.shape[0], size)]
    return LabeledBatch(features=x[rows], targets=y[rows], background=bg)


def sample_unlabeled_batch(
    rng: np.random.Generator,
    jitter_rng: np.random.Generator,
    pool: np.ndarray,
    size: int,
    sigma: float,
) -> UnlabeledBatch:
    refs = sample_rows(rng, pool.shape[0], size)
    features = pool[refs]
    noise = jitter_rng.normal(0.0, 1.0, size=features.shape)
    return UnlabeledBatch(features=features, jittered=features + sigma * noise, refs=refs)


def _step(
    params: ClassifierParams,
    grads: ClassifierParams,
    velocity: Optional[ClassifierParams],
    cfg: SelfTrainConfig,
) -> tuple[ClassifierParams, Optional[ClassifierParams]]:
    if cfg.momentum > 0:
        velocity = ClassifierParams.zeros_like(params) if velocity is None else velocity
        return momentum_step(params, grads, velocity, cfg.eta, cfg.momentum)
    return sgd_step(params, grads, cfg.eta), None


def _check_loss(loss: float, phase: str, iteration: int) -> None:
    if not math.isfinite(loss):
        raise NumericalError(f"non-finite loss during {phase} at iteration {iteration}")


def _abstention_rows(features: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    return features, np.full(features.shape[0], k, dtype=np.int64)


def train_supervised(
    cfg: SelfTrainConfig,
    labeled: LabeledInput,
    k: Optional[int] = None,
    background: Optional[FeatureInput] = None,
) -> ClassifierParams:
    """Supervised burn-in of the detector.

    With ``background`` the network gets K + 1 outputs and every step also adds
    ``lambda_ood`` times the cross-entropy of labeled foreground and a
    background batch (target K), so the online abstention head starts trained.
    """
    x, y = labeled_arrays(labeled)
    if x.shape[0] == 0:
        raise ValueError("labeled set must not be empty")
    k = int(y.max()) + 1 if k is None else k
    bg = None if background is None else _feature_matrix(background)
    if bg is not None and bg.shape[0] == 0:
        raise ValueError("background must not be empty")
    n_outputs = k if bg is None else k + 1

    params = init_params(
        x.shape[1],
        cfg.hidden_width,
        n_outputs,
        seed=[cfg.seed, int(RngStream.DETECTOR_INIT)],
        scale=cfg.init_scale,
    )
    rng = stream_rng(cfg.seed, RngStream.BURN_IN)
    bg_rng = stream_rng(cfg.seed, RngStream.BURN_IN_BACKGROUND)
    velocity: Optional[ClassifierParams] = None
    loss = math.nan
    for iteration in range(cfg.iters_supervised):
        batch = sample_labeled_batch(rng, x, y, cfg.batch_labeled, bg, bg_rng)
        loss, grads = ce_loss_and_grad(params, Batch.build(batch.features, batch.targets))
        if batch.background is not None and cfg.lambda_ood > 0:
            bg_x, bg_y = _abstention_rows(batch.background, k)
            ood_loss, ood_grads = ce_loss_and_grad(
                params,
                Batch.build(
                    np.concatenate([batch.features, bg_x]), np.concatenate([batch.targets, bg_y])
                ),
            )
            loss += cfg.lambda_ood * ood_loss
            grads = add_grads(grads, ood_grads, cfg.lambda_ood)
        _check_loss(loss, "burn-in", iteration)
        params, velocity = _step(params, grads, velocity, cfg)

    logger.debug(
        "burn_in_finished", iterations=cfg.iters_supervised, n_outputs=n_outputs, last_loss=loss
    )
    return params


def train_offline_ood(
    cfg: SelfTrainConfig,
    labeled: LabeledInput,
    background: FeatureInput,
    k: Optional[int] = None,
) -> ClassifierParams:
    """Train a fresh K + 1 network on labeled foreground vs background, 1:1 per batch.

    The returned network is the frozen offline OOD detector.
    """
    bg = _feature_matrix(background)
    if bg.shape[0] == 0:
        raise ValueError("background must not be empty")
    x, y = labeled_arrays(labeled)
    if x.shape[0] == 0:
        raise ValueError("labeled set must not be empty")
    k = int(y.max()) + 1 if k is None else k

    params = init_params(
        x.shape[1],
        cfg.hidden_width,
        k + 1,
        seed=[cfg.seed, int(RngStream.OOD_INIT)],
        scale=cfg.init_scale,
    )
    rng = stream_rng(cfg.seed, RngStream.OOD_BATCHES)
    velocity: Optional[ClassifierParams] = None
    loss = math.nan
    for iteration in range(cfg.iters_ood):
        fg_rows = sample_rows(rng, x.shape[0], cfg.batch_labeled)
        bg_x, bg_y = _abstention_rows(bg[sample_rows(rng, bg.shape[0], cfg.batch_labeled)], k)
        batch = Batch.build(
            np.concatenate([x[fg_rows], bg_x]), np.concatenate([y[fg_rows], bg_y])
        )
        loss, grads = ce_loss_and_grad(params, batch)
        _check_loss(loss, "offline OOD training", iteration)
        params, velocity = _step(params, grads, velocity, cfg)

    logger.debug("offline_ood_trained", iterations=cfg.iters_ood, last_loss=loss)
    return params


def pseudo_label(
    teacher: ClassifierParams,
    batch: FeatureInput,
    tau_conf: float,
    k: Optional[int] = None,
) -> list[PseudoLabel]:
    """Teacher predictions on clean features, kept when confidence >= ``tau_conf``.

    ``instance_ref`` is the row position within ``batch``.
    """
    features = _feature_matrix(batch)
    if features.shape[0] == 0:
        return []
    classes, confidence = predict(teacher, features, k)
    return [
        PseudoLabel(instance_ref=int(i), klass=int(classes[i]), confidence=float(confidence[i]))
        for i in np.flatnonzero(confidence >= tau_conf)
    ]


def initial_state(
    burn_in: ClassifierParams,
    cfg: SelfTrainConfig,
    k: int,
    ood_net: Optional[ClassifierParams] = None,
    stats: Optional[ClassStats] = None,
    delta_ood: float = -math.inf,
) -> TrainingState:
    """Teacher and student both start as the burn-in parameters."""
    return TrainingState(
        ts=TeacherStudent(teacher=burn_in, student=burn_in, alpha=cfg.alpha),
        k=k,
        ood_net=ood_net,
        stats=stats,
        delta_ood=delta_ood,
    )


def _check_mode(state: TrainingState, mode: PipelineMode, cfg: SelfTrainConfig) -> None:
    outputs = state.ts.student.n_outputs
    if mode is PipelineMode.ONLINE:
        if outputs != state.k + 1:
            raise ValueError(f"online mode needs a K + 1 detector, got {outputs} outputs")
        return
    if outputs != state.k:
        raise ValueError(f"{mode.value} mode needs a K-output detector, got {outputs} outputs")
    if mode is PipelineMode.OFFLINE:
        if state.ood_net is None:
            raise ValueError("offline mode needs a frozen OOD network")
        if cfg.score_kind.needs_stats and state.stats is None:
            raise ValueError(f"{cfg.score_kind.value} filtering needs class statistics")


def ssod_step(
    state: TrainingState,
    labeled: LabeledBatch,
    unlabeled: UnlabeledBatch,
    cfg: SelfTrainConfig,
    mode: PipelineMode,
) -> TrainingState:
    """One self-training iteration: pseudo-label, filter, student SGD step, EMA."""
    mode = PipelineMode(mode)
    _check_mode(state, mode, cfg)
    teacher, student = state.ts.teacher, state.ts.student
    k = state.k

    thresholded = pseudo_label(teacher, unlabeled.features, cfg.tau_conf, k)
    survivors = thresholded
    if mode is PipelineMode.OFFLINE and thresholded:
        assert state.ood_net is not None
        refs = [label.instance_ref for label in thresholded]
        scores = score_batch(
            cfg.score_kind,
            unlabeled.features[refs],
            state.ood_net,
            state.stats,
            cfg.scoring_options,
        )
        survivors = ood_filter(thresholded, scores, state.delta_ood)

    loss, grads = ce_loss_and_grad(student, Batch.build(labeled.features, labeled.targets))

    rows = [label.instance_ref for label in survivors]
    pseudo_targets = np.array([label.klass for label in survivors], dtype=np.int64)
    if cfg.lambda_unsup > 0 and survivors:
        unsup_loss, unsup_grads = ce_loss_and_grad(
            student, Batch.build(unlabeled.jittered[rows], pseudo_targets)
        )
        loss += cfg.lambda_unsup * unsup_loss
        grads = add_grads(grads, unsup_grads, cfg.lambda_unsup)

    if mode is PipelineMode.ONLINE and cfg.lambda_ood > 0:
        if labeled.background is None:
            raise ValueError("online mode needs background rows in the labeled batch")
        bg_x, bg_y = _abstention_rows(labeled.background, k)
        ood_x = np.concatenate([labeled.features, bg_x, unlabeled.jittered[rows]])
        ood_y = np.concatenate([labeled.targets, bg_y, pseudo_targets])
        ood_loss, ood_grads = ce_loss_and_grad(student, Batch.build(ood_x, ood_y))
        loss += cfg.lambda_ood * ood_loss
        grads = add_grads(grads, ood_grads, cfg.lambda_ood)

    _check_loss(loss, "self-training", state.iteration)
    student, velocity = _step(student, grads, state.velocity, cfg)
    ts = ema_update(TeacherStudent(teacher=teacher, student=student, alpha=state.ts.alpha))
    return replace(
        state,
        ts=ts,
        velocity=velocity,
        iteration=state.iteration + 1,
        last_thresholded=tuple(thresholded),
        last_filtered=tuple(survivors),
    )
