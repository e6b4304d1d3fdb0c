"""
End-to-end self-training pipelines with checkpoint telemetry.

Phase order: supervised burn-in, teacher copied from the student, the offline
OOD detector (offline mode only), then ``iters_ssod`` self-training steps.
"""
from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np
import structlog

from ..exceptions import ConfigError
from ..models.data_models import Instance, OriginKind, Scenario, ScenarioConfig
from ..models.network_models import ClassifierParams
from ..models.score_models import ClassStats, OodReport, ScoreKind, ScoringOptions
from ..models.training_models import (
    PipelineMode,
    PipelineResult,
    SelfTrainConfig,
    Telemetry,
    TelemetryRecord,
    TrainingState,
)
from .metrics_service import auroc, ood_report, pseudo_stats, test_accuracy
from .ood_score_service import (
    fit_stats_for_net,
    ood_filter,
    resolve_delta_ood,
    score_batch,
)
from .scorer_registry import get_scorer_registry
from .training_service import (
    RngStream,
    initial_state,
    pseudo_label,
    sample_labeled_batch,
    sample_unlabeled_batch,
    ssod_step,
    stream_rng,
    train_offline_ood,
    train_supervised,
)

logger = structlog.get_logger(__name__)


def _split_probe(probe: Sequence[Instance]) -> np.ndarray:
    is_id = np.array([item.origin.is_id for item in probe], dtype=bool)
    if is_id.size == 0 or is_id.all() or not is_id.any():
        raise ValueError("probe set must contain both ID and OOD instances")
    return is_id


def probe_ood_auroc(
    net: ClassifierParams,
    probe: Sequence[Instance],
    kind: ScoreKind,
    k: int,
    stats: Optional[ClassStats] = None,
    options: ScoringOptions = ScoringOptions(),
) -> float:
    """AUROC of ``net`` separating the probe's ID instances from its OOD ones."""
    is_id = _split_probe(probe)
    scores = score_batch(kind, probe, net, stats, options, k=k)
    return auroc(scores[is_id], scores[~is_id])


def evaluate_score_kinds(
    net: ClassifierParams,
    probe: Sequence[Instance],
    k: int,
    stats: Optional[ClassStats] = None,
    options: ScoringOptions = ScoringOptions(),
    background: Optional[Sequence[Instance]] = None,
) -> dict[ScoreKind, OodReport]:
    """One report per score kind the network supports.

    IAC is skipped for networks without an abstention output, and distance
    kinds are skipped when no statistics are given. When ``background`` is
    given its instances join the probe's OOD side, so background counts as OOD.
    """
    is_id = _split_probe(probe)
    instances = list(probe) + list(background or ())
    is_id = np.concatenate([is_id, np.zeros(len(instances) - len(probe), dtype=bool)])
    reports: dict[ScoreKind, OodReport] = {}
    for kind in get_scorer_registry().kinds():
        if kind is ScoreKind.IAC and net.n_outputs != k + 1:
            continue
        if kind.needs_stats and stats is None:
            continue
        scores = score_batch(kind, instances, net, stats, options, k=k)
        reports[kind] = ood_report(scores[is_id], scores[~is_id])
    return reports


class _Checkpointer:
    """Computes telemetry records for one run."""

    def __init__(
        self,
        mode: PipelineMode,
        cfg: SelfTrainConfig,
        scenario: Scenario,
        pool_scores: Optional[np.ndarray],
        delta_ood: float,
    ) -> None:
        self.mode = mode
        self.cfg = cfg
        self.scenario = scenario
        self.k = scenario.config.k
        self.pool_scores = pool_scores
        self.delta_ood = delta_ood
        self.n_id_available = sum(
            origin.kind is OriginKind.ID_CLASS for origin in scenario.unlabeled_origins
        )
        self.telemetry = Telemetry()

    def _detector_auroc(self, teacher: ClassifierParams) -> float:
        if self.mode is not PipelineMode.ONLINE:
            return probe_ood_auroc(teacher, self.scenario.probe, ScoreKind.MSP, self.k)
        stats = None
        if self.cfg.score_kind.needs_stats:
            x, y = self.scenario.labeled_arrays
            stats = fit_stats_for_net(
                teacher, x, y, self.cfg.shrinkage, self.cfg.feature_source, self.k
            )
        return probe_ood_auroc(
            teacher,
            self.scenario.probe,
            self.cfg.score_kind,
            self.k,
            stats,
            self.cfg.scoring_options,
        )

    def record(self, iteration: int, teacher: ClassifierParams) -> TelemetryRecord:
        pseudo = pseudo_label(teacher, self.scenario.unlabeled_features, self.cfg.tau_conf, self.k)
        if self.pool_scores is not None and pseudo:
            refs = [label.instance_ref for label in pseudo]
            pseudo = ood_filter(pseudo, self.pool_scores[refs], self.delta_ood)
        quality = pseudo_stats(pseudo, self.scenario.unlabeled_origins, self.n_id_available)
        record = TelemetryRecord(
            iteration=iteration,
            n_pseudo_id=quality.n_pseudo_id,
            n_pseudo_ood=quality.n_pseudo_ood,
            fp_rate=quality.fp_rate,
            test_acc=test_accuracy(teacher, self.scenario.test, self.k),
            ood_auroc=self._detector_auroc(teacher),
            id_recall=quality.id_recall,
        )
        self.telemetry.append(record)
        logger.debug(
            "checkpoint_recorded",
            mode=self.mode.value,
            iteration=iteration,
            fp_rate=record.fp_rate,
            test_acc=record.test_acc,
            ood_auroc=record.ood_auroc,
        )
        return record


def _check_evaluable(config: ScenarioConfig) -> None:
    """Telemetry needs a test set and a probe set holding both ID and OOD instances."""
    for field, value in (
        ("n_test_per_class", config.n_test_per_class),
        ("n_probe_per_origin", config.n_probe_per_origin),
    ):
        if value < 1:
            raise ConfigError(f"pipelines need {field} >= 1, got {value}", field=field)


def checkpoint_iterations(iters_ssod: int, every: int) -> list[int]:
    """0, every multiple of ``every`` up to ``iters_ssod``, and ``iters_ssod`` itself."""
    points = list(range(0, iters_ssod + 1, every))
    if points[-1] != iters_ssod:
        points.append(iters_ssod)
    return points


def run_pipeline(
    mode: PipelineMode, cfg: SelfTrainConfig, scenario: Scenario
) -> PipelineResult:
    """Run one pipeline; (mode, cfg, scenario) fixes the result bit for bit."""
    mode = PipelineMode(mode)
    _check_evaluable(scenario.config)
    k = scenario.config.k
    x, y = scenario.labeled_arrays
    background = scenario.background_features
    log = logger.bind(mode=mode.value, seed=cfg.seed, scenario_seed=scenario.seed)
    log.info("pipeline_started", iters_ssod=cfg.iters_ssod, score_kind=cfg.score_kind.value)

    online_background = background if mode is PipelineMode.ONLINE else None
    burn_in = train_supervised(cfg, (x, y), k=k, background=online_background)

    ood_net: Optional[ClassifierParams] = None
    stats: Optional[ClassStats] = None
    delta_ood = -math.inf
    pool_scores: Optional[np.ndarray] = None
    offline_auroc: Optional[float] = None
    if mode is PipelineMode.OFFLINE:
        options = cfg.scoring_options
        ood_net = train_offline_ood(cfg, (x, y), background, k=k)
        if cfg.score_kind.needs_stats:
            stats = fit_stats_for_net(ood_net, x, y, cfg.shrinkage, cfg.feature_source, k)
        id_scores = score_batch(cfg.score_kind, x, ood_net, stats, options)
        delta_ood = resolve_delta_ood(cfg.score_kind, cfg.delta_ood, id_scores, cfg.target_tnr)
        pool_scores = score_batch(
            cfg.score_kind, scenario.unlabeled_features, ood_net, stats, options
        )
        offline_auroc = probe_ood_auroc(ood_net, scenario.probe, cfg.score_kind, k, stats, options)
        log.info("offline_detector_trained", delta_ood=delta_ood, probe_auroc=offline_auroc)

    state: TrainingState = initial_state(burn_in, cfg, k, ood_net, stats, delta_ood)
    checkpointer = _Checkpointer(mode, cfg, scenario, pool_scores, delta_ood)
    checkpoints = set(checkpoint_iterations(cfg.iters_ssod, cfg.checkpoint_every))
    checkpointer.record(0, state.ts.teacher)

    labeled_rng = stream_rng(cfg.seed, RngStream.SSOD_LABELED)
    unlabeled_rng = stream_rng(cfg.seed, RngStream.SSOD_UNLABELED)
    jitter_rng = stream_rng(cfg.seed, RngStream.JITTER)
    background_rng = stream_rng(cfg.seed, RngStream.SSOD_BACKGROUND)
    pool = scenario.unlabeled_features
    for iteration in range(1, cfg.iters_ssod + 1):
        labeled = sample_labeled_batch(
            labeled_rng, x, y, cfg.batch_labeled, online_background, background_rng
        )
        unlabeled = sample_unlabeled_batch(
            unlabeled_rng, jitter_rng, pool, cfg.batch_unlabeled, cfg.sigma_aug
        )
        state = ssod_step(state, labeled, unlabeled, cfg, mode)
        if iteration in checkpoints:
            checkpointer.record(iteration, state.ts.teacher)

    final = checkpointer.telemetry.final
    log.info(
        "pipeline_finished",
        fp_rate=final.fp_rate,
        test_acc=final.test_acc,
        ood_auroc=final.ood_auroc,
    )
    return PipelineResult(
        mode=mode,
        teacher_student=state.ts,
        telemetry=checkpointer.telemetry,
        burn_in=burn_in,
        offline_net=ood_net,
        offline_stats=stats,
        delta_ood=delta_ood if mode is PipelineMode.OFFLINE else None,
        offline_auroc=offline_auroc,
    )
