"""
Command implementations behind the ``ossod`` CLI.

Each function takes resolved arguments, returns CSV text or writes files, and
raises OssodError subclasses for anything the user can fix. Nothing here
touches the terminal.
"""
from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import structlog

from ..config.run_spec import RunSpec
from ..exceptions import ConfigError, DataFormatError, NumericalError, OssodError
from ..models.data_models import Instance, Scenario
from ..models.network_models import ClassifierParams
from ..models.score_models import ClassStats, OodReport, ScoreKind, ScoringOptions
from ..models.training_models import PipelineMode, PipelineResult, Telemetry
from ..services.metrics_service import ood_report
from ..services.ood_score_service import fit_stats_for_net, score_batch
from ..services.pipeline_service import evaluate_score_kinds, run_pipeline
from ..services.score_functions import energy_score, entropy_score, iac_score, msp_score
from ..services.synthdata_service import generate_scenario
from ..services.training_service import train_offline_ood
from ..storage.embedding_store import (
    EmbeddingMatrix,
    Format,
    format_float,
    read_embeddings,
    write_embeddings,
)
from ..storage.model_store import ModelBundle, load_model, save_model

logger = structlog.get_logger(__name__)

SCORE_HEADER = ("index", "score")
EVAL_HEADER = ("auroc", "fpr50", "fpr75", "fpr95")
REPORT_HEADER = ("kind", "population") + EVAL_HEADER
AGGREGATE_HEADER = ("mode", "seed", "final_fp_rate", "final_test_acc", "final_ood_auroc")
FAILURE_HEADER = ("mode", "seed", "error")

POPULATION_OOD = "ood"
POPULATION_OOD_AND_BACKGROUND = "ood_and_background"

TELEMETRY_FILE = "telemetry.csv"
SUMMARY_FILE = "summary.csv"
REPORT_FILE = "ood_report.csv"
PSEUDO_LABEL_FILE = "pseudo_labels.csv"
AGGREGATE_FILE = "aggregate.csv"
FAILURE_FILE = "failures.csv"


def _csv_text(header: Sequence[str], rows: Sequence[Sequence[object]]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return out.getvalue()


def _write_text(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8", newline="")


# ---------------------------------------------------------------------------
# score / eval
# ---------------------------------------------------------------------------


def _score_without_model(kind: ScoreKind, rows: np.ndarray, temperature: float) -> np.ndarray:
    if kind.needs_stats:
        raise ConfigError(f"{kind.value} scores need a model bundle with class statistics")
    try:
        if kind is ScoreKind.ENERGY:
            return np.atleast_1d(energy_score(rows, temperature))
        if kind is ScoreKind.MSP:
            return np.atleast_1d(msp_score(rows))
        if kind is ScoreKind.IAC:
            return np.atleast_1d(iac_score(rows, rows.shape[1] - 1))
        return np.atleast_1d(entropy_score(rows))
    except ValueError as exc:
        raise DataFormatError(f"rows are not valid {kind.value} inputs: {exc}") from exc


def _score_with_model(
    kind: ScoreKind, rows: np.ndarray, bundle: ModelBundle, temperature: float
) -> np.ndarray:
    if kind.needs_stats and bundle.stats is None:
        raise ConfigError(f"{kind.value} scores need class statistics, the model has none")
    if kind is ScoreKind.IAC and bundle.net.n_outputs != bundle.k + 1:
        raise ConfigError("iac scores need a model with an abstention output")
    if rows.shape[1] != bundle.net.n_inputs:
        raise DataFormatError(
            f"embeddings have {rows.shape[1]} columns, the model expects {bundle.net.n_inputs}"
        )
    options = ScoringOptions(temperature=temperature, feature_source=bundle.feature_source)
    return score_batch(kind, rows, bundle.net, bundle.stats, options, k=bundle.k)


def run_score(
    embeddings: Path,
    kind: ScoreKind,
    model: Optional[Path] = None,
    temperature: float = 1.0,
) -> str:
    """``index,score`` CSV for every row of ``embeddings``, in input order.

    Without a model the rows are read as probability vectors (msp, iac,
    entropy) or logits (energy).
    """
    kind = ScoreKind(kind)
    matrix = read_embeddings(embeddings)
    if matrix.rows == 0:
        return _csv_text(SCORE_HEADER, [])
    if model is None:
        scores = _score_without_model(kind, matrix.values, temperature)
    else:
        scores = _score_with_model(kind, matrix.values, load_model(model), temperature)
    return _csv_text(SCORE_HEADER, [(i, format_float(s)) for i, s in enumerate(scores)])


def read_scores(path: Path) -> np.ndarray:
    """Scores from an ``index,score`` CSV or from a file with one number per line."""
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except (OSError, UnicodeDecodeError) as exc:
        raise DataFormatError(f"cannot read scores from {path}: {exc}") from exc

    with_index = bool(lines) and lines[0].strip() == ",".join(SCORE_HEADER)
    values: list[float] = []
    for line_no, line in enumerate(lines, start=1):
        if with_index and line_no == 1:
            continue
        if not line.strip():
            continue
        cell = line.split(",")[-1] if with_index else line
        try:
            values.append(float(cell))
        except ValueError:
            raise DataFormatError(f"non-numeric score {cell.strip()!r}", line=line_no) from None
    if not values:
        raise DataFormatError(f"{path} holds no scores")
    scores = np.array(values)
    if np.any(np.isnan(scores)):
        raise DataFormatError(f"{path} holds NaN scores")
    return scores


def report_row(report: OodReport) -> list[str]:
    """The ``auroc,fpr50,fpr75,fpr95`` cells of one report."""
    return [format_float(getattr(report, name)) for name in EVAL_HEADER]


def run_eval(id_scores: Path, ood_scores: Path) -> str:
    """One ``auroc,fpr50,fpr75,fpr95`` row."""
    report = ood_report(read_scores(id_scores), read_scores(ood_scores))
    return _csv_text(EVAL_HEADER, [report_row(report)])


# ---------------------------------------------------------------------------
# simulate / sweep
# ---------------------------------------------------------------------------


def telemetry_csv(telemetry: Telemetry) -> str:
    rows = [
        (
            record.iteration,
            record.n_pseudo_id,
            record.n_pseudo_ood,
            format_float(record.fp_rate),
            format_float(record.test_acc),
            format_float(record.ood_auroc),
        )
        for record in telemetry.records
    ]
    return _csv_text(Telemetry.HEADER.split(","), rows)


def pseudo_label_csv(telemetry: Telemetry) -> str:
    """Pseudo-label counts and ID recall at every checkpoint."""
    rows = [
        (
            record.iteration,
            record.n_pseudo_id,
            record.n_pseudo_ood,
            format_float(record.fp_rate),
            format_float(record.id_recall),
        )
        for record in telemetry.records
    ]
    return _csv_text(Telemetry.PSEUDO_HEADER.split(","), rows)


def _aggregate_row(
    mode: PipelineMode, seed: int, result: Optional[PipelineResult]
) -> tuple[object, ...]:
    if result is None:
        return (mode.value, seed, "", "", "")
    final = result.telemetry.final
    return (
        mode.value,
        seed,
        format_float(final.fp_rate),
        format_float(final.test_acc),
        format_float(final.ood_auroc),
    )


def _report_target(result: PipelineResult) -> ClassifierParams:
    if result.mode is PipelineMode.OFFLINE and result.offline_net is not None:
        return result.offline_net
    return result.teacher_student.teacher


def final_ood_report(
    result: PipelineResult, scenario: Scenario, spec: RunSpec
) -> dict[str, dict[ScoreKind, OodReport]]:
    """Score-kind comparison of the run's OOD detector on the scenario's probe set.

    Reported twice: against the probe's OOD instances alone, and with the
    scenario's background instances counted as OOD too.
    """
    net = _report_target(result)
    training = spec.training
    k = scenario.config.k
    stats: Optional[ClassStats] = result.offline_stats if net is result.offline_net else None
    if stats is None:
        x, y = scenario.labeled_arrays
        try:
            stats = fit_stats_for_net(
                net, x, y, training.shrinkage, training.feature_source, k
            )
        except (NumericalError, ValueError) as exc:
            logger.warning("class_stats_skipped", reason=str(exc))
    options = training.scoring_options
    return {
        POPULATION_OOD: evaluate_score_kinds(net, scenario.probe, k, stats, options),
        POPULATION_OOD_AND_BACKGROUND: evaluate_score_kinds(
            net, scenario.probe, k, stats, options, background=scenario.background
        ),
    }


def _write_run(
    out_dir: Path, mode: PipelineMode, spec: RunSpec, result: PipelineResult, scenario: Scenario
) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_text(out_dir / TELEMETRY_FILE, telemetry_csv(result.telemetry))
    _write_text(
        out_dir / SUMMARY_FILE,
        _csv_text(AGGREGATE_HEADER, [_aggregate_row(mode, spec.seed, result)]),
    )
    _write_text(out_dir / PSEUDO_LABEL_FILE, pseudo_label_csv(result.telemetry))
    populations = final_ood_report(result, scenario, spec)
    rows = [
        [kind.value, population] + report_row(report)
        for population, reports in populations.items()
        for kind, report in reports.items()
    ]
    _write_text(out_dir / REPORT_FILE, _csv_text(REPORT_HEADER, rows))


def run_simulate(spec: RunSpec, mode: PipelineMode, out_dir: Path) -> PipelineResult:
    """Generate the scenario for ``spec.seed``, run one pipeline and write its CSVs."""
    mode = PipelineMode(mode)
    scenario = generate_scenario(spec.scenario, spec.seed)
    result = run_pipeline(mode, spec.training, scenario)
    _write_run(Path(out_dir), mode, spec, result, scenario)
    return result


@dataclass(frozen=True)
class SweepOutcome:
    mode: PipelineMode
    seed: int
    result: Optional[PipelineResult]
    error: Optional[str] = None


def run_dir_name(mode: PipelineMode, seed: int) -> str:
    """Directory of one sweep run, e.g. ``offline-seed3``."""
    return f"{mode.value}-seed{seed}"


def _sweep_one(spec: RunSpec, mode: PipelineMode, seed: int, out_dir: Path) -> SweepOutcome:
    try:
        result = run_simulate(spec.with_seed(seed), mode, out_dir / run_dir_name(mode, seed))
    except (OssodError, ValueError, ArithmeticError) as exc:
        logger.error("sweep_run_failed", mode=mode.value, seed=seed, error=str(exc))
        return SweepOutcome(mode, seed, None, str(exc))
    return SweepOutcome(mode, seed, result)


def run_sweep(
    spec: RunSpec,
    modes: Sequence[PipelineMode],
    seeds: Sequence[int],
    out_dir: Path,
    workers: int = 1,
) -> Path:
    """Run every (mode, seed) pair and write the aggregate CSV.

    Rows follow the given mode order, then seed order, whatever order the runs
    finish in. A failing run keeps its row with empty metric cells, is listed
    with its error in the failures file, and does not stop its siblings.
    """
    if not modes:
        raise ConfigError("sweep needs at least one mode")
    if not seeds:
        raise ConfigError("sweep needs at least one seed")
    if workers < 1:
        raise ConfigError(f"workers must be >= 1, got {workers}", field="workers")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    pairs = [(PipelineMode(mode), seed) for mode in modes for seed in seeds]
    logger.info("sweep_started", runs=len(pairs), workers=workers)

    if workers == 1:
        outcomes = [_sweep_one(spec, mode, seed, out_dir) for mode, seed in pairs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(lambda pair: _sweep_one(spec, *pair, out_dir), pairs))

    rows = [_aggregate_row(o.mode, o.seed, o.result) for o in outcomes]
    aggregate = out_dir / AGGREGATE_FILE
    _write_text(aggregate, _csv_text(AGGREGATE_HEADER, rows))
    failures = [(o.mode.value, o.seed, o.error) for o in outcomes if o.result is None]
    if failures:
        _write_text(out_dir / FAILURE_FILE, _csv_text(FAILURE_HEADER, failures))
    logger.info(
        "sweep_finished",
        runs=len(pairs),
        failed=sum(o.result is None for o in outcomes),
    )
    return aggregate


# ---------------------------------------------------------------------------
# generate / fit
# ---------------------------------------------------------------------------


def _instances_matrix(instances: Sequence[Instance], dim: int, labeled: bool) -> EmbeddingMatrix:
    values = (
        np.stack([item.features for item in instances]) if instances else np.zeros((0, dim))
    )
    labels = None
    if labeled:
        labels = np.array([item.origin.index if item.origin.is_id else -1 for item in instances])
    return EmbeddingMatrix(values, labels)


def run_generate(spec: RunSpec, out_dir: Path, fmt: Format = "csv") -> dict[str, Path]:
    """Write the scenario's partitions as embedding files.

    Labeled, test and probe files carry a label column in CSV (-1 marks OOD
    probe rows); unlabeled and background files never do.
    """
    scenario = generate_scenario(spec.scenario, spec.seed)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    dim = scenario.config.d
    partitions = {
        "labeled": _instances_matrix(scenario.labeled_instances, dim, labeled=True),
        "unlabeled": _instances_matrix(scenario.unlabeled_instances, dim, labeled=False),
        "test": _instances_matrix(scenario.test, dim, labeled=True),
        "probe": _instances_matrix(scenario.probe, dim, labeled=True),
        "background": _instances_matrix(scenario.background, dim, labeled=False),
    }
    suffix = ".csv" if fmt == "csv" else ".ossd"
    written: dict[str, Path] = {}
    for name, matrix in partitions.items():
        path = out_dir / f"{name}{suffix}"
        write_embeddings(path, matrix, fmt)
        written[name] = path
    logger.info("scenario_written", path=str(out_dir), seed=spec.seed, fmt=fmt)
    return written


def run_fit(spec: RunSpec, out_dir: Path) -> ModelBundle:
    """Train the offline K + 1 detector for ``spec``'s scenario; save it with class statistics."""
    scenario = generate_scenario(spec.scenario, spec.seed)
    training = spec.training
    k = scenario.config.k
    x, y = scenario.labeled_arrays
    net = train_offline_ood(training, (x, y), scenario.background_features, k=k)
    stats = fit_stats_for_net(net, x, y, training.shrinkage, training.feature_source, k)
    bundle = ModelBundle(net=net, k=k, stats=stats, feature_source=training.feature_source)
    save_model(out_dir, bundle)
    return bundle
