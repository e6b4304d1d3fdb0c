"""
Model bundles: a directory holding the network matrices as OSSD files, the
optional class statistics, and a ``model.json`` manifest.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from ..exceptions import DataFormatError, NumericalError
from ..models.network_models import PARAM_NAMES, ClassifierParams
from ..models.score_models import ClassStats, FeatureSource
from .embedding_store import decode_binary, encode_binary

logger = structlog.get_logger(__name__)

MANIFEST_NAME = "model.json"

PathLike = Union[str, Path]


class ModelManifest(BaseModel):
    """Contents of ``model.json``."""
    model_config = ConfigDict(extra="forbid")

    format_version: int = 1
    k: int = Field(ge=1)
    n_inputs: int = Field(ge=1)
    n_hidden: int = Field(ge=1)
    n_outputs: int = Field(ge=1)
    has_stats: bool = False
    shrinkage: Optional[float] = None
    feature_source: FeatureSource = FeatureSource.HIDDEN


@dataclass(frozen=True)
class ModelBundle:
    """A scoring network, its ID class count and optional class statistics."""
    net: ClassifierParams
    k: int
    stats: Optional[ClassStats] = None
    feature_source: FeatureSource = FeatureSource.HIDDEN


def _write_matrix(path: Path, array: np.ndarray) -> None:
    path.write_bytes(encode_binary(np.atleast_2d(array)))


def _read_matrix(path: Path) -> np.ndarray:
    try:
        return decode_binary(path.read_bytes())
    except OSError as exc:
        raise DataFormatError(f"cannot read {path}: {exc.strerror}") from exc


def save_model(directory: PathLike, bundle: ModelBundle) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, array in zip(PARAM_NAMES, bundle.net.arrays()):
        _write_matrix(directory / f"{name}.ossd", array)
    if bundle.stats is not None:
        _write_matrix(directory / "means.ossd", bundle.stats.means)
        _write_matrix(directory / "cov.ossd", bundle.stats.pooled_cov)
    manifest = ModelManifest(
        k=bundle.k,
        n_inputs=bundle.net.n_inputs,
        n_hidden=bundle.net.n_hidden,
        n_outputs=bundle.net.n_outputs,
        has_stats=bundle.stats is not None,
        shrinkage=None if bundle.stats is None else bundle.stats.shrinkage,
        feature_source=bundle.feature_source,
    )
    (directory / MANIFEST_NAME).write_text(manifest.model_dump_json(indent=2) + "\n")
    logger.info("model_saved", path=str(directory), has_stats=manifest.has_stats)
    return directory


def load_model(directory: PathLike) -> ModelBundle:
    """Load a bundle; matrices are stored as float32 and come back as float64."""
    directory = Path(directory)
    try:
        manifest = ModelManifest.model_validate_json((directory / MANIFEST_NAME).read_text())
    except OSError as exc:
        raise DataFormatError(f"cannot read {directory / MANIFEST_NAME}: {exc.strerror}") from exc
    except ValidationError as exc:
        raise DataFormatError(f"invalid {MANIFEST_NAME}: {exc.errors()[0]['msg']}") from exc

    W1, b1, W2, b2 = (_read_matrix(directory / f"{name}.ossd") for name in PARAM_NAMES)
    try:
        net = ClassifierParams(W1=W1, b1=b1.reshape(-1), W2=W2, b2=b2.reshape(-1))
    except ValueError as exc:
        raise DataFormatError(f"inconsistent network matrices: {exc}") from exc
    if (net.n_inputs, net.n_hidden, net.n_outputs) != (
        manifest.n_inputs,
        manifest.n_hidden,
        manifest.n_outputs,
    ):
        raise DataFormatError("network matrices do not match the manifest")
    if manifest.n_outputs not in (manifest.k, manifest.k + 1):
        raise DataFormatError(f"{manifest.n_outputs} outputs cannot serve K={manifest.k}")

    stats = None
    if manifest.has_stats:
        means = _read_matrix(directory / "means.ossd")
        cov = _read_matrix(directory / "cov.ossd")
        if cov.shape != (means.shape[1], means.shape[1]):
            raise DataFormatError(
                f"covariance shape {cov.shape} does not match means {means.shape}"
            )
        cov = (cov + cov.T) / 2.0
        try:
            precision = np.linalg.inv(cov)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"stored covariance is singular: {exc}") from exc
        stats = ClassStats(
            means=means,
            pooled_cov=cov,
            shrinkage=manifest.shrinkage or 0.0,
            precision=(precision + precision.T) / 2.0,
        )
    return ModelBundle(net=net, k=manifest.k, stats=stats, feature_source=manifest.feature_source)
