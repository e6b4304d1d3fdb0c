"""
Embedding files: CSV with an ``f0..f{d-1}[,label]`` header, or OSSD binary.

OSSD layout: ASCII ``OSSD``, version byte 0x01, little-endian u32 rows,
little-endian u32 cols, then rows * cols little-endian float32 values in
row-major order.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
import structlog

from ..exceptions import DataFormatError

logger = structlog.get_logger(__name__)

MAGIC = b"OSSD"
VERSION = 0x01
HEADER_DTYPE = np.dtype([("rows", "<u4"), ("cols", "<u4")])
PAYLOAD_DTYPE = np.dtype("<f4")
HEADER_SIZE = len(MAGIC) + 1 + HEADER_DTYPE.itemsize
BINARY_SUFFIXES = {".ossd", ".bin"}

PathLike = Union[str, Path]
Format = Literal["csv", "binary"]


@dataclass(frozen=True, eq=False)
class EmbeddingMatrix:
    """A rows x cols matrix of finite reals with an optional integer label per row."""
    values: np.ndarray
    labels: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64, copy=True)
        if values.ndim != 2:
            raise DataFormatError(f"expected a matrix, got {values.ndim} dimensions")
        if not np.all(np.isfinite(values)):
            raise DataFormatError("embedding values must be finite")
        object.__setattr__(self, "values", values)
        if self.labels is not None:
            labels = np.array(self.labels, dtype=np.int64, copy=True).reshape(-1)
            if labels.shape[0] != values.shape[0]:
                raise DataFormatError(f"{labels.shape[0]} labels for {values.shape[0]} rows")
            object.__setattr__(self, "labels", labels)

    @property
    def rows(self) -> int:
        return int(self.values.shape[0])

    @property
    def cols(self) -> int:
        return int(self.values.shape[1])


def format_float(value: float) -> str:
    """Shortest round-trip decimal of a 64-bit real."""
    return repr(float(value))


def encode_binary(matrix: np.ndarray) -> bytes:
    values = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    rows, cols = values.shape
    header = np.array([(rows, cols)], dtype=HEADER_DTYPE).tobytes()
    return MAGIC + bytes([VERSION]) + header + values.astype(PAYLOAD_DTYPE).tobytes(order="C")


def decode_binary(data: bytes) -> np.ndarray:
    if len(data) < len(MAGIC) or data[: len(MAGIC)] != MAGIC:
        raise DataFormatError("bad magic: not an OSSD file")
    if len(data) < HEADER_SIZE:
        raise DataFormatError("truncated header")
    if data[len(MAGIC)] != VERSION:
        raise DataFormatError(f"unsupported OSSD version {data[len(MAGIC)]}")
    header = np.frombuffer(data, dtype=HEADER_DTYPE, count=1, offset=len(MAGIC) + 1)[0]
    rows, cols = int(header["rows"]), int(header["cols"])
    expected = rows * cols * PAYLOAD_DTYPE.itemsize
    payload = data[HEADER_SIZE:]
    if len(payload) < expected:
        raise DataFormatError(
            f"truncated payload: {rows}x{cols} needs {expected} bytes, found {len(payload)}"
        )
    if len(payload) > expected:
        raise DataFormatError(f"{len(payload) - expected} trailing bytes after payload")
    values = np.frombuffer(payload, dtype=PAYLOAD_DTYPE, count=rows * cols)
    return values.astype(np.float64).reshape(rows, cols)


def _parse_header(header: list[str]) -> tuple[int, bool]:
    names = [cell.strip() for cell in header]
    has_label = bool(names) and names[-1] == "label"
    features = names[:-1] if has_label else names
    expected = [f"f{i}" for i in range(len(features))]
    if not features or features != expected:
        raise DataFormatError(
            f"header must be f0,...,f{{d-1}} with an optional label column, got {','.join(names)}",
            line=1,
        )
    return len(features), has_label


def _parse_cell(cell: str, line: int) -> float:
    try:
        value = float(cell)
    except ValueError:
        raise DataFormatError(f"non-numeric cell {cell.strip()!r}", line=line) from None
    if not math.isfinite(value):
        raise DataFormatError(f"non-finite cell {cell.strip()!r}", line=line)
    return value


def _parse_label(cell: str, line: int) -> int:
    try:
        return int(cell.strip())
    except ValueError:
        raise DataFormatError(
            f"label must be an integer, got {cell.strip()!r}", line=line
        ) from None


def decode_csv(text: str) -> EmbeddingMatrix:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise DataFormatError("empty file", line=1) from None
    dim, has_label = _parse_header(header)
    width = dim + int(has_label)

    rows: list[list[float]] = []
    labels: list[int] = []
    for line_no, cells in enumerate(reader, start=2):
        if not cells or all(not cell.strip() for cell in cells):
            continue
        if len(cells) != width:
            raise DataFormatError(f"expected {width} columns, found {len(cells)}", line=line_no)
        rows.append([_parse_cell(cell, line_no) for cell in cells[:dim]])
        if has_label:
            labels.append(_parse_label(cells[dim], line_no))

    values = np.array(rows, dtype=np.float64).reshape(len(rows), dim)
    return EmbeddingMatrix(values, np.array(labels, dtype=np.int64) if has_label else None)


def encode_csv(matrix: EmbeddingMatrix) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    header = [f"f{i}" for i in range(matrix.cols)]
    writer.writerow(header + (["label"] if matrix.labels is not None else []))
    for i, row in enumerate(matrix.values):
        cells = [format_float(value) for value in row]
        if matrix.labels is not None:
            cells.append(str(int(matrix.labels[i])))
        writer.writerow(cells)
    return out.getvalue()


def _detect_format(path: Path, data: bytes) -> Format:
    if path.suffix.lower() in BINARY_SUFFIXES or data.startswith(MAGIC):
        return "binary"
    return "csv"


def read_embeddings(path: PathLike) -> EmbeddingMatrix:
    """Read an embedding file, choosing the format by suffix or magic bytes."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise DataFormatError(f"cannot read {path}: {exc.strerror}") from exc
    if _detect_format(path, data) == "binary":
        matrix = EmbeddingMatrix(decode_binary(data))
    else:
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError:
            raise DataFormatError(f"{path} is neither OSSD binary nor UTF-8 CSV") from None
        matrix = decode_csv(text)
    logger.debug("embeddings_read", path=str(path), rows=matrix.rows, cols=matrix.cols)
    return matrix


def write_embeddings(
    path: PathLike, matrix: EmbeddingMatrix, fmt: Optional[Format] = None
) -> None:
    """Write ``matrix``; binary files drop the label column."""
    path = Path(path)
    fmt = fmt or ("binary" if path.suffix.lower() in BINARY_SUFFIXES else "csv")
    if fmt == "binary":
        path.write_bytes(encode_binary(matrix.values))
    else:
        path.write_text(encode_csv(matrix), encoding="utf-8", newline="")
    logger.debug("embeddings_written", path=str(path), rows=matrix.rows, fmt=fmt)
