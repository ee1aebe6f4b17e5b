"""
File formats: sensor records (JSON header + raw little-endian float64 samples,
or CSV), filter matrices, delay estimates, locations, correlation and
convergence CSVs, and scenario truth.
"""

from __future__ import annotations

import json
import logging
import os
from typing import Any, Literal, Sequence, Type, TypeVar

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from errors import RecordFormatError
from filters import FilterMatrix
from locator import Location
from signal_core import CorrelationFunction, MultichannelRecord
from synth_lab import ScenarioTruth
from tdoa import DelayEstimate

logger = logging.getLogger(__name__)

SAMPLE_DTYPE = "<f8"
DATA_SUFFIX = ".f64"

M = TypeVar("M", bound=BaseModel)


class RecordHeader(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    n_channels: int = Field(ge=2)
    sample_rate: float = Field(gt=0)
    length: int = Field(ge=1)
    sample_format: Literal["f64-le"] = "f64-le"
    data_file: str


def _read_json(path: str) -> Any:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise RecordFormatError(f"{path}: invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}") from e


def write_json(payload: Any, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(dumps(payload))
        f.write("\n")


def dumps(payload: Any) -> str:
    return json.dumps(payload, indent=2, ensure_ascii=False)


def load_model(path: str, model: Type[M]) -> M:
    """Validate a JSON file against a pydantic model; ValidationError carries line or field info."""
    with open(path, "r", encoding="utf-8") as f:
        return model.model_validate_json(f.read())


def write_record(record: MultichannelRecord, header_path: str) -> str:
    """Writes the header JSON and its sample file next to it; returns the sample file path."""
    stem = os.path.splitext(os.path.basename(header_path))[0]
    data_name = stem + DATA_SUFFIX
    data_path = os.path.join(os.path.dirname(header_path), data_name)
    record.as_array().astype(SAMPLE_DTYPE).tofile(data_path)
    header = RecordHeader(
        n_channels=record.n_channels, sample_rate=record.sample_rate, length=record.length, data_file=data_name
    )
    write_json(header.model_dump(), header_path)
    return data_path


def read_record(header_path: str) -> MultichannelRecord:
    header = load_model(header_path, RecordHeader)
    data_path = os.path.join(os.path.dirname(header_path), header.data_file)
    if not os.path.exists(data_path):
        raise RecordFormatError(f"Sample file {data_path} named in {header_path} does not exist.")
    data = np.fromfile(data_path, dtype=SAMPLE_DTYPE)
    expected = header.n_channels * header.length
    if data.size != expected:
        raise RecordFormatError(
            f"{data_path} holds {data.size} samples; the header promises {header.n_channels} x {header.length}."
        )
    if not np.all(np.isfinite(data)):
        raise RecordFormatError(f"{data_path} contains non-finite samples.")
    return MultichannelRecord.from_array(data.reshape(header.n_channels, header.length), header.sample_rate)


def read_record_csv(path: str, sample_rate: float) -> MultichannelRecord:
    """One column per channel, one row per sample."""
    try:
        frame = pd.read_csv(path)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise RecordFormatError(f"{path}: {e}") from e
    if frame.shape[1] < 2:
        raise RecordFormatError(f"{path} has {frame.shape[1]} column(s); a record needs at least 2 channels.")
    try:
        data = frame.to_numpy(dtype=np.float64).T
    except ValueError as e:
        raise RecordFormatError(f"{path} contains non-numeric samples.") from e
    if not np.all(np.isfinite(data)):
        raise RecordFormatError(f"{path} contains missing or non-finite samples.")
    return MultichannelRecord.from_array(data, sample_rate)


def read_record_any(path: str, sample_rate: float | None = None) -> MultichannelRecord:
    if path.lower().endswith(".csv"):
        if sample_rate is None:
            raise RecordFormatError(f"CSV record {path} needs --sample-rate.")
        return read_record_csv(path, sample_rate)
    return read_record(path)


def write_correlations(correlations: dict[str, CorrelationFunction], out_dir: str) -> list[str]:
    paths = []
    for name, fn in correlations.items():
        path = os.path.join(out_dir, f"{name}.csv")
        pd.DataFrame({"lag": fn.lags, "value": fn.values}).to_csv(path, index=False)
        paths.append(path)
    return paths


def filter_matrix_to_dict(F: FilterMatrix) -> dict:
    return {
        "n": F.n,
        "tap_length": F.tap_length,
        "role": F.role,
        "zero_delay_tap": F.zero_delay_tap,
        "entries": [[F.taps[i, j].tolist() for j in range(F.n)] for i in range(F.n)],
    }


def write_filter_matrix(F: FilterMatrix, path: str) -> None:
    write_json(filter_matrix_to_dict(F), path)


def read_filter_matrix(path: str) -> FilterMatrix:
    payload = _read_json(path)
    try:
        n, length = int(payload["n"]), int(payload["tap_length"])
        taps = np.asarray(payload["entries"], dtype=np.float64)
        role, zero = payload["role"], int(payload.get("zero_delay_tap", 0))
    except (KeyError, TypeError, ValueError) as e:
        raise RecordFormatError(f"{path} is not a filter matrix file: {e!r}") from e
    if taps.shape != (n, n, length):
        raise RecordFormatError(f"{path}: entries are shaped {taps.shape}, header says {(n, n, length)}.")
    return FilterMatrix(taps, role, zero)


def estimate_to_dict(e: DelayEstimate) -> dict:
    out = {
        "source_index": e.source_index,
        "delay_samples": e.delay_samples,
        "delay_seconds": e.delay_seconds,
        "confidence": e.confidence,
    }
    if e.path_offsets_samples is not None:
        out["path_offsets_samples"] = list(e.path_offsets_samples)
    if e.flags:
        out["flags"] = list(e.flags)
    return out


def write_estimates(estimates: Sequence[DelayEstimate], path: str) -> None:
    write_json([estimate_to_dict(e) for e in estimates], path)


def read_estimates(path: str) -> list[DelayEstimate]:
    payload = _read_json(path)
    if not isinstance(payload, list):
        raise RecordFormatError(f"{path} must hold a JSON array of delay estimates.")
    estimates = []
    for k, item in enumerate(payload):
        try:
            offsets = item.get("path_offsets_samples")
            estimates.append(
                DelayEstimate(
                    source_index=int(item["source_index"]),
                    delay_samples=int(item["delay_samples"]),
                    delay_seconds=float(item["delay_seconds"]),
                    confidence=float(item.get("confidence", 1.0)),
                    path_offsets_samples=tuple(offsets) if offsets is not None else None,
                    flags=tuple(str(f) for f in item.get("flags", ())),
                )
            )
        except (KeyError, TypeError, ValueError, AttributeError) as e:
            raise RecordFormatError(f"{path}: delay estimate {k} is malformed ({e!r}).") from e
    return estimates


def location_to_dict(loc: Location) -> dict:
    return {"coordinate_m": loc.coordinate_m, "delay_s": loc.delay_s, "flags": list(loc.flags)}


def write_convergence(norms: Sequence[float], path: str) -> None:
    pd.DataFrame({"pass": np.arange(len(norms), dtype=int), "mean_update_norm": list(norms)}).to_csv(
        path, index=False
    )


def truth_to_dict(truth: ScenarioTruth, sample_rate: float) -> dict:
    return {
        "true_positions_m": list(truth.true_positions),
        "true_delays_samples": list(truth.true_delays_samples),
        "true_delays_s": [d / sample_rate for d in truth.true_delays_samples],
        "sample_rate": sample_rate,
    }
