"""
Sampled-signal primitives shared by every stage: records, correlation
functions, block spectra and peak search.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.signal import find_peaks

from errors import DimensionError, ParameterError

# Prominence reported when the highest peak has no competitor.
MAX_PROMINENCE = 1.0e6


@dataclass(frozen=True)
class TimeSeries:
    samples: np.ndarray
    sample_rate: float

    def __post_init__(self):
        samples = np.array(self.samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size < 1:
            raise DimensionError("A time series needs a 1-D sequence of at least one sample.")
        if not np.all(np.isfinite(samples)):
            raise ParameterError("Time series samples must be finite.")
        if not self.sample_rate > 0:
            raise ParameterError(f"Sample rate must be positive, got {self.sample_rate}.")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", float(self.sample_rate))

    def __len__(self) -> int:
        return self.samples.size


@dataclass(frozen=True)
class MultichannelRecord:
    """Aligned sensor signals; channel i is sensor i + 1."""

    channels: tuple[TimeSeries, ...]

    def __post_init__(self):
        channels = tuple(self.channels)
        if len(channels) < 2:
            raise DimensionError(f"A record needs at least 2 channels, got {len(channels)}.")
        rates = {c.sample_rate for c in channels}
        lengths = {len(c) for c in channels}
        if len(rates) != 1 or len(lengths) != 1:
            raise DimensionError("All channels must share one sample rate and one length.")
        object.__setattr__(self, "channels", channels)

    @classmethod
    def from_array(cls, data: np.ndarray, sample_rate: float) -> "MultichannelRecord":
        data = np.asarray(data, dtype=np.float64)
        if data.ndim != 2:
            raise DimensionError("Record data must be shaped (n_channels, length).")
        return cls(tuple(TimeSeries(row, sample_rate) for row in data))

    @property
    def n_channels(self) -> int:
        return len(self.channels)

    @property
    def sample_rate(self) -> float:
        return self.channels[0].sample_rate

    @property
    def length(self) -> int:
        return len(self.channels[0])

    def as_array(self) -> np.ndarray:
        return np.vstack([c.samples for c in self.channels])


@dataclass(frozen=True)
class CorrelationFunction:
    lags: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        lags = np.asarray(self.lags, dtype=np.int64)
        values = np.asarray(self.values, dtype=np.float64)
        if lags.shape != values.shape or lags.ndim != 1:
            raise DimensionError("Lags and values must be 1-D arrays of equal length.")
        if np.any(np.diff(lags) <= 0) or 0 not in lags:
            raise ParameterError("Lags must be strictly increasing and include zero.")
        if not np.all(np.isfinite(values)):
            raise ParameterError("Correlation values must be finite.")
        object.__setattr__(self, "lags", lags)
        object.__setattr__(self, "values", values)

    def at(self, lag: int) -> float:
        return float(self.values[lag - self.lags[0]])


@dataclass(frozen=True)
class PeakResult:
    lag_or_tap: int
    value: float
    prominence: float
    degenerate: bool = False


def remove_mean(x: TimeSeries) -> TimeSeries:
    return TimeSeries(x.samples - np.mean(x.samples), x.sample_rate)


def remove_mean_record(record: MultichannelRecord) -> MultichannelRecord:
    return MultichannelRecord(tuple(remove_mean(c) for c in record.channels))


def cross_correlation(a: TimeSeries, b: TimeSeries, max_lag: int) -> CorrelationFunction:
    """
    Cross-correlation over lags -max_lag..max_lag.

    The value at lag tau is sum_t a(t) * b(t + tau) over the overlap, divided by
    the overlap length. R_ab(tau) and R_ba(-tau) take the dot product of the same
    two slices, so the symmetry holds bit for bit.
    """
    if len(a) != len(b) or a.sample_rate != b.sample_rate:
        raise DimensionError(
            f"Cannot correlate signals of length/rate {len(a)}/{a.sample_rate} and {len(b)}/{b.sample_rate}."
        )
    n = len(a)
    if not 0 < max_lag < n:
        raise ParameterError(f"max_lag must lie in (0, {n}), got {max_lag}.")

    x, y = a.samples, b.samples
    lags = np.arange(-max_lag, max_lag + 1)
    values = np.empty(lags.size)
    for i, lag in enumerate(lags):
        if lag >= 0:
            values[i] = np.dot(x[: n - lag], y[lag:]) / (n - lag)
        else:
            values[i] = np.dot(y[: n + lag], x[-lag:]) / (n + lag)
    return CorrelationFunction(lags, values)


def correlation_matrix(record: MultichannelRecord, max_lag: int) -> dict[str, CorrelationFunction]:
    """R11, R12, R21 and R22 of a 2-channel record."""
    if record.n_channels != 2:
        raise DimensionError(f"Expected a 2-channel record, got {record.n_channels} channels.")
    c1, c2 = record.channels
    return {
        "R11": cross_correlation(c1, c1, max_lag),
        "R12": cross_correlation(c1, c2, max_lag),
        "R21": cross_correlation(c2, c1, max_lag),
        "R22": cross_correlation(c2, c2, max_lag),
    }


def find_highest_peak(values: Sequence[float]) -> PeakResult:
    """
    Position of the largest |value|; ties go to the smallest position.

    Prominence is the ratio of the highest to the second-highest local maximum of
    |values|. It is 1 on ties and for an all-zero (degenerate) sequence.
    """
    mag = np.abs(np.asarray(values, dtype=np.float64))
    if mag.ndim != 1 or mag.size == 0:
        raise DimensionError("Peak search needs a nonempty 1-D sequence.")
    if not np.all(np.isfinite(mag)):
        raise ParameterError("Peak search needs finite values.")

    pos = int(np.argmax(mag))
    top = float(mag[pos])
    if top == 0.0:
        return PeakResult(pos, 0.0, 1.0, degenerate=True)
    if np.count_nonzero(mag == top) > 1:
        return PeakResult(pos, top, 1.0)

    # zero padding lets edge samples count as local maxima
    peaks, _ = find_peaks(np.concatenate(([0.0], mag, [0.0])))
    others = mag[peaks - 1][peaks - 1 != pos]
    second = float(others.max()) if others.size else 0.0
    prominence = MAX_PROMINENCE if second <= top / MAX_PROMINENCE else top / second
    return PeakResult(pos, top, prominence)


def block_spectra(record: MultichannelRecord, block_size: int, hop: int) -> np.ndarray:
    """
    Rectangular-window block DFTs, shaped (n_blocks, n_channels, block_size // 2 + 1).

    The trailing partial window is discarded.
    """
    if block_size < 2 or block_size & (block_size - 1):
        raise ParameterError(f"Block size must be a power of two, got {block_size}.")
    if not 0 < hop <= block_size:
        raise ParameterError(f"Hop must lie in (0, {block_size}], got {hop}.")
    if record.length < block_size:
        raise ParameterError(f"Record of {record.length} samples is shorter than one block of {block_size}.")

    data = record.as_array()
    n_blocks = (record.length - block_size) // hop + 1
    starts = np.arange(n_blocks) * hop
    frames = np.stack([data[:, s : s + block_size] for s in starts])
    return np.fft.rfft(frames, axis=-1)


def inverse_block_spectra(spectra: np.ndarray, block_size: int) -> np.ndarray:
    return np.fft.irfft(spectra, n=block_size, axis=-1)
