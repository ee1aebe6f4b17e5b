"""
FIR filter matrices: the mixing system A and the unmixing system W of x = A * s.

Entry (i, j) filters source (or input channel) j into sensor (or output) i.
Tap index k stands for a delay of k - zero_delay_tap samples.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from errors import DimensionError, ParameterError
from signal_core import MultichannelRecord

Role = Literal["mixing", "unmixing"]


@dataclass(frozen=True)
class FirFilter:
    taps: np.ndarray

    def __post_init__(self):
        taps = np.array(self.taps, dtype=np.float64)
        if taps.ndim != 1 or taps.size < 1:
            raise DimensionError("A FIR filter needs at least one tap.")
        if not np.all(np.isfinite(taps)):
            raise ParameterError("FIR taps must be finite.")
        object.__setattr__(self, "taps", taps)

    def __len__(self) -> int:
        return self.taps.size


@dataclass(frozen=True)
class FilterMatrix:
    taps: np.ndarray  # (n, n, L)
    role: Role
    zero_delay_tap: int = 0

    def __post_init__(self):
        taps = np.array(self.taps, dtype=np.float64)
        if taps.ndim != 3 or taps.shape[0] != taps.shape[1] or taps.shape[0] < 2:
            raise DimensionError(f"A filter matrix must be n x n x L with n >= 2, got shape {taps.shape}.")
        if not np.all(np.isfinite(taps)):
            raise ParameterError("Filter matrix taps must be finite.")
        if self.role not in ("mixing", "unmixing"):
            raise ParameterError(f"Unknown filter role '{self.role}'.")
        if not 0 <= self.zero_delay_tap < taps.shape[2]:
            raise ParameterError(f"zero_delay_tap {self.zero_delay_tap} lies outside {taps.shape[2]} taps.")
        object.__setattr__(self, "taps", taps)
        object.__setattr__(self, "zero_delay_tap", int(self.zero_delay_tap))

    @property
    def n(self) -> int:
        return self.taps.shape[0]

    @property
    def tap_length(self) -> int:
        return self.taps.shape[2]

    def entry(self, i: int, j: int) -> FirFilter:
        return FirFilter(self.taps[i, j])

    @classmethod
    def identity(cls, n: int, tap_length: int, role: Role, zero_delay_tap: int = 0) -> "FilterMatrix":
        taps = np.zeros((n, n, tap_length))
        taps[np.arange(n), np.arange(n), zero_delay_tap] = 1.0
        return cls(taps, role, zero_delay_tap)


def spectral_to_filters(bins: np.ndarray, fft_size: int, role: Role, centered: bool = True) -> FilterMatrix:
    """
    Inverse-transform per-bin n x n matrices, shaped (K, n, n), into an n x n FIR matrix.

    With centered=True the taps are rolled by fft_size // 2 so that negative delays
    stay representable.
    """
    taps = np.fft.irfft(np.moveaxis(bins, 0, -1), n=fft_size, axis=-1)
    zero = fft_size // 2 if centered else 0
    if zero:
        taps = np.roll(taps, zero, axis=-1)
    return FilterMatrix(taps, role, zero)


def filters_to_spectral(filters: FilterMatrix, fft_size: int | None = None) -> np.ndarray:
    """
    Per-bin matrices (K, n, n) of a filter matrix, with zero_delay_tap mapped to zero phase.

    A different fft_size wraps the taps circularly onto that many points.
    """
    size = fft_size or filters.tap_length
    wrapped = np.zeros(filters.taps.shape[:2] + (size,))
    positions = (np.arange(filters.tap_length) - filters.zero_delay_tap) % size
    np.add.at(wrapped, (slice(None), slice(None), positions), filters.taps)
    return np.moveaxis(np.fft.rfft(wrapped, axis=-1), -1, 0)


def apply_filter_matrix(filters: FilterMatrix, x: MultichannelRecord) -> MultichannelRecord:
    """
    Output channel i is sum_j (entry(i, j) convolved with x_j), truncated to the input length.

    The full convolution is read from zero_delay_tap on, so the output sample t draws on
    input sample t - (k - zero_delay_tap) through tap k.
    """
    if filters.n != x.n_channels:
        raise DimensionError(f"A {filters.n}x{filters.n} filter matrix cannot filter {x.n_channels} channels.")
    data = x.as_array()
    length = x.length
    start = filters.zero_delay_tap
    out = np.zeros((filters.n, length))
    for i in range(filters.n):
        for j in range(filters.n):
            h = filters.taps[i, j]
            if not h.any():
                continue
            full = np.convolve(data[j], h)
            segment = full[start : start + length]
            out[i, : segment.size] += segment
    return MultichannelRecord.from_array(out, x.sample_rate)
