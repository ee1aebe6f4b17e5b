"""
Time-delay estimation between the two sensors.

Sign convention used everywhere: a positive delay means the wave reaches
sensor 2 later than sensor 1.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

from errors import DimensionError, MissingSourceError, ParameterError
from filters import FilterMatrix
from locator import BandGeometry
from signal_core import MultichannelRecord, cross_correlation, find_highest_peak, remove_mean_record

logger = logging.getLogger(__name__)

SENSOR_1_PATH_MISSING = "sensor_1_path_missing"
SENSOR_2_PATH_MISSING = "sensor_2_path_missing"


@dataclass(frozen=True)
class DelayEstimate:
    source_index: int
    delay_samples: int
    delay_seconds: float
    confidence: float
    path_offsets_samples: Optional[tuple[int, int]] = None  # sensor-1 / sensor-2 peak, relative to zero delay
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.confidence >= 1:
            raise ParameterError(f"Confidence is a prominence ratio >= 1, got {self.confidence}.")


def max_admissible_delay_samples(geometry: BandGeometry) -> int:
    spacing = geometry.sensor_2_pos_m - geometry.sensor_1_pos_m
    return math.ceil(spacing / geometry.wave_speed_m_s * geometry.sample_rate_hz - 1e-9)


def delay_from_ccf(
    record: MultichannelRecord,
    max_lag: Optional[int] = None,
    geometry: Optional[BandGeometry] = None,
) -> DelayEstimate:
    """
    Delay of the most powerful source: the lag of the highest |R12| peak.

    A flat correlation comes back with confidence 1.
    """
    if record.n_channels != 2:
        raise DimensionError(f"CCF delay estimation needs a 2-channel record, got {record.n_channels}.")
    if max_lag is None:
        if geometry is None:
            raise ParameterError("Give max_lag or a geometry to bound it.")
        max_lag = max_admissible_delay_samples(geometry)
    max_lag = min(max_lag, record.length - 1)

    c1, c2 = remove_mean_record(record).channels
    r12 = cross_correlation(c1, c2, max_lag)
    peak = find_highest_peak(r12.values)
    lag = int(r12.lags[peak.lag_or_tap])
    if peak.degenerate:
        logger.warning("[!] Cross-correlation is flat; the delay estimate carries no information.")
    return DelayEstimate(0, lag, lag / record.sample_rate, peak.prominence)


def delays_from_mixing(
    A: FilterMatrix,
    zero_delay_tap: Optional[int] = None,
    sample_rate: float = 1.0e6,
    max_delay_samples: Optional[int] = None,
) -> list[DelayEstimate]:
    """
    One delay per mixing column j: peak tap of a2j minus peak tap of a1j.

    The order of the returned estimates carries no meaning beyond the column
    index, since separation leaves the sources permuted. With max_delay_samples
    the sensor-2 peak is searched only within that distance of the sensor-1 peak.
    A column with one all-zero filter (or no sensor-2 peak in the window) gets
    delay 0 and a sensor_1_path_missing or sensor_2_path_missing flag.
    """
    if A.role != "mixing":
        raise ParameterError(f"Delays are read from mixing filters, got role '{A.role}'.")
    if A.n != 2:
        raise DimensionError(f"Delay estimation works on two sensors, got a {A.n}x{A.n} matrix.")
    if zero_delay_tap is None:
        zero_delay_tap = A.zero_delay_tap

    estimates = []
    for j in range(A.n):
        h1, h2 = A.taps[0, j], A.taps[1, j]
        if not h1.any() and not h2.any():
            raise MissingSourceError(j)
        flags: tuple[str, ...] = ()
        p1 = find_highest_peak(h1)
        if p1.degenerate:
            # no sensor-1 path: both peaks sit on the sensor-2 path
            p2 = find_highest_peak(h2)
            tap1 = tap2 = p2.lag_or_tap
            flags = (SENSOR_1_PATH_MISSING,)
        else:
            tap1 = p1.lag_or_tap
            lo, hi = 0, A.tap_length
            if max_delay_samples is not None:
                lo = max(0, tap1 - max_delay_samples)
                hi = min(A.tap_length, tap1 + max_delay_samples + 1)
            p2 = find_highest_peak(h2[lo:hi])
            tap2 = tap1 if p2.degenerate else p2.lag_or_tap + lo
            if p2.degenerate:
                flags = (SENSOR_2_PATH_MISSING,)
        if flags:
            logger.warning(f"[!] Mixing column {j}: {flags[0]}, the delay of 0 does not locate the source.")

        delay = tap2 - tap1
        estimates.append(
            DelayEstimate(
                source_index=j,
                delay_samples=delay,
                delay_seconds=delay / sample_rate,
                confidence=min(p1.prominence, p2.prominence),
                path_offsets_samples=(tap1 - zero_delay_tap, tap2 - zero_delay_tap),
                flags=flags,
            )
        )
        logger.debug(f"column {j}: peaks at taps {tap1}/{tap2}, delay {delay} samples")
    return estimates
