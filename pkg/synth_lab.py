"""
Synthetic acoustic-emission experiments: continuous stochastic sources,
delay-only FIR mixing derived from the band geometry, and sensor records with
their ground truth.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Literal, NamedTuple, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import signal

from bss_ica import IcaConfig
from errors import DimensionError, ParameterError
from filters import FilterMatrix, apply_filter_matrix
from locator import REFERENCE_GEOMETRY, BandGeometry, delay_for_position
from signal_core import MultichannelRecord, TimeSeries

logger = logging.getLogger(__name__)

BANDPASS_ORDER = 4
BURN_IN_SAMPLES = 1024
NOISE_STREAM = 2**16


class SourceSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: Literal["white", "bandpass", "ar1"] = "bandpass"
    low_hz: Optional[float] = Field(None, gt=0)
    high_hz: Optional[float] = Field(None, gt=0)
    coefficient: Optional[float] = None
    power: float = Field(1.0, gt=0)
    position_m: float
    seed: int = Field(ge=0)
    modulation_depth: float = Field(0.0, ge=0)
    modulation_samples: int = Field(2048, ge=1)
    active: bool = True

    @model_validator(mode="after")
    def _kind_parameters(self) -> "SourceSpec":
        if self.kind == "bandpass":
            if self.low_hz is None or self.high_hz is None:
                raise ValueError("bandpass sources need low_hz and high_hz")
            if self.low_hz >= self.high_hz:
                raise ValueError(f"low_hz ({self.low_hz}) must be below high_hz ({self.high_hz})")
        if self.kind == "ar1" and (self.coefficient is None or not -1 < self.coefficient < 1):
            raise ValueError("ar1 sources need a coefficient in (-1, 1)")
        return self


class ScenarioSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    name: str = "scenario"
    seed: int = Field(0, ge=0)
    geometry: BandGeometry = REFERENCE_GEOMETRY
    sources: list[SourceSpec] = Field(min_length=2, max_length=2)
    duration_samples: int = Field(2**16, ge=1)
    tap_length: int = Field(1024, ge=2)
    attenuation_per_m: float = Field(0.0, ge=0)
    dispersion: float = Field(0.0, ge=0, lt=1)
    reflection_gain: float = Field(0.0, ge=0, lt=1)
    noise_snr_db: Optional[float] = None
    prototype_spacing_m: float = Field(0.1, gt=0)
    sigma_s: Optional[float] = Field(None, gt=0)
    ica: Optional[IcaConfig] = None

    @model_validator(mode="after")
    def _distinct_seeds(self) -> "ScenarioSpec":
        seeds = [s.seed for s in self.sources]
        if len(set(seeds)) != len(seeds):
            raise ValueError(f"source seeds must be distinct, got {seeds}")
        lo, hi = self.geometry.testing_range_m
        for i, s in enumerate(self.sources):
            if not lo <= s.position_m <= hi:
                raise ValueError(f"source {i} at {s.position_m} m lies outside the testing range [{lo}, {hi}]")
        return self


@dataclass(frozen=True)
class ScenarioTruth:
    true_positions: tuple[float, ...]
    true_delays_samples: tuple[int, ...]
    mixing: FilterMatrix


class Synthesis(NamedTuple):
    sources: tuple[TimeSeries, ...]
    record: MultichannelRecord
    mixing: FilterMatrix
    truth: ScenarioTruth


def _envelope(length: int, depth: float, knot_spacing: int, rng: np.random.Generator) -> np.ndarray:
    # log-normal amplitude: exp of a piecewise-linear Gaussian process
    n_knots = length // knot_spacing + 2
    knots = rng.standard_normal(n_knots)
    t = np.arange(length) / knot_spacing
    return np.exp(depth * np.interp(t, np.arange(n_knots), knots))


def generate_source(
    spec: SourceSpec,
    duration_samples: int,
    sample_rate: float = 1.0e6,
    seed: Optional[int | np.random.SeedSequence] = None,
) -> TimeSeries:
    """
    Zero-mean stochastic signal of the requested kind with variance exactly spec.power.

    The generator is seeded with `seed` when given, otherwise with spec.seed.
    An inactive source is silence.
    """
    if duration_samples < 1:
        raise ParameterError(f"Duration must be at least 1 sample, got {duration_samples}.")
    nyquist = sample_rate / 2
    if spec.kind == "bandpass" and spec.high_hz >= nyquist:
        raise ParameterError(f"Band edge {spec.high_hz} Hz is not below Nyquist ({nyquist} Hz).")
    if not spec.active:
        return TimeSeries(np.zeros(duration_samples), sample_rate)

    rng = np.random.default_rng(spec.seed if seed is None else seed)
    noise = rng.standard_normal(duration_samples + BURN_IN_SAMPLES)
    if spec.kind == "bandpass":
        sos = signal.butter(BANDPASS_ORDER, [spec.low_hz, spec.high_hz], btype="bandpass", fs=sample_rate, output="sos")
        x = signal.sosfilt(sos, noise)
    elif spec.kind == "ar1":
        x = signal.lfilter([1.0], [1.0, -spec.coefficient], noise)
    else:
        x = noise
    x = x[BURN_IN_SAMPLES:]

    if spec.modulation_depth > 0:
        x = x * _envelope(duration_samples, spec.modulation_depth, spec.modulation_samples, rng)

    x = x - x.mean()
    std = x.std()
    if std > 0:
        x = x * (np.sqrt(spec.power) / std)
    return TimeSeries(x, sample_rate)


def _place(taps: np.ndarray, tap: int, amplitude: float) -> bool:
    if 0 <= tap < taps.size:
        taps[tap] += amplitude
        return True
    return False


def build_mixing_filters(
    g: BandGeometry,
    positions: Sequence[float],
    tap_length: int,
    attenuation_per_m: float = 0.0,
    dispersion: float = 0.0,
    reflection_gain: float = 0.0,
) -> tuple[FilterMatrix, ScenarioTruth]:
    """
    Delay-only impulse mixing. Entry (i, j) is an impulse at
    zero_delay_tap + travel time (in samples) from source j to sensor i, with
    amplitude exp(-attenuation * distance).

    The sensor-2 tap is placed at the sensor-1 tap plus the rounded inter-sensor
    delay, so the truth delays are exactly what the filters encode.
    """
    if len(positions) != 2:
        raise DimensionError(f"The band model mixes exactly 2 sources, got {len(positions)}.")
    fs, c = g.sample_rate_hz, g.wave_speed_m_s
    sensors = (g.sensor_1_pos_m, g.sensor_2_pos_m)
    zero = tap_length // 2

    arrivals = []
    delays = []
    for y in positions:
        delay = int(np.rint(delay_for_position(g, y) * fs))
        first = int(np.rint(abs(y - sensors[0]) / c * fs))
        arrivals.append((first, first + delay))
        delays.append(delay)

    furthest = max(max(a) for a in arrivals) + (1 if dispersion > 0 else 0)
    if zero + furthest >= tap_length:
        raise ParameterError(
            f"Arrivals up to {furthest} samples need tap_length >= {2 * furthest + 2}, got {tap_length}."
        )

    taps = np.zeros((2, 2, tap_length))
    for j, y in enumerate(positions):
        for i, sensor in enumerate(sensors):
            distance = abs(y - sensor)
            tap = zero + arrivals[j][i]
            amplitude = float(np.exp(-attenuation_per_m * distance))
            _place(taps[i, j], tap, amplitude)
            if dispersion > 0:
                _place(taps[i, j], tap - 1, dispersion * amplitude)
                _place(taps[i, j], tap + 1, dispersion * amplitude)
            if reflection_gain > 0:
                for end in (-g.band_half_length_m, g.band_half_length_m):
                    path = abs(end - y) + abs(end - sensor)
                    echo = zero + int(np.rint(path / c * fs))
                    if not _place(taps[i, j], echo, reflection_gain * np.exp(-attenuation_per_m * path)):
                        logger.debug(f"reflection of source {j} at sensor {i + 1} (tap {echo}) dropped")

    mixing = FilterMatrix(taps, "mixing", zero)
    truth = ScenarioTruth(tuple(float(y) for y in positions), tuple(delays), mixing)
    return mixing, truth


def simulate_record(
    sources: Sequence[TimeSeries],
    A: FilterMatrix,
    noise_snr_db: Optional[float] = None,
    seed: Optional[int | np.random.SeedSequence] = None,
) -> MultichannelRecord:
    """x = A * s, plus white sensor noise at noise_snr_db per channel when given."""
    if len(sources) != A.n:
        raise DimensionError(f"{len(sources)} sources cannot feed a {A.n}x{A.n} mixing matrix.")
    x = apply_filter_matrix(A, MultichannelRecord(tuple(sources)))
    if noise_snr_db is None:
        return x

    rng = np.random.default_rng(seed)
    data = x.as_array()
    noisy = np.empty_like(data)
    for i, channel in enumerate(data):
        noise = rng.standard_normal(channel.size)
        noise -= noise.mean()
        target = channel.var() / 10 ** (noise_snr_db / 10)
        noise *= np.sqrt(target) / noise.std() if noise.std() > 0 else 0.0
        noisy[i] = channel + noise
    return MultichannelRecord.from_array(noisy, x.sample_rate)


def synthesize(scenario: ScenarioSpec) -> Synthesis:
    fs = scenario.geometry.sample_rate_hz
    sources = tuple(
        generate_source(s, scenario.duration_samples, fs, np.random.SeedSequence([scenario.seed, s.seed]))
        for s in scenario.sources
    )
    mixing, truth = build_mixing_filters(
        scenario.geometry,
        [s.position_m for s in scenario.sources],
        scenario.tap_length,
        scenario.attenuation_per_m,
        scenario.dispersion,
        scenario.reflection_gain,
    )
    record = simulate_record(
        sources, mixing, scenario.noise_snr_db, np.random.SeedSequence([scenario.seed, NOISE_STREAM])
    )
    logger.info(
        f"[✓] Synthesized '{scenario.name}' (seed {scenario.seed}): {record.length} samples, "
        f"delays {list(truth.true_delays_samples)} samples"
    )
    return Synthesis(sources, record, mixing, truth)
