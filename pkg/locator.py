"""
One-dimensional source location on a band between two sensors: the arrival-
difference model and a general-regression (Nadaraya-Watson) locator trained on
prototype sources.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from errors import ParameterError

logger = logging.getLogger(__name__)

RANGE_SLACK_M = 1e-9

FLAG_FALLBACK = "nearest_prototype_fallback"
FLAG_OUT_OF_RANGE = "out_of_range"


class BandGeometry(BaseModel):
    """Coordinates in meters with the origin at the middle of the band."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    sensor_1_pos_m: float
    sensor_2_pos_m: float
    testing_range_m: tuple[float, float]
    wave_speed_m_s: float = Field(5000.0, gt=0)
    sample_rate_hz: float = Field(1.0e6, gt=0)
    band_half_length_m: float = Field(2.0, gt=0)

    @model_validator(mode="after")
    def _ordered(self) -> "BandGeometry":
        lo, hi = self.testing_range_m
        if not self.sensor_1_pos_m < self.sensor_2_pos_m:
            raise ValueError("sensor_1_pos_m must lie left of sensor_2_pos_m")
        if not self.sensor_1_pos_m < lo < hi < self.sensor_2_pos_m:
            raise ValueError("testing_range_m must be increasing and lie strictly between the sensors")
        if self.band_half_length_m < max(abs(self.sensor_1_pos_m), abs(self.sensor_2_pos_m)):
            raise ValueError("band_half_length_m must reach both sensors")
        return self

    @property
    def sensor_spacing_m(self) -> float:
        return self.sensor_2_pos_m - self.sensor_1_pos_m


# Sensors 2.4 m apart on a 4 m band, sources tested over -1.1..+1.1 m.
REFERENCE_GEOMETRY = BandGeometry(sensor_1_pos_m=-1.2, sensor_2_pos_m=1.2, testing_range_m=(-1.1, 1.1))


@dataclass(frozen=True)
class PrototypeSet:
    delays: np.ndarray  # seconds
    coordinates: np.ndarray  # meters
    sigma: float

    def __post_init__(self):
        delays = np.array(self.delays, dtype=np.float64)
        coordinates = np.array(self.coordinates, dtype=np.float64)
        if delays.ndim != 1 or delays.shape != coordinates.shape or delays.size < 2:
            raise ParameterError("A prototype set needs at least 2 (delay, coordinate) pairs.")
        if not (np.all(np.isfinite(delays)) and np.all(np.isfinite(coordinates))):
            raise ParameterError("Prototype delays and coordinates must be finite.")
        steps = np.diff(delays[np.argsort(coordinates)])
        if not (np.all(steps < 0) or np.all(steps > 0)):
            raise ParameterError("Prototype delays must be strictly monotone in coordinate.")
        if not self.sigma > 0:
            raise ParameterError(f"Kernel width must be positive, got {self.sigma}.")
        object.__setattr__(self, "delays", delays)
        object.__setattr__(self, "coordinates", coordinates)
        object.__setattr__(self, "sigma", float(self.sigma))

    def __len__(self) -> int:
        return self.delays.size


@dataclass(frozen=True)
class Location:
    coordinate_m: float
    delay_s: float
    flags: tuple[str, ...] = field(default_factory=tuple)


def delay_for_position(g: BandGeometry, y: float) -> float:
    lo, hi = g.testing_range_m
    if not lo - RANGE_SLACK_M <= y <= hi + RANGE_SLACK_M:
        raise ParameterError(f"Position {y} m lies outside the testing range [{lo}, {hi}] m.")
    return (abs(y - g.sensor_2_pos_m) - abs(y - g.sensor_1_pos_m)) / g.wave_speed_m_s


def default_sigma(delays: np.ndarray) -> float:
    """Median gap between adjacent prototype delays."""
    gaps = np.abs(np.diff(np.sort(np.asarray(delays, dtype=np.float64))))
    return float(np.median(gaps))


def build_prototypes(g: BandGeometry, spacing: float, sigma: float | None = None) -> PrototypeSet:
    if not spacing > 0:
        raise ParameterError(f"Prototype spacing must be positive, got {spacing}.")
    lo, hi = g.testing_range_m
    if spacing > hi - lo + RANGE_SLACK_M:
        raise ParameterError(f"Prototype spacing {spacing} m exceeds the testing range of {hi - lo} m.")

    count = math.floor((hi - lo) / spacing + 1e-9) + 1
    coordinates = np.round(lo + np.arange(count) * spacing, 12)
    delays = np.array([delay_for_position(g, y) for y in coordinates])
    if sigma is None:
        sigma = default_sigma(delays)
    logger.debug(f"{count} prototypes every {spacing} m, sigma {sigma:.3e} s")
    return PrototypeSet(delays, coordinates, sigma)


def grnn_locate(delay: float, p: PrototypeSet) -> Location:
    """
    Kernel-weighted mean of the prototype coordinates:

        y = sum_i y_i w_i / sum_i w_i,   w_i = exp(-(d - d_i)^2 / (2 sigma^2))

    When every weight underflows the nearest prototype is returned and flagged.
    """
    flags = []
    if delay < p.delays.min() or delay > p.delays.max():
        flags.append(FLAG_OUT_OF_RANGE)

    offsets = delay - p.delays
    weights = np.exp(-(offsets**2) / (2 * p.sigma**2))
    total = weights.sum()
    if total == 0.0:
        flags.append(FLAG_FALLBACK)
        coordinate = float(p.coordinates[np.argmin(np.abs(offsets))])
    else:
        coordinate = float(np.dot(weights, p.coordinates) / total)
        coordinate = float(np.clip(coordinate, p.coordinates.min(), p.coordinates.max()))
    return Location(coordinate, float(delay), tuple(flags))
