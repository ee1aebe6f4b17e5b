import logging

import numpy as np
import pytest

from errors import DimensionError, MissingSourceError, ParameterError
from filters import FilterMatrix
from locator import REFERENCE_GEOMETRY, BandGeometry
from signal_core import MultichannelRecord
from synth_lab import SourceSpec, build_mixing_filters, generate_source, simulate_record
from tdoa import (
    SENSOR_1_PATH_MISSING,
    SENSOR_2_PATH_MISSING,
    DelayEstimate,
    delay_from_ccf,
    delays_from_mixing,
    max_admissible_delay_samples,
)


def impulse_matrix(length, zero, taps_at):
    """taps_at maps (i, j) to (tap, amplitude)."""
    taps = np.zeros((2, 2, length))
    for (i, j), (tap, amp) in taps_at.items():
        taps[i, j, tap] = amp
    return FilterMatrix(taps, "mixing", zero)


def test_impulse_arithmetic():
    A = impulse_matrix(64, 32, {(0, 0): (40, 1.0), (1, 0): (47, 0.8), (0, 1): (30, 0.5), (1, 1): (20, 1.0)})
    first, second = delays_from_mixing(A, sample_rate=1.0e6)
    assert first.delay_samples == 7
    assert first.delay_seconds == pytest.approx(7e-6)
    assert first.path_offsets_samples == (8, 15)
    assert second.delay_samples == -10


def test_identity_gives_zero_delays():
    estimates = delays_from_mixing(FilterMatrix.identity(2, 32, "mixing", 16))
    assert [e.delay_samples for e in estimates] == [0, 0]
    assert [e.flags for e in estimates] == [(SENSOR_2_PATH_MISSING,), (SENSOR_1_PATH_MISSING,)]


def test_single_path_column_is_flagged(caplog):
    A = impulse_matrix(64, 32, {(1, 0): (45, 1.0), (0, 1): (30, 1.0), (1, 1): (20, 1.0)})
    with caplog.at_level(logging.WARNING):
        first, second = delays_from_mixing(A)
    assert (first.delay_samples, first.flags) == (0, (SENSOR_1_PATH_MISSING,))
    assert first.path_offsets_samples == (13, 13)
    assert "column 0" in caplog.text
    assert (second.delay_samples, second.flags) == (-10, ())


def test_invariant_under_positive_column_scaling_and_permutation(rng):
    taps = 0.1 * rng.standard_normal((2, 2, 128))
    taps[0, 0, 60] = taps[1, 0, 75] = taps[0, 1, 80] = taps[1, 1, 50] = 5.0
    A = FilterMatrix(taps, "mixing", 64)
    base = sorted(e.delay_samples for e in delays_from_mixing(A))

    scaled = FilterMatrix(taps * np.array([3.0, 0.2])[None, :, None], "mixing", 64)
    swapped = FilterMatrix(taps[:, ::-1], "mixing", 64)
    assert sorted(e.delay_samples for e in delays_from_mixing(scaled)) == base
    assert sorted(e.delay_samples for e in delays_from_mixing(swapped)) == base == [-30, 15]


def test_confidence_is_weaker_prominence():
    A = impulse_matrix(32, 16, {(0, 0): (16, 1.0), (1, 0): (18, 1.0), (0, 1): (16, 1.0), (1, 1): (16, 1.0)})
    taps = A.taps.copy()
    taps[1, 0, 25] = 0.5
    estimates = delays_from_mixing(FilterMatrix(taps, "mixing", 16))
    assert estimates[0].confidence == pytest.approx(2.0)


def test_admissible_window_ignores_far_peaks():
    A = impulse_matrix(256, 128, {(0, 0): (128, 1.0), (1, 0): (250, 2.0), (0, 1): (128, 1.0), (1, 1): (128, 1.0)})
    taps = A.taps.copy()
    taps[1, 0, 131] = 1.0
    A = FilterMatrix(taps, "mixing", 128)
    assert delays_from_mixing(A)[0].delay_samples == 122
    assert delays_from_mixing(A, max_delay_samples=10)[0].delay_samples == 3


def test_missing_source_and_bad_inputs():
    taps = np.zeros((2, 2, 16))
    taps[0, 0, 8] = 1.0
    with pytest.raises(MissingSourceError) as info:
        delays_from_mixing(FilterMatrix(taps, "mixing", 8))
    assert info.value.column == 1
    with pytest.raises(ParameterError):
        delays_from_mixing(FilterMatrix.identity(2, 8, "unmixing"))
    with pytest.raises(DimensionError):
        delays_from_mixing(FilterMatrix.identity(3, 8, "mixing"))
    with pytest.raises(ParameterError):
        DelayEstimate(0, 1, 1e-6, 0.5)


def test_max_admissible_delay():
    assert max_admissible_delay_samples(REFERENCE_GEOMETRY) == 480
    g = BandGeometry(sensor_1_pos_m=-1.0, sensor_2_pos_m=1.0, testing_range_m=(-0.5, 0.5), wave_speed_m_s=3000.0)
    assert max_admissible_delay_samples(g) == 667


def test_ccf_recovers_delayed_copy(rng, make_delayed_pair):
    base = rng.standard_normal(8192 + 256)
    estimate = delay_from_ccf(make_delayed_pair(base, 8192, 37), max_lag=100)
    assert estimate.delay_samples == 37
    assert estimate.delay_seconds == pytest.approx(37e-6)
    assert estimate.confidence > 1


def test_ccf_identical_channels_and_swap(rng, make_delayed_pair):
    x = rng.standard_normal(4096)
    same = MultichannelRecord.from_array(np.vstack([x, x]), 1.0e6)
    assert delay_from_ccf(same, max_lag=50).delay_samples == 0

    record = make_delayed_pair(rng.standard_normal(4096 + 256), 4096, -23)
    swapped = MultichannelRecord(record.channels[::-1])
    forward = delay_from_ccf(record, max_lag=60)
    assert forward.delay_samples == -23
    assert delay_from_ccf(swapped, max_lag=60).delay_samples == -forward.delay_samples


def test_ccf_needs_a_lag_bound(rng):
    record = MultichannelRecord.from_array(rng.standard_normal((2, 2048)), 1.0e6)
    with pytest.raises(ParameterError):
        delay_from_ccf(record)
    assert abs(delay_from_ccf(record, geometry=REFERENCE_GEOMETRY).delay_samples) <= 480


def bandpass(position, seed, power=1.0):
    return SourceSpec(kind="bandpass", low_hz=5e4, high_hz=4e5, power=power, position_m=position, seed=seed)


def test_ccf_follows_the_stronger_source():
    mixing, truth = build_mixing_filters(REFERENCE_GEOMETRY, [0.1, 0.8], 1024)
    sources = [generate_source(bandpass(0.1, 1, 4.0), 2**15), generate_source(bandpass(0.8, 2, 1.0), 2**15)]
    estimate = delay_from_ccf(simulate_record(sources, mixing), geometry=REFERENCE_GEOMETRY)
    assert truth.true_delays_samples == (-40, -320)
    assert estimate.delay_samples == -40


def test_ccf_and_true_filters_agree_for_one_source():
    mixing, _ = build_mixing_filters(REFERENCE_GEOMETRY, [-0.6, 0.35], 1024)
    active = generate_source(bandpass(-0.6, 3), 2**14)
    silent = generate_source(bandpass(0.35, 4).model_copy(update={"active": False}), 2**14)
    record = simulate_record([active, silent], mixing)
    from_ccf = delay_from_ccf(record, geometry=REFERENCE_GEOMETRY)
    from_filters = delays_from_mixing(mixing)[0]
    assert from_ccf.delay_samples == from_filters.delay_samples == 240
