import numpy as np
import pytest

from errors import DimensionError, ParameterError
from signal_core import (
    MAX_PROMINENCE,
    MultichannelRecord,
    TimeSeries,
    block_spectra,
    correlation_matrix,
    cross_correlation,
    find_highest_peak,
    inverse_block_spectra,
    remove_mean,
)


def test_time_series_copies_and_freezes_samples():
    raw = np.arange(5.0)
    ts = TimeSeries(raw, 10.0)
    raw[0] = 99.0
    assert ts.samples[0] == 0.0
    assert raw.flags.writeable
    with pytest.raises(ValueError):
        ts.samples[1] = 3.0


@pytest.mark.parametrize("samples, rate", [([1.0, np.nan], 1.0), ([1.0, 2.0], 0.0), ([], 1.0)])
def test_time_series_rejects_bad_input(samples, rate):
    with pytest.raises((ParameterError, DimensionError)):
        TimeSeries(np.asarray(samples, dtype=float), rate)


def test_record_needs_two_matching_channels():
    a = TimeSeries(np.zeros(8), 1.0)
    with pytest.raises(DimensionError):
        MultichannelRecord((a,))
    with pytest.raises(DimensionError):
        MultichannelRecord((a, TimeSeries(np.zeros(9), 1.0)))
    with pytest.raises(DimensionError):
        MultichannelRecord((a, TimeSeries(np.zeros(8), 2.0)))


def test_remove_mean_gives_zero_mean(rng):
    ts = TimeSeries(rng.normal(3.0, 1.0, 1000), 1.0)
    assert abs(remove_mean(ts).samples.mean()) < 1e-12


def test_remove_mean_examples_and_idempotence(rng):
    np.testing.assert_array_equal(remove_mean(TimeSeries(np.full(4, 5.0), 1.0)).samples, 0.0)
    np.testing.assert_allclose(remove_mean(TimeSeries(np.array([1.0, 2.0, 3.0, 4.0]), 1.0)).samples, [-1.5, -0.5, 0.5, 1.5])
    once = remove_mean(TimeSeries(rng.normal(-7.0, 2.0, 999), 1.0))
    np.testing.assert_allclose(remove_mean(once).samples, once.samples, rtol=0, atol=1e-12)


def test_cross_correlation_symmetry_is_exact(rng):
    a = TimeSeries(rng.standard_normal(4096), 1.0)
    b = TimeSeries(rng.standard_normal(4096), 1.0)
    r12 = cross_correlation(a, b, 200)
    r21 = cross_correlation(b, a, 200)
    assert np.max(np.abs(r12.values - r21.values[::-1])) <= 1e-12
    assert r12.at(5) == r21.at(-5)


def test_delayed_copy_peaks_at_its_delay(rng, make_delayed_pair):
    base = rng.standard_normal(2**14 + 256)
    for d in range(-100, 101):
        record = make_delayed_pair(base, 2**14, d)
        r12 = cross_correlation(*record.channels, 120)
        peak = find_highest_peak(r12.values)
        assert r12.lags[peak.lag_or_tap] == d


def test_cross_correlation_rejects_bad_lag(rng):
    a = TimeSeries(rng.standard_normal(16), 1.0)
    with pytest.raises(ParameterError):
        cross_correlation(a, a, 16)
    with pytest.raises(ParameterError):
        cross_correlation(a, a, 0)


def test_correlation_matrix_holds_four_functions(rng):
    data = rng.standard_normal((2, 512))
    record = MultichannelRecord.from_array(data, 1.0)
    r = correlation_matrix(record, 10)
    assert sorted(r) == ["R11", "R12", "R21", "R22"]
    assert r["R11"].at(0) == pytest.approx(np.mean(data[0] ** 2))
    assert r["R22"].lags.tolist() == list(range(-10, 11))


def test_highest_peak_prominence_against_second_local_maximum():
    peak = find_highest_peak([0.0, 1.0, 3.0, 1.0, 0.0, -2.0, 0.0])
    assert peak.lag_or_tap == 2
    assert peak.value == 3.0
    assert peak.prominence == pytest.approx(1.5)
    assert not peak.degenerate


def test_highest_peak_uses_magnitude():
    peak = find_highest_peak([0.5, -4.0, 0.1, 1.0, 0.0])
    assert peak.lag_or_tap == 1
    assert peak.prominence == pytest.approx(4.0)


def test_highest_peak_ignores_positive_scaling(rng):
    for _ in range(20):
        values = rng.standard_normal(int(rng.integers(2, 300)))
        peak = find_highest_peak(values)
        for scale in (1e-6, 0.3, 42.0, 1e8):
            assert find_highest_peak(scale * values).lag_or_tap == peak.lag_or_tap


def test_highest_peak_edge_cases():
    flat = find_highest_peak(np.zeros(6))
    assert flat.degenerate and flat.prominence == 1.0

    tie = find_highest_peak([1.0, 0.0, 1.0])
    assert tie.lag_or_tap == 0 and tie.prominence == 1.0

    lone = find_highest_peak([1.0, 2.0, 3.0])
    assert lone.lag_or_tap == 2 and lone.prominence == MAX_PROMINENCE


def test_block_spectra_shape_and_inverse(rng):
    data = rng.standard_normal((2, 1000))
    record = MultichannelRecord.from_array(data, 1.0)
    spectra = block_spectra(record, 256, 128)
    assert spectra.shape == (6, 2, 129)
    blocks = inverse_block_spectra(spectra, 256)
    np.testing.assert_allclose(blocks[3], data[:, 384:640], atol=1e-12)


def test_trailing_partial_block_is_dropped(rng):
    record = MultichannelRecord.from_array(rng.standard_normal((2, 1000)), 1.0)
    assert block_spectra(record, 512, 512).shape[0] == 1


def test_independent_noise_has_no_dominant_cross_peak(rng):
    a = TimeSeries(rng.standard_normal(2**16), 1.0)
    b = TimeSeries(rng.standard_normal(2**16), 1.0)
    zero_lag_power = cross_correlation(a, a, 480).at(0)
    assert np.max(np.abs(cross_correlation(a, b, 480).values)) < 0.05 * zero_lag_power


def test_block_spectra_rejects_bad_sizes(rng):
    record = MultichannelRecord.from_array(rng.standard_normal((2, 100)), 1.0)
    with pytest.raises(ParameterError):
        block_spectra(record, 48, 48)
    with pytest.raises(ParameterError):
        block_spectra(record, 128, 128)
    with pytest.raises(ParameterError):
        block_spectra(record, 64, 65)
