"""
Tests mel, gammatone and difference-of-gammatone filterbanks.
"""
import numpy as np
import pytest

from aurafeat import filterbank, scales
from aurafeat.dsp import Domain, Spectrogram
from aurafeat.filterbank import FilterBank, FilterKind


SAMPLE_RATE = 16000
F_MIN = 20.0
F_MAX = 8000.0
GRIDS = [(n_filters, n_bins) for n_filters in (8, 80) for n_bins in (65, 201)]


@pytest.mark.parametrize('n_filters, n_bins', GRIDS)
def test_mel_rows_have_unit_sum(n_filters, n_bins):
    fb = filterbank.mel_filterbank(n_filters, n_bins, SAMPLE_RATE, F_MIN, F_MAX)
    assert fb.weights.shape == (n_filters, n_bins)
    assert np.all(fb.weights >= 0)
    np.testing.assert_allclose(fb.weights.sum(axis=1), 1.0, atol=1e-6)


@pytest.mark.parametrize('squared', [False, True])
@pytest.mark.parametrize('n_filters, n_bins', GRIDS)
def test_gammatone_rows_have_unit_sum(n_filters, n_bins, squared):
    fb = filterbank.gammatone_filterbank(
        n_filters, n_bins, SAMPLE_RATE, F_MIN, F_MAX, squared
    )
    expected = FilterKind.GAMMATONE_SQNORM if squared else FilterKind.GAMMATONE_NORM
    assert fb.kind is expected
    np.testing.assert_allclose(fb.weights.sum(axis=1), 1.0, atol=1e-6)


@pytest.mark.parametrize('n_filters, n_bins', GRIDS)
def test_dog_difference_rows_sum_to_zero(n_filters, n_bins):
    difference, _ = filterbank.dog_difference(
        n_filters, n_bins, SAMPLE_RATE, F_MIN, F_MAX, 2.0
    )
    np.testing.assert_allclose(difference.sum(axis=1), 0.0, atol=1e-6)


@pytest.mark.parametrize('n_filters, n_bins', GRIDS)
def test_dog_positive_weights_sum_to_one(n_filters, n_bins):
    fb = filterbank.dog_filterbank(n_filters, n_bins, SAMPLE_RATE, F_MIN, F_MAX, 2.0)
    positive = np.maximum(fb.weights, 0.0).sum(axis=1)
    np.testing.assert_allclose(positive, 1.0, atol=1e-6)
    assert np.all(fb.weights.min(axis=1) < 0)
    assert fb.alpha == 2.0


def test_dog_rejects_narrow_surround():
    with pytest.raises(ValueError, match='alpha must exceed 1'):
        filterbank.dog_filterbank(80, 201, SAMPLE_RATE, F_MIN, F_MAX, 1.0)


@pytest.mark.parametrize('n_filters, n_bins', GRIDS)
def test_dog_suppresses_a_flat_frame(n_filters, n_bins):
    flat = _power(np.ones((1, n_bins)))
    dog = filterbank.dog_filterbank(n_filters, n_bins, SAMPLE_RATE, F_MIN, F_MAX, 2.0)
    gamm = filterbank.gammatone_filterbank(n_filters, n_bins, SAMPLE_RATE, F_MIN, F_MAX)
    dog_out = filterbank.apply_filterbank(flat, dog).data
    gamm_out = filterbank.apply_filterbank(flat, gamm).data
    np.testing.assert_allclose(gamm_out, 1.0, atol=1e-6)
    assert np.all(dog_out <= 1.0)
    assert np.all(dog_out < gamm_out)


def test_dog_difference_vanishes_as_alpha_approaches_one():
    norms = [
        np.linalg.norm(filterbank.dog_difference(80, 201, SAMPLE_RATE, F_MIN, F_MAX, alpha)[0])
        for alpha in (2.0, 1.1, 1.001, 1.0 + 1e-6)
    ]
    assert all(a > b for a, b in zip(norms, norms[1:]))
    assert norms[-1] < 1e-3 * norms[0]


def test_mel_peaks_sit_near_centers():
    fb = filterbank.mel_filterbank(40, 201, SAMPLE_RATE, F_MIN, F_MAX)
    freqs = scales.bin_frequencies(201, SAMPLE_RATE)
    nearest = np.abs(freqs[None, :] - fb.center_freqs[:, None]).argmin(axis=1)
    assert np.all(np.abs(fb.weights.argmax(axis=1) - nearest) <= 1)


def test_mel_fills_empty_triangles_at_nearest_bin():
    # The lowest triangle spans about 20-66 Hz, between bins 0 and 1.
    fb = filterbank.mel_filterbank(80, 65, SAMPLE_RATE, F_MIN, F_MAX)
    assert np.count_nonzero(fb.weights[0]) == 1
    assert fb.weights[0, 0] == 1.0


def test_erb_space_endpoints_and_order():
    centers = filterbank.erb_space(80, F_MIN, F_MAX)
    assert centers[0] == F_MIN
    assert centers[-1] == F_MAX
    rates = scales.erb_rate(centers)
    np.testing.assert_allclose(np.diff(rates), np.diff(rates)[0], rtol=1e-9)


def test_gammatone_peaks_follow_centers():
    fb = filterbank.gammatone_filterbank(80, 201, SAMPLE_RATE, F_MIN, F_MAX)
    peaks = fb.weights.argmax(axis=1)
    assert np.all(np.diff(peaks) >= 0)


def test_gammatone_half_power_bandwidth():
    center = np.array([1000.0])
    bandwidth = 1.019 * scales.erb_bandwidth(1000.0)
    edges = np.array([1000.0 - bandwidth / 2, 1000.0 + bandwidth / 2])
    response = filterbank.gammatone_response(edges, center)
    np.testing.assert_allclose(response ** 2, 0.5, rtol=1e-9)


def test_banks_are_cached_and_read_only():
    a = filterbank.mel_filterbank(80, 201, SAMPLE_RATE, F_MIN, F_MAX)
    b = filterbank.mel_filterbank(80, 201, SAMPLE_RATE, F_MIN, F_MAX)
    assert a is b
    with pytest.raises(ValueError):
        a.weights[0, 0] = 1.0


@pytest.mark.parametrize('f_min, f_max', [(-1.0, 8000.0), (100.0, 100.0), (20.0, 9000.0)])
def test_invalid_range(f_min, f_max):
    with pytest.raises(ValueError):
        filterbank.gammatone_filterbank(8, 201, SAMPLE_RATE, f_min, f_max)


def test_alpha_only_for_dog_banks():
    with pytest.raises(ValueError):
        FilterBank(np.ones((1, 3)), [100.0], FilterKind.MEL, alpha=2.0)
    with pytest.raises(ValueError):
        FilterBank(np.ones((1, 3)), [100.0], FilterKind.DOG)


def test_apply_filterbank_is_linear():
    fb = filterbank.dog_filterbank(8, 65, SAMPLE_RATE, F_MIN, F_MAX, 2.0)
    rng = np.random.default_rng(0)
    x, y = rng.random((2, 5, 65))
    out = filterbank.apply_filterbank(_power(2.0 * x + 3.0 * y), fb).data
    expected = (
        2.0 * filterbank.apply_filterbank(_power(x), fb).data
        + 3.0 * filterbank.apply_filterbank(_power(y), fb).data
    )
    np.testing.assert_allclose(out, expected, atol=1e-12)


def test_apply_filterbank_output():
    fb = filterbank.mel_filterbank(8, 65, SAMPLE_RATE, F_MIN, F_MAX)
    out = filterbank.apply_filterbank(_power(np.ones((3, 65))), fb)
    assert out.domain is Domain.FEATURE
    np.testing.assert_array_equal(out.bin_freqs, fb.center_freqs)
    np.testing.assert_allclose(out.data, 1.0)


def test_apply_filterbank_rejects_bin_mismatch():
    fb = filterbank.mel_filterbank(8, 65, SAMPLE_RATE, F_MIN, F_MAX)
    with pytest.raises(ValueError, match='bins'):
        filterbank.apply_filterbank(_power(np.ones((3, 201))), fb)


# Test util.


def _power(data: np.ndarray) -> Spectrogram:
    freqs = scales.bin_frequencies(data.shape[1], SAMPLE_RATE)
    return Spectrogram(data, freqs, Domain.POWER)
