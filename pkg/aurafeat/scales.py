"""
Frequency-scale conversions (bark, mel, ERB) and the absolute threshold
of hearing.

All functions accept scalars or numpy arrays and return the same shape.
"""
import typing as ty

import numpy as np


Frequency = ty.Union[float, np.ndarray]


def _check_nonnegative(values: Frequency, name: str) -> np.ndarray:
    array = np.asarray(values, dtype=np.float64)
    if np.any(~np.isfinite(array)) or np.any(array < 0):
        raise ValueError(f'{name} must be finite and nonnegative: {values}')
    return array


def _unwrap(array: np.ndarray) -> Frequency:
    return float(array) if array.ndim == 0 else array


def hz_to_bark(f: Frequency) -> Frequency:
    """
    Bark value of a frequency: 13 atan(0.00076 f) + 3.5 atan(f / 7500).
    """
    f = _check_nonnegative(f, 'Frequency')
    return _unwrap(13.0 * np.arctan(0.00076 * f) + 3.5 * np.arctan(f / 7500.0))


def ath_db(f: Frequency) -> Frequency:
    """
    Absolute threshold of hearing in dB SPL.

    The formula diverges at 0 Hz, so frequencies must be strictly positive.
    No clamping is applied at either end of the range.

    :raise ValueError for frequencies <= 0.
    """
    f = np.asarray(f, dtype=np.float64)
    if np.any(~np.isfinite(f)) or np.any(f <= 0):
        raise ValueError(f'ATH is only defined for positive frequencies: {f}')
    khz = f * 1e-3
    return _unwrap(
        3.64 * khz ** -0.8
        - 6.5 * np.exp(-0.6 * (khz - 3.3) ** 2)
        + 1e-15 * f ** 4
    )


def hz_to_mel(f: Frequency) -> Frequency:
    """ HTK mel scale. """
    f = _check_nonnegative(f, 'Frequency')
    return _unwrap(2595.0 * np.log10(1.0 + f / 700.0))


def mel_to_hz(m: Frequency) -> Frequency:
    m = _check_nonnegative(m, 'Mel value')
    return _unwrap(700.0 * (10.0 ** (m / 2595.0) - 1.0))


def erb_bandwidth(f: Frequency) -> Frequency:
    """
    Glasberg-Moore equivalent rectangular bandwidth in Hz.
    """
    f = _check_nonnegative(f, 'Frequency')
    return _unwrap(24.7 * (4.37 * f / 1000.0 + 1.0))


def erb_rate(f: Frequency) -> Frequency:
    """
    Number of ERBs below a frequency. Gammatone centers are spaced
    uniformly on this scale.
    """
    f = _check_nonnegative(f, 'Frequency')
    return _unwrap(21.4 * np.log10(1.0 + 4.37 * f / 1000.0))


def erb_rate_to_hz(e: Frequency) -> Frequency:
    e = _check_nonnegative(e, 'ERB rate')
    return _unwrap((10.0 ** (e / 21.4) - 1.0) * 1000.0 / 4.37)


def bin_frequencies(n_bins: int, sample_rate: int) -> np.ndarray:
    """
    Center frequencies of the bins of a one-sided spectrum.

    :param n_bins: Number of bins, n_fft // 2 + 1.
    :param sample_rate: Sample rate in Hz.
    :return: Array of n_bins frequencies from 0 to the Nyquist frequency.
    """
    if n_bins < 2:
        raise ValueError(f'A spectrum needs at least 2 bins, got {n_bins}')
    return np.arange(n_bins) * sample_rate / (2.0 * (n_bins - 1))
