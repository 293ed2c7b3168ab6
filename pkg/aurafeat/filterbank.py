"""
Construction and application of mel, gammatone and difference-of-gammatone
filterbanks sampled on STFT bin frequencies.
"""
import dataclasses
import enum
import functools
import typing as ty

import numpy as np

from aurafeat import scales
from aurafeat.dsp import Domain, Spectrogram, require_domain


# Half-power half-bandwidth of [1 + x^2]^-2, in units of its scale b.
_HALF_POWER_X = np.sqrt(2.0 ** 0.25 - 1.0)
ERB_BANDWIDTH_FACTOR = 1.019


class FilterKind(str, enum.Enum):
    MEL = 'mel'
    GAMMATONE_NORM = 'gammatone_norm'
    GAMMATONE_SQNORM = 'gammatone_sqnorm'
    DOG = 'dog'


@dataclasses.dataclass(frozen=True, eq=False)
class FilterBank:
    """
    Filter coefficients sampled per STFT bin.

    weights has shape (n_filters, n_bins); center_freqs holds one
    frequency per filter. alpha is the surround bandwidth factor and is
    only set for DoG banks.
    """
    weights: np.ndarray
    center_freqs: np.ndarray
    kind: FilterKind
    alpha: ty.Optional[float] = None

    def __post_init__(self) -> None:
        weights = np.array(self.weights, dtype=np.float64)
        centers = np.array(self.center_freqs, dtype=np.float64)
        kind = FilterKind(self.kind)
        if weights.ndim != 2 or centers.shape != (weights.shape[0],):
            raise ValueError(
                f'Weights of shape {weights.shape} do not match '
                f'{centers.size} center frequencies'
            )
        if np.any(np.diff(centers) <= 0):
            raise ValueError('Center frequencies must be strictly increasing.')
        if (kind is FilterKind.DOG) != (self.alpha is not None):
            raise ValueError('alpha is set for, and only for, DoG banks.')
        weights.setflags(write=False)
        centers.setflags(write=False)
        object.__setattr__(self, 'weights', weights)
        object.__setattr__(self, 'center_freqs', centers)
        object.__setattr__(self, 'kind', kind)

    @property
    def n_filters(self) -> int:
        return self.weights.shape[0]

    @property
    def n_bins(self) -> int:
        return self.weights.shape[1]


def _check_range(
        n_filters: int, n_bins: int, sample_rate: int, f_min: float, f_max: float
) -> None:
    if n_filters < 1:
        raise ValueError(f'At least one filter is required, got {n_filters}')
    if n_bins < 2:
        raise ValueError(f'At least two bins are required, got {n_bins}')
    if not 0 <= f_min < f_max <= sample_rate / 2:
        raise ValueError(
            f'Invalid frequency range [{f_min}, {f_max}] Hz for sample rate '
            f'{sample_rate} Hz'
        )


@functools.lru_cache(maxsize=64)
def mel_filterbank(
        n_filters: int,
        n_bins: int,
        sample_rate: int,
        f_min: float,
        f_max: float,
) -> FilterBank:
    """
    Triangular mel filterbank, each row normalized to unit sum.

    Peaks are spaced uniformly on the HTK mel scale between f_min and
    f_max, and each triangle reaches from the previous peak to the next.
    A triangle that covers no bin gets unit weight at the bin nearest its
    peak.
    """
    _check_range(n_filters, n_bins, sample_rate, f_min, f_max)
    freqs = scales.bin_frequencies(n_bins, sample_rate)
    mels = np.linspace(
        scales.hz_to_mel(f_min), scales.hz_to_mel(f_max), n_filters + 2
    )
    edges = scales.mel_to_hz(mels)
    lower, center, upper = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs - lower) / (center - lower)
    falling = (upper - freqs) / (upper - center)
    weights = np.maximum(0.0, np.minimum(rising, falling))

    empty = weights.sum(axis=1) == 0
    if np.any(empty):
        nearest = np.abs(freqs[None, :] - center[empty]).argmin(axis=1)
        weights[np.flatnonzero(empty), nearest] = 1.0

    weights /= weights.sum(axis=1, keepdims=True)
    return FilterBank(weights, edges[1:-1], FilterKind.MEL)


def erb_space(n_filters: int, f_min: float, f_max: float) -> np.ndarray:
    """
    Frequencies spaced uniformly on the ERB-rate scale, f_min and f_max
    included.
    """
    if n_filters == 1:
        return np.array([f_min], dtype=np.float64)
    rates = np.linspace(scales.erb_rate(f_min), scales.erb_rate(f_max), n_filters)
    centers = scales.erb_rate_to_hz(rates)
    centers[0], centers[-1] = f_min, f_max
    return centers


def gammatone_response(
        freqs: np.ndarray, centers: np.ndarray, bandwidth_scale: float = 1.0
) -> np.ndarray:
    """
    4th-order gammatone magnitude response, [1 + ((f - fc) / b)^2]^-2.

    b is chosen so that the half-power bandwidth equals
    1.019 * ERB(fc) * bandwidth_scale.

    :return: Array of shape (len(centers), len(freqs)).
    """
    bandwidth = ERB_BANDWIDTH_FACTOR * scales.erb_bandwidth(centers)
    b = bandwidth_scale * bandwidth / (2.0 * _HALF_POWER_X)
    x = (freqs[None, :] - centers[:, None]) / b[:, None]
    return (1.0 + x ** 2) ** -2


@functools.lru_cache(maxsize=64)
def gammatone_filterbank(
        n_filters: int,
        n_bins: int,
        sample_rate: int,
        f_min: float,
        f_max: float,
        squared: bool = False,
) -> FilterBank:
    """
    Gammatone filterbank with ERB-spaced centers.

    :param squared: If False, each row is divided by its sum so the area
                under each filter is 1. If True, coefficients are squared
                first and then divided by the sum of squares.
    """
    _check_range(n_filters, n_bins, sample_rate, f_min, f_max)
    freqs = scales.bin_frequencies(n_bins, sample_rate)
    centers = erb_space(n_filters, f_min, f_max)
    weights = gammatone_response(freqs, centers)
    if squared:
        weights = weights ** 2
        kind = FilterKind.GAMMATONE_SQNORM
    else:
        kind = FilterKind.GAMMATONE_NORM
    weights /= weights.sum(axis=1, keepdims=True)
    return FilterBank(weights, centers, kind)


def dog_difference(
        n_filters: int,
        n_bins: int,
        sample_rate: int,
        f_min: float,
        f_max: float,
        alpha: float,
) -> ty.Tuple[np.ndarray, np.ndarray]:
    """
    Unnormalized difference of two unit-area gammatone banks, G_1 - G_alpha.

    :return: (difference weights, center frequencies)
    """
    if not alpha > 1:
        raise ValueError(
            f'alpha must exceed 1, surround must be wider than center: {alpha}'
        )
    _check_range(n_filters, n_bins, sample_rate, f_min, f_max)
    freqs = scales.bin_frequencies(n_bins, sample_rate)
    centers = erb_space(n_filters, f_min, f_max)
    center = gammatone_response(freqs, centers)
    surround = gammatone_response(freqs, centers, bandwidth_scale=alpha)
    center /= center.sum(axis=1, keepdims=True)
    surround /= surround.sum(axis=1, keepdims=True)
    return center - surround, centers


@functools.lru_cache(maxsize=64)
def dog_filterbank(
        n_filters: int,
        n_bins: int,
        sample_rate: int,
        f_min: float,
        f_max: float,
        alpha: float,
) -> FilterBank:
    """
    Difference-of-gammatones filterbank.

    Each row of G_1 - G_alpha is divided by the sum of its positive
    coefficients, so the excitatory center sums to 1 and the suppressive
    surround carries the negative weight.

    :param alpha: Bandwidth factor of the surround filters, > 1.
    """
    difference, centers = dog_difference(
        n_filters, n_bins, sample_rate, f_min, f_max, alpha
    )
    excitatory = np.maximum(difference, 0.0).sum(axis=1, keepdims=True)
    return FilterBank(difference / excitatory, centers, FilterKind.DOG, alpha)


def apply_filterbank(spec: Spectrogram, fb: FilterBank) -> Spectrogram:
    """
    Applies a filterbank to every frame of a magnitude or power spectrogram.

    The result is linear in the input; DoG outputs may be negative.

    :return: Spectrogram(feature) with one column per filter.
    """
    require_domain(spec, Domain.MAGNITUDE, Domain.POWER)
    if spec.n_bins != fb.n_bins:
        raise ValueError(
            f'Spectrogram has {spec.n_bins} bins but the filterbank '
            f'expects {fb.n_bins}'
        )
    return Spectrogram(spec.data @ fb.weights.T, fb.center_freqs, Domain.FEATURE)
