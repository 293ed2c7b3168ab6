"""
Time-domain preprocessing, STFT, and the PSD transforms that feed the
masking model.
"""
import dataclasses
import enum
import typing as ty

import numpy as np
import scipy.fft
import scipy.signal


DEFAULT_SAMPLE_RATE = 16000
DEFAULT_WIN_LENGTH = 400
DEFAULT_HOP_LENGTH = 160
DEFAULT_N_FFT = 400

# Level assigned to zero-magnitude bins, dB relative to the window size.
FLOOR_DB = -200.0

SPL_REFERENCE_DB = 96.0

WINDOWS = ('hann', 'hamming')


class Domain(str, enum.Enum):
    """ What the values of a Spectrogram represent. """
    MAGNITUDE = 'magnitude'
    POWER = 'power'
    PSD_DB = 'psd_db'
    NORMALIZED_PSD_DB = 'normalized_psd_db'
    FEATURE = 'feature'


class DomainMismatchError(ValueError):
    """ Raised when an operation receives a spectrogram in the wrong domain. """


def _frozen_array(values: ty.Any) -> np.ndarray:
    array = np.array(values, dtype=np.float64)
    array.setflags(write=False)
    return array


@dataclasses.dataclass(frozen=True, eq=False)
class AudioBuffer:
    """
    Mono PCM samples and their sample rate.

    Samples are stored as a read-only float64 array.
    """
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self) -> None:
        samples = _frozen_array(self.samples)
        if samples.ndim != 1:
            raise ValueError(
                f'Expected mono samples, got array of shape {samples.shape}'
            )
        if samples.size < 1:
            raise ValueError('Audio buffer must hold at least one sample.')
        if not np.all(np.isfinite(samples)):
            raise ValueError('Audio buffer contains non-finite samples.')
        if isinstance(self.sample_rate, bool) or int(self.sample_rate) <= 0:
            raise ValueError(f'Invalid sample rate: {self.sample_rate}')
        object.__setattr__(self, 'samples', samples)
        object.__setattr__(self, 'sample_rate', int(self.sample_rate))

    @classmethod
    def _derived(cls, samples: np.ndarray, sample_rate: int) -> 'AudioBuffer':
        """ Wraps samples computed from an already validated buffer. """
        samples.setflags(write=False)
        buffer = object.__new__(cls)
        object.__setattr__(buffer, 'samples', samples)
        object.__setattr__(buffer, 'sample_rate', sample_rate)
        return buffer

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def with_samples(self, samples: ty.Any) -> 'AudioBuffer':
        """ Returns a buffer with new samples at the same rate. """
        return AudioBuffer(samples, self.sample_rate)


@dataclasses.dataclass(frozen=True)
class StftConfig:
    """
    Framing parameters of the STFT. Lengths are in samples.
    """
    win_length: int = DEFAULT_WIN_LENGTH
    hop_length: int = DEFAULT_HOP_LENGTH
    n_fft: int = DEFAULT_N_FFT
    window: str = 'hann'

    def __post_init__(self) -> None:
        if not 0 < self.hop_length <= self.win_length <= self.n_fft:
            raise ValueError(
                'STFT config requires 0 < hop_length <= win_length <= n_fft, '
                f'got hop={self.hop_length} win={self.win_length} '
                f'n_fft={self.n_fft}'
            )
        if self.n_fft % 2:
            # Filterbanks place bin k at k * sr / (2 * (n_bins - 1)).
            raise ValueError(f'n_fft must be even: {self.n_fft}')
        if self.window not in WINDOWS:
            raise ValueError(
                f'Unknown window {self.window!r}, expected one of {WINDOWS}'
            )

    @property
    def n_bins(self) -> int:
        return self.n_fft // 2 + 1

    def n_frames(self, length: int) -> int:
        """
        Number of frames produced for a signal of the passed length.
        :raise ValueError if the signal is shorter than one window.
        """
        if length < self.win_length:
            raise ValueError(
                f'Signal of {length} samples is too short for a '
                f'{self.win_length}-sample window (input too short)'
            )
        return 1 + (length - self.win_length) // self.hop_length


@dataclasses.dataclass(frozen=True, eq=False)
class Spectrogram:
    """
    Frames x bins real matrix tagged with the domain of its values.

    For filterbank outputs the columns are channels and bin_freqs holds
    the channel center frequencies.
    """
    data: np.ndarray
    bin_freqs: np.ndarray
    domain: Domain

    def __post_init__(self) -> None:
        data = _frozen_array(self.data)
        bin_freqs = _frozen_array(self.bin_freqs)
        domain = Domain(self.domain)
        if data.ndim != 2:
            raise ValueError(
                f'Spectrogram data must be 2-D, got shape {data.shape}'
            )
        if bin_freqs.shape != (data.shape[1],):
            raise ValueError(
                f'{bin_freqs.size} bin frequencies given for '
                f'{data.shape[1]} columns'
            )
        if np.any(np.diff(bin_freqs) <= 0):
            raise ValueError('Bin frequencies must be strictly increasing.')
        if domain in (Domain.MAGNITUDE, Domain.POWER) and np.any(data < 0):
            raise ValueError(f'Negative values in a {domain.value} spectrogram.')
        object.__setattr__(self, 'data', data)
        object.__setattr__(self, 'bin_freqs', bin_freqs)
        object.__setattr__(self, 'domain', domain)

    @property
    def n_frames(self) -> int:
        return self.data.shape[0]

    @property
    def n_bins(self) -> int:
        return self.data.shape[1]

    def replace(self, data: np.ndarray, domain: Domain) -> 'Spectrogram':
        return Spectrogram(data, self.bin_freqs, domain)


def require_domain(spec: Spectrogram, *domains: Domain) -> None:
    """
    Checks that a spectrogram is in one of the passed domains.
    :raise DomainMismatchError otherwise.
    """
    if spec.domain not in domains:
        expected = ', '.join(d.value for d in domains)
        raise DomainMismatchError(
            f'Expected a spectrogram in domain {expected}, '
            f'got {spec.domain.value}'
        )


def pre_emphasize(audio: AudioBuffer, coeff: float) -> AudioBuffer:
    """
    First-order pre-emphasis: y[0] = x[0], y[t] = x[t] - coeff * x[t-1].
    """
    if not 0 <= coeff < 1:
        raise ValueError(f'Pre-emphasis coefficient must be in [0, 1): {coeff}')
    x = audio.samples
    y = np.empty_like(x)
    y[0] = x[0]
    np.multiply(x[:-1], -coeff, out=y[1:])
    y[1:] += x[1:]
    if not np.all(np.isfinite(y)):
        raise ValueError('Pre-emphasis overflowed.')
    return AudioBuffer._derived(y, audio.sample_rate)


def frame_signal(samples: np.ndarray, cfg: StftConfig) -> np.ndarray:
    """
    Slices a signal into overlapping frames.

    :return: read-only view of shape (n_frames, win_length).
    """
    n_frames = cfg.n_frames(samples.size)
    windows = np.lib.stride_tricks.sliding_window_view(
        samples, cfg.win_length
    )
    return windows[::cfg.hop_length][:n_frames]


def stft(audio: AudioBuffer, cfg: StftConfig = StftConfig()) -> Spectrogram:
    """
    Magnitude STFT of an audio buffer.

    Frames are windowed, zero-padded to n_fft and transformed with a real
    FFT. No centering or padding is applied to the signal itself, so the
    frame count is 1 + (len - win_length) // hop_length.

    :param audio: Input buffer, at least win_length samples long.
    :param cfg: Framing parameters.
    :return: Spectrogram in the magnitude domain.
    """
    frames = frame_signal(audio.samples, cfg)
    window = scipy.signal.get_window(cfg.window, cfg.win_length, fftbins=True)
    spectrum = scipy.fft.rfft(frames * window, n=cfg.n_fft, axis=-1)
    bin_freqs = np.arange(cfg.n_bins) * audio.sample_rate / cfg.n_fft
    return Spectrogram(np.abs(spectrum), bin_freqs, Domain.MAGNITUDE)


def power_spectrum(spec: Spectrogram) -> Spectrogram:
    require_domain(spec, Domain.MAGNITUDE)
    return spec.replace(np.square(spec.data), Domain.POWER)


def psd_db(spec: Spectrogram, n: int) -> Spectrogram:
    """
    Log-magnitude PSD, 10 * log10(|s / n|^2), in dB.

    Magnitudes are clamped to 10^(FLOOR_DB / 20) * n first so that empty
    bins land on FLOOR_DB instead of -inf.

    :param spec: Magnitude spectrogram.
    :param n: Window size in samples used to compute the STFT.
    """
    require_domain(spec, Domain.MAGNITUDE)
    if n <= 0:
        raise ValueError(f'Window size must be positive: {n}')
    floor = 10.0 ** (FLOOR_DB / 20.0) * n
    magnitude = np.maximum(spec.data, floor)
    return spec.replace(20.0 * np.log10(magnitude / n), Domain.PSD_DB)


def normalize_psd(spec: Spectrogram) -> Spectrogram:
    """
    Shifts each frame so that its loudest bin sits at 96 dB SPL.
    """
    require_domain(spec, Domain.PSD_DB)
    peak = spec.data.max(axis=1, keepdims=True)
    normalized = SPL_REFERENCE_DB - peak + spec.data
    return spec.replace(normalized, Domain.NORMALIZED_PSD_DB)


def smooth_psd(spec: Spectrogram) -> Spectrogram:
    """
    Power-sums every bin with its two neighbours, in dB.

    Out-of-range neighbours of the edge bins contribute zero power.
    """
    require_domain(spec, Domain.NORMALIZED_PSD_DB)
    power = np.power(10.0, spec.data / 10.0)
    total = power.copy()
    total[:, 1:] += power[:, :-1]
    total[:, :-1] += power[:, 1:]
    return spec.replace(10.0 * np.log10(total), Domain.NORMALIZED_PSD_DB)
