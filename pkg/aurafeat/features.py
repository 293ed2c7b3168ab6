"""
The nine feature pipelines.

Every pipeline starts from the STFT of the (optionally pre-emphasized)
signal:

    LogSpec       power -> log
    LogMelSpec    power -> mel bank -> log
    MFCC          LogMelSpec -> DCT
    GammSpec      power -> gammatone bank -> cube root
    FreqMask      magnitude -> frequency masking -> power -> cube root
    GammFreqMask  power -> gammatone bank -> frequency masking -> cube root
    PNC           pre-emphasis -> power -> squared gammatone bank -> PNC chain
    PNCC          PNC -> DCT
    DoGSpec       pre-emphasis -> power -> DoG bank -> rectify -> cube root
"""
import dataclasses
import enum
import hashlib
import json
import logging
import typing as ty

import numpy as np
import scipy.fft

from aurafeat import dsp, filterbank, masking, pnc
from aurafeat.dsp import AudioBuffer, Domain, Spectrogram, StftConfig
from aurafeat.filterbank import FilterBank, FilterKind
from aurafeat.masking import MaskConfig
from aurafeat.pnc import PncConfig


logger = logging.getLogger(__name__)


class FeatureKind(enum.Enum):
    """
    Feature pipelines. The declaration order fixes the numeric id stored
    in AFM1 files.
    """
    LOG_SPEC = 'LogSpec'
    LOG_MEL_SPEC = 'LogMelSpec'
    MFCC = 'MFCC'
    GAMM_SPEC = 'GammSpec'
    FREQ_MASK = 'FreqMask'
    GAMM_FREQ_MASK = 'GammFreqMask'
    PNC = 'PNC'
    PNCC = 'PNCC'
    DOG_SPEC = 'DoGSpec'

    @property
    def kind_id(self) -> int:
        return list(FeatureKind).index(self)

    @property
    def cli_name(self) -> str:
        return self.value.lower()

    @classmethod
    def from_id(cls, kind_id: int) -> 'FeatureKind':
        kinds = list(cls)
        if not 0 <= kind_id < len(kinds):
            raise ValueError(f'Unknown feature kind id: {kind_id}')
        return kinds[kind_id]

    @classmethod
    def parse(cls, name: str) -> 'FeatureKind':
        """ Looks a kind up by name, ignoring case. """
        for kind in cls:
            if name.lower() in (kind.cli_name, kind.name.lower()):
                return kind
        names = ', '.join(k.cli_name for k in cls)
        raise ValueError(f'Unknown feature kind {name!r}. Expected one of: {names}')


PRE_EMPHASIZED = frozenset({FeatureKind.PNC, FeatureKind.PNCC, FeatureKind.DOG_SPEC})


@dataclasses.dataclass(frozen=True)
class FeatureConfig:
    """
    Everything that determines a feature matrix.

    n_ceps defaults to n_filters so cepstral features keep the input width
    of the filterbank features. f_max defaults to the Nyquist frequency.
    """
    kind: FeatureKind = FeatureKind.LOG_MEL_SPEC
    sample_rate: int = dsp.DEFAULT_SAMPLE_RATE
    stft: StftConfig = StftConfig()
    n_filters: int = 80
    n_ceps: ty.Optional[int] = None
    f_min: float = 20.0
    f_max: ty.Optional[float] = None
    dog_alpha: float = 2.0
    pre_emph: float = 0.97
    log_floor: float = 1e-10
    mask: MaskConfig = MaskConfig()
    pnc: PncConfig = PncConfig()

    def __post_init__(self) -> None:
        object.__setattr__(self, 'kind', FeatureKind(self.kind))
        if self.sample_rate <= 0:
            raise ValueError(f'Invalid sample rate: {self.sample_rate}')
        if self.n_filters < 1:
            raise ValueError(f'n_filters must be >= 1: {self.n_filters}')
        if self.n_ceps is not None and not 1 <= self.n_ceps <= self.n_filters:
            raise ValueError(
                f'n_ceps must be in [1, n_filters={self.n_filters}]: '
                f'{self.n_ceps}'
            )
        nyquist = self.sample_rate / 2
        if not 0 <= self.f_min < self.upper_freq <= nyquist:
            raise ValueError(
                f'Invalid filterbank range [{self.f_min}, {self.upper_freq}] Hz '
                f'for sample rate {self.sample_rate} Hz'
            )
        if not self.dog_alpha > 1:
            raise ValueError(
                'dog_alpha must exceed 1, surround must be wider than '
                f'center: {self.dog_alpha}'
            )
        if not 0 <= self.pre_emph < 1:
            raise ValueError(f'pre_emph must be in [0, 1): {self.pre_emph}')
        if not self.log_floor > 0:
            raise ValueError(f'log_floor must be positive: {self.log_floor}')

    @property
    def upper_freq(self) -> float:
        return self.sample_rate / 2 if self.f_max is None else self.f_max

    @property
    def cepstra(self) -> int:
        return self.n_filters if self.n_ceps is None else self.n_ceps

    def with_kind(self, kind: FeatureKind) -> 'FeatureConfig':
        return dataclasses.replace(self, kind=kind)

    def to_dict(self) -> ty.Dict[str, ty.Any]:
        """ Plain JSON-compatible representation with enums as strings. """
        def convert(value):
            if isinstance(value, enum.Enum):
                return value.value
            if isinstance(value, dict):
                return {k: convert(v) for k, v in value.items()}
            return value
        return convert(dataclasses.asdict(self))

    @property
    def fingerprint(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(canonical.encode('utf-8')).hexdigest()[:16]


@dataclasses.dataclass(frozen=True, eq=False)
class FeatureMatrix:
    data: np.ndarray
    kind: FeatureKind
    fingerprint: str = ''

    def __post_init__(self) -> None:
        data = np.array(self.data)
        if data.ndim != 2:
            raise ValueError(f'Feature matrix must be 2-D, got {data.shape}')
        if not np.all(np.isfinite(data)):
            raise ValueError(f'{self.kind.value} features contain non-finite values.')
        data.setflags(write=False)
        object.__setattr__(self, 'data', data)

    @property
    def n_frames(self) -> int:
        return self.data.shape[0]

    @property
    def n_dims(self) -> int:
        return self.data.shape[1]


def dct_ii(row: np.ndarray, n_out: ty.Optional[int] = None) -> np.ndarray:
    """
    Orthonormal DCT-II along the last axis, truncated to n_out coefficients.
    """
    row = np.asarray(row, dtype=np.float64)
    length = row.shape[-1]
    n_out = length if n_out is None else n_out
    if not 0 < n_out <= length:
        raise ValueError(
            f'Cannot keep {n_out} DCT coefficients of a length-{length} input'
        )
    return scipy.fft.dct(row, type=2, norm='ortho', axis=-1)[..., :n_out]


def inverse_dct(coeffs: np.ndarray) -> np.ndarray:
    """ Orthonormal DCT-III, the inverse of a full-length dct_ii. """
    return scipy.fft.idct(
        np.asarray(coeffs, dtype=np.float64), type=2, norm='ortho', axis=-1
    )


def filterbank_for(kind: FilterKind, cfg: FeatureConfig) -> FilterBank:
    """
    The filterbank of the given kind for a feature config.
    """
    args = (
        cfg.n_filters, cfg.stft.n_bins, cfg.sample_rate,
        float(cfg.f_min), float(cfg.upper_freq),
    )
    if kind is FilterKind.MEL:
        return filterbank.mel_filterbank(*args)
    if kind is FilterKind.GAMMATONE_NORM:
        return filterbank.gammatone_filterbank(*args, False)
    if kind is FilterKind.GAMMATONE_SQNORM:
        return filterbank.gammatone_filterbank(*args, True)
    return filterbank.dog_filterbank(*args, float(cfg.dog_alpha))


def feature_dims(cfg: FeatureConfig) -> int:
    """ Output width of the configured feature. """
    if cfg.kind in (FeatureKind.LOG_SPEC, FeatureKind.FREQ_MASK):
        return cfg.stft.n_bins
    if cfg.kind in (FeatureKind.MFCC, FeatureKind.PNCC):
        return cfg.cepstra
    return cfg.n_filters


class _Spectra:
    """
    Lazily computed magnitude spectrograms of a signal, with and without
    pre-emphasis. Derived arrays are built fresh for every consumer.
    """
    def __init__(self, audio: AudioBuffer, cfg: FeatureConfig) -> None:
        if audio.sample_rate != cfg.sample_rate:
            raise ValueError(
                f'Audio sample rate {audio.sample_rate} Hz does not match the '
                f'configured {cfg.sample_rate} Hz; resample the input first.'
            )
        cfg.stft.n_frames(len(audio))
        self.audio = audio
        self.cfg = cfg
        self._plain: ty.Optional[Spectrogram] = None
        self._emphasized: ty.Optional[Spectrogram] = None

    def magnitude(self, emphasized: bool) -> Spectrogram:
        if emphasized:
            if self._emphasized is None:
                audio = dsp.pre_emphasize(self.audio, self.cfg.pre_emph)
                self._emphasized = dsp.stft(audio, self.cfg.stft)
            return self._emphasized
        if self._plain is None:
            self._plain = dsp.stft(self.audio, self.cfg.stft)
        return self._plain

    def power(self, emphasized: bool = False) -> Spectrogram:
        return dsp.power_spectrum(self.magnitude(emphasized))


def _log(values: np.ndarray, floor: float) -> np.ndarray:
    return np.log(np.maximum(values, floor))


def _log_spec(spectra: _Spectra, cfg: FeatureConfig) -> np.ndarray:
    return _log(spectra.power().data, cfg.log_floor)


def _log_mel_spec(spectra: _Spectra, cfg: FeatureConfig) -> np.ndarray:
    fb = filterbank_for(FilterKind.MEL, cfg)
    mel = filterbank.apply_filterbank(spectra.power(), fb)
    return _log(mel.data, cfg.log_floor)


def _mfcc(spectra: _Spectra, cfg: FeatureConfig) -> np.ndarray:
    return dct_ii(_log_mel_spec(spectra, cfg), cfg.cepstra)


def _gamm_spec(spectra: _Spectra, cfg: FeatureConfig) -> np.ndarray:
    fb = filterbank_for(FilterKind.GAMMATONE_NORM, cfg)
    return np.cbrt(filterbank.apply_filterbank(spectra.power(), fb).data)


def _freq_mask(spectra: _Spectra, cfg: FeatureConfig) -> np.ndarray:
    masked = masking.apply_freq_mask(
        spectra.magnitude(False), cfg.mask, cfg.stft.win_length
    )
    return np.cbrt(dsp.power_spectrum(masked).data)


def _gamm_freq_mask(spectra: _Spectra, cfg: FeatureConfig) -> np.ndarray:
    fb = filterbank_for(FilterKind.GAMMATONE_NORM, cfg)
    channels = filterbank.apply_filterbank(spectra.power(), fb)
    # The masking model reads channel power as a magnitude spectrum whose
    # bins sit at the filter centers.
    magnitude = Spectrogram(
        np.sqrt(channels.data), channels.bin_freqs, Domain.MAGNITUDE
    )
    keep = masking.mask_decisions(magnitude, cfg.mask, cfg.stft.win_length)
    return np.cbrt(np.where(keep, channels.data, 0.0))


def _pnc(spectra: _Spectra, cfg: FeatureConfig) -> np.ndarray:
    fb = filterbank_for(FilterKind.GAMMATONE_SQNORM, cfg)
    p = pnc.power_to_channels(spectra.power(emphasized=True), fb)
    u = pnc.pnc_chain(p, cfg.pnc)
    return pnc.rate_level(u, cfg.pnc.power_exponent).data


def _pncc(spectra: _Spectra, cfg: FeatureConfig) -> np.ndarray:
    return dct_ii(_pnc(spectra, cfg), cfg.cepstra)


def _dog_spec(spectra: _Spectra, cfg: FeatureConfig) -> np.ndarray:
    fb = filterbank_for(FilterKind.DOG, cfg)
    response = filterbank.apply_filterbank(spectra.power(emphasized=True), fb)
    return np.cbrt(np.maximum(response.data, 0.0))


_PIPELINES: ty.Dict[FeatureKind, ty.Callable[[_Spectra, FeatureConfig], np.ndarray]] = {
    FeatureKind.LOG_SPEC: _log_spec,
    FeatureKind.LOG_MEL_SPEC: _log_mel_spec,
    FeatureKind.MFCC: _mfcc,
    FeatureKind.GAMM_SPEC: _gamm_spec,
    FeatureKind.FREQ_MASK: _freq_mask,
    FeatureKind.GAMM_FREQ_MASK: _gamm_freq_mask,
    FeatureKind.PNC: _pnc,
    FeatureKind.PNCC: _pncc,
    FeatureKind.DOG_SPEC: _dog_spec,
}


def _run(spectra: _Spectra, cfg: FeatureConfig) -> FeatureMatrix:
    data = _PIPELINES[cfg.kind](spectra, cfg)
    logger.debug(
        '%s: %d frames x %d dims', cfg.kind.value, data.shape[0], data.shape[1]
    )
    return FeatureMatrix(data, cfg.kind, cfg.fingerprint)


def extract(audio: AudioBuffer, cfg: FeatureConfig) -> FeatureMatrix:
    """
    Computes one feature for an audio buffer.

    :param audio: Mono audio at cfg.sample_rate, at least one window long.
    :param cfg: Feature configuration; cfg.kind selects the pipeline.
    :return: FeatureMatrix tagged with the config fingerprint.
    :raise ValueError on a sample-rate mismatch or too short input.
    """
    return _run(_Spectra(audio, cfg), cfg)


def spectrogram(
        audio: AudioBuffer, cfg: FeatureConfig, emphasized: ty.Optional[bool] = None
) -> Spectrogram:
    """
    The magnitude STFT a pipeline of this config starts from. Pre-emphasis
    follows cfg.kind unless emphasized is given.
    """
    if emphasized is None:
        emphasized = cfg.kind in PRE_EMPHASIZED
    return _Spectra(audio, cfg).magnitude(emphasized)


def extract_all(
        audio: AudioBuffer, base_cfg: FeatureConfig
) -> ty.Dict[FeatureKind, FeatureMatrix]:
    """
    Computes every feature kind, sharing the STFTs between pipelines.

    base_cfg.kind is ignored; each entry carries its own kind and
    fingerprint and equals extract() for that kind.
    """
    spectra = _Spectra(audio, base_cfg)
    return {kind: _run(spectra, base_cfg.with_kind(kind)) for kind in FeatureKind}
