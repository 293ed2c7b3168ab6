"""
Simultaneous frequency masking.

Every bin of a frame is treated as a masker. The threshold a masker at
bark b(i) induces on bin j is

    T[i, j] = p_m(i) + offset(b(i)) + SF(b(i), b(j), p_m(i))

where p_m is the neighbour-smoothed normalized PSD. The global threshold
theta(j) power-sums T[:, j] with the absolute threshold of hearing, and a
bin is zeroed when its (unsmoothed) normalized PSD falls below theta(j).
"""
import dataclasses
import enum
import typing as ty

import numpy as np
import scipy.special

from aurafeat import dsp, scales
from aurafeat.dsp import Domain, Spectrogram


LOWER_SLOPE_DB_PER_BARK = 27.0

# dB -> natural-log scale of power, for logsumexp.
_DB_TO_LN = np.log(10.0) / 10.0

# Cells of the (frames, F + 1, F) term buffer built per threshold evaluation.
TERM_BUFFER_CELLS = 1 << 21


class SpreadConvention(str, enum.Enum):
    """
    STANDARD measures the bark distance as maskee - masker, giving the
    usual two-slope spreading function that decays on both sides of the
    masker. PAPER_LITERAL takes masker - maskee verbatim.
    """
    STANDARD = 'standard'
    PAPER_LITERAL = 'paper_literal'


@dataclasses.dataclass(frozen=True)
class MaskConfig:
    spread_convention: SpreadConvention = SpreadConvention.STANDARD
    spl_reference: float = dsp.SPL_REFERENCE_DB

    def __post_init__(self) -> None:
        object.__setattr__(
            self, 'spread_convention', SpreadConvention(self.spread_convention)
        )
        if self.spl_reference != dsp.SPL_REFERENCE_DB:
            raise ValueError(
                f'spl_reference must be {dsp.SPL_REFERENCE_DB} dB, '
                f'got {self.spl_reference}'
            )


@dataclasses.dataclass(frozen=True, eq=False)
class MaskingThresholds:
    """
    Global masking threshold per frame and bin, in dB SPL.
    """
    theta: np.ndarray
    bin_freqs: np.ndarray

    def __post_init__(self) -> None:
        theta = np.array(self.theta, dtype=np.float64)
        bin_freqs = np.array(self.bin_freqs, dtype=np.float64)
        if theta.ndim != 2 or theta.shape[1] != bin_freqs.size:
            raise ValueError(
                f'Threshold matrix of shape {theta.shape} does not match '
                f'{bin_freqs.size} bins'
            )
        theta.setflags(write=False)
        bin_freqs.setflags(write=False)
        object.__setattr__(self, 'theta', theta)
        object.__setattr__(self, 'bin_freqs', bin_freqs)


def masking_offset(b: scales.Frequency) -> scales.Frequency:
    """ Masker-to-threshold offset in dB, -6.025 - 0.275 b. """
    return -6.025 - 0.275 * b


def masker_gain(level_db: scales.Frequency) -> scales.Frequency:
    """
    Upper spreading slope in dB per bark, -27 + 0.37 max(level - 40, 0).
    Louder maskers spread further towards higher frequencies.
    """
    return -27.0 + 0.37 * np.maximum(np.subtract(level_db, 40.0), 0.0)


def spread_function(
        masker_bark: scales.Frequency,
        maskee_bark: scales.Frequency,
        masker_level_db: scales.Frequency,
        cfg: MaskConfig = MaskConfig(),
) -> scales.Frequency:
    """
    Spreading of a masker onto a maskee in dB.

    Broadcasts over array arguments.
    """
    masker_bark = np.asarray(masker_bark, dtype=np.float64)
    maskee_bark = np.asarray(maskee_bark, dtype=np.float64)
    gain = masker_gain(masker_level_db)
    if cfg.spread_convention is SpreadConvention.STANDARD:
        dz = maskee_bark - masker_bark
        spread = np.where(dz < 0, LOWER_SLOPE_DB_PER_BARK * dz, gain * dz)
    else:
        db = masker_bark - maskee_bark
        spread = np.where(db > 0, LOWER_SLOPE_DB_PER_BARK * db, gain * db)
    return float(spread) if spread.ndim == 0 else spread


def _quiet_thresholds(bin_freqs: np.ndarray) -> np.ndarray:
    """
    ATH per bin. A 0 Hz bin borrows the ATH of the first nonzero bin.
    """
    freqs = np.asarray(bin_freqs, dtype=np.float64)
    positive = freqs[freqs > 0]
    if positive.size == 0:
        raise ValueError('At least one positive bin frequency is required.')
    return scales.ath_db(np.where(freqs > 0, freqs, positive[0]))


class _BarkGrid(ty.NamedTuple):
    """
    Per-grid constants of the threshold computation. Rows index maskers,
    columns maskees.
    """
    offsets: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    quiet: np.ndarray


def _bark_grid(bin_freqs: np.ndarray, cfg: MaskConfig) -> _BarkGrid:
    barks = scales.hz_to_bark(bin_freqs)
    dz = barks[None, :] - barks[:, None]
    # The literal convention flips the sign of the bark distance, which
    # mirrors both slopes.
    sign = 1.0 if cfg.spread_convention is SpreadConvention.STANDARD else -1.0
    return _BarkGrid(
        offsets=masking_offset(barks),
        lower=sign * LOWER_SLOPE_DB_PER_BARK * np.minimum(dz, 0.0),
        upper=sign * np.maximum(dz, 0.0),
        quiet=_quiet_thresholds(bin_freqs),
    )


def _thresholds(smoothed: np.ndarray, grid: _BarkGrid) -> np.ndarray:
    """
    Global thresholds for a (frames, F) block of smoothed PSD rows.
    """
    base = (smoothed + grid.offsets)[:, :, None]
    gain = masker_gain(smoothed)[:, :, None]
    individual = base + grid.lower + gain * grid.upper
    quiet_row = np.broadcast_to(grid.quiet, (smoothed.shape[0], 1, grid.quiet.size))
    terms = np.concatenate((quiet_row, individual), axis=1)
    return scipy.special.logsumexp(terms * _DB_TO_LN, axis=1) / _DB_TO_LN


def masking_threshold_matrix(
        frame: np.ndarray,
        bin_freqs: np.ndarray,
        cfg: MaskConfig = MaskConfig(),
) -> np.ndarray:
    """
    Global masking threshold of one frame.

    :param frame: Normalized, neighbour-smoothed PSD row in dB.
    :param bin_freqs: Frequency of each bin in Hz.
    :return: theta, one value per bin in dB SPL.
    """
    frame = np.asarray(frame, dtype=np.float64)
    bin_freqs = np.asarray(bin_freqs, dtype=np.float64)
    if frame.shape != bin_freqs.shape or frame.ndim != 1:
        raise ValueError(
            f'Frame of shape {frame.shape} does not match '
            f'{bin_freqs.size} bin frequencies'
        )
    return _thresholds(frame[None, :], _bark_grid(bin_freqs, cfg))[0]


def chunk_frames(n_bins: int) -> int:
    """
    Frames evaluated together so the term buffer stays within
    TERM_BUFFER_CELLS. A single frame always needs (F + 1) * F cells.
    """
    return max(1, TERM_BUFFER_CELLS // ((n_bins + 1) * n_bins))


def _normalized_levels(
        spec: Spectrogram, window_size: int
) -> ty.Tuple[Spectrogram, Spectrogram]:
    normalized = dsp.normalize_psd(dsp.psd_db(spec, window_size))
    return normalized, dsp.smooth_psd(normalized)


def _thresholds_for(
        smoothed: Spectrogram, cfg: MaskConfig
) -> np.ndarray:
    grid = _bark_grid(smoothed.bin_freqs, cfg)
    theta = np.empty_like(smoothed.data)
    step = chunk_frames(smoothed.n_bins)
    for start in range(0, smoothed.n_frames, step):
        theta[start:start + step] = _thresholds(smoothed.data[start:start + step], grid)
    return theta


def masking_thresholds(
        spec: Spectrogram,
        cfg: MaskConfig = MaskConfig(),
        window_size: int = dsp.DEFAULT_WIN_LENGTH,
) -> MaskingThresholds:
    """
    Per-frame global masking thresholds of a magnitude spectrogram.

    :param spec: Magnitude spectrogram; its bin_freqs drive the bark and
                ATH lookups.
    :param cfg: Masking model settings.
    :param window_size: STFT window length N used in the PSD.
    """
    dsp.require_domain(spec, Domain.MAGNITUDE)
    _, smoothed = _normalized_levels(spec, window_size)
    return MaskingThresholds(_thresholds_for(smoothed, cfg), spec.bin_freqs)


def mask_decisions(
        spec: Spectrogram,
        cfg: MaskConfig = MaskConfig(),
        window_size: int = dsp.DEFAULT_WIN_LENGTH,
) -> np.ndarray:
    """
    Which cells of a magnitude spectrogram survive masking.

    A cell is kept when its normalized PSD is at or above the global
    threshold of its frame.

    :return: Boolean array shaped like spec.data, True where kept.
    """
    dsp.require_domain(spec, Domain.MAGNITUDE)
    normalized, smoothed = _normalized_levels(spec, window_size)
    return normalized.data >= _thresholds_for(smoothed, cfg)


def apply_freq_mask(
        spec: Spectrogram,
        cfg: MaskConfig = MaskConfig(),
        window_size: int = dsp.DEFAULT_WIN_LENGTH,
) -> Spectrogram:
    """
    Zeroes the magnitude of every masked cell; other cells are unchanged.
    """
    keep = mask_decisions(spec, cfg, window_size)
    return spec.replace(np.where(keep, spec.data, 0.0), Domain.MAGNITUDE)
