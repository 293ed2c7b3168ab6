"""
Power-normalized coefficient chain.

    P  short-time channel power (squared-normalized gammatone bank)
    Q  medium-time power, centered moving average over 2M+1 frames
    Q0 Q minus its asymmetric low-pass floor, half-wave rectified
    R  temporal masking of Q0
    T  P weighted by the channel-smoothed transfer ratio R / Q
    U  T divided by a running mean of frame power
    U^(1/15)  rate-level nonlinearity

The recursions run sequentially over frames and are vectorized over
channels.
"""
import dataclasses
import enum

import numpy as np
import scipy.ndimage

from aurafeat import dsp
from aurafeat.dsp import AudioBuffer, Domain, Spectrogram, StftConfig
from aurafeat.filterbank import FilterBank, FilterKind, apply_filterbank


Q_FLOOR = 1e-20
MEAN_POWER_FLOOR = 1e-20


@dataclasses.dataclass(frozen=True)
class PncConfig:
    """
    Parameters of the PNC chain.

    :param m_window: Half-width M of the medium-time window, in frames.
    :param lambda_t: Decay of the online peak power in temporal masking.
    :param mu_t: Scale of the decayed peak substituted for masked frames.
    :param lambda_a: Low-pass factor of the noise floor while power rises.
    :param lambda_b: Low-pass factor of the noise floor while power falls.
    :param smooth_neighbors: Channels N on each side averaged in weight
                smoothing.
    :param power_exponent: Rate-level exponent.
    :param mean_power_lambda: Forgetting factor of the running mean power.
    """
    m_window: int = 2
    lambda_t: float = 0.85
    mu_t: float = 0.2
    lambda_a: float = 0.999
    lambda_b: float = 0.5
    smooth_neighbors: int = 4
    power_exponent: float = 1.0 / 15.0
    mean_power_lambda: float = 0.999

    def __post_init__(self) -> None:
        if self.m_window < 0:
            raise ValueError(f'm_window must be >= 0: {self.m_window}')
        if not 0 < self.lambda_t < 1:
            raise ValueError(f'lambda_t must be in (0, 1): {self.lambda_t}')
        if not self.mu_t > 0:
            raise ValueError(f'mu_t must be positive: {self.mu_t}')
        if not 0 < self.lambda_b <= self.lambda_a < 1:
            raise ValueError(
                'Expected 0 < lambda_b <= lambda_a < 1, got '
                f'lambda_a={self.lambda_a} lambda_b={self.lambda_b}'
            )
        if self.smooth_neighbors < 0:
            raise ValueError(
                f'smooth_neighbors must be >= 0: {self.smooth_neighbors}'
            )
        if not self.power_exponent > 0:
            raise ValueError(
                f'power_exponent must be positive: {self.power_exponent}'
            )
        if not 0 <= self.mean_power_lambda < 1:
            raise ValueError(
                f'mean_power_lambda must be in [0, 1): {self.mean_power_lambda}'
            )


class Stage(str, enum.Enum):
    P = 'P'
    Q = 'Q'
    Q_LE = 'Q_le'
    Q_0 = 'Q_0'
    R = 'R'
    S = 'S'
    T = 'T'
    U = 'U'


@dataclasses.dataclass(frozen=True, eq=False)
class ChannelPowerMatrix:
    """ Frames x channels nonnegative power at one stage of the chain. """
    data: np.ndarray
    stage: Stage

    def __post_init__(self) -> None:
        data = np.array(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise ValueError(f'Channel power must be 2-D, got {data.shape}')
        if np.any(data < 0) or not np.all(np.isfinite(data)):
            raise ValueError(
                f'Stage {Stage(self.stage).value} power must be finite and '
                'nonnegative.'
            )
        data.setflags(write=False)
        object.__setattr__(self, 'data', data)
        object.__setattr__(self, 'stage', Stage(self.stage))

    @property
    def shape(self):
        return self.data.shape


def short_time_power(
        audio: AudioBuffer, cfg: StftConfig, fb: FilterBank
) -> ChannelPowerMatrix:
    """
    Channel power P from the power spectrum and a squared-normalized
    gammatone bank. Pre-emphasis is the caller's business.
    """
    if fb.kind is not FilterKind.GAMMATONE_SQNORM:
        raise ValueError(
            f'PNC requires a gammatone_sqnorm filterbank, got {fb.kind.value}'
        )
    return power_to_channels(dsp.power_spectrum(dsp.stft(audio, cfg)), fb)


def power_to_channels(power: Spectrogram, fb: FilterBank) -> ChannelPowerMatrix:
    dsp.require_domain(power, Domain.POWER)
    return ChannelPowerMatrix(apply_filterbank(power, fb).data, Stage.P)


def _truncated_mean(data: np.ndarray, half_width: int, axis: int) -> np.ndarray:
    """
    Centered moving average that averages only the in-range neighbours.
    """
    if half_width == 0:
        return data.copy()
    kernel = np.ones(2 * half_width + 1)
    total = scipy.ndimage.convolve1d(data, kernel, axis=axis, mode='constant')
    ones = np.ones(data.shape[axis])
    count = scipy.ndimage.convolve1d(ones, kernel, mode='constant')
    shape = [1] * data.ndim
    shape[axis] = -1
    return total / count.reshape(shape)


def medium_time_power(p: ChannelPowerMatrix, m: int) -> ChannelPowerMatrix:
    """
    Q[m, l], the mean of P over frames m-M..m+M. Edge frames average the
    frames that exist.
    """
    if m < 0:
        raise ValueError(f'Medium-time half-width must be >= 0: {m}')
    return ChannelPowerMatrix(_truncated_mean(p.data, m, axis=0), Stage.Q)


def noise_floor(q: ChannelPowerMatrix, cfg: PncConfig) -> ChannelPowerMatrix:
    """
    Asymmetric low-pass estimate Q_le of the noise floor.

    The floor tracks rising power slowly (lambda_a) and falling power
    quickly (lambda_b). It starts at the first frame's power.
    """
    data = q.data
    floor = np.empty_like(data)
    if data.shape[0]:
        floor[0] = data[0]
    for m in range(1, data.shape[0]):
        previous = floor[m - 1]
        rising = data[m] >= previous
        lam = np.where(rising, cfg.lambda_a, cfg.lambda_b)
        floor[m] = lam * previous + (1.0 - lam) * data[m]
    return ChannelPowerMatrix(floor, Stage.Q_LE)


def asymmetric_noise_suppression(
        q: ChannelPowerMatrix, cfg: PncConfig
) -> ChannelPowerMatrix:
    """ Q_0 = max(Q - Q_le, 0). """
    floor = noise_floor(q, cfg)
    return ChannelPowerMatrix(np.maximum(q.data - floor.data, 0.0), Stage.Q_0)


def temporal_masking(q0: ChannelPowerMatrix, cfg: PncConfig) -> ChannelPowerMatrix:
    """
    Temporal masking against the decaying online peak power.

    A frame that falls below lambda_t times the previous peak is replaced
    by mu_t times that peak.
    """
    data = q0.data
    masked = data.copy()
    if data.shape[0] == 0:
        return ChannelPowerMatrix(masked, Stage.R)
    peak = data[0].copy()
    for m in range(1, data.shape[0]):
        decayed = cfg.lambda_t * peak
        audible = data[m] >= decayed
        masked[m] = np.where(audible, data[m], cfg.mu_t * peak)
        peak = np.maximum(decayed, data[m])
    return ChannelPowerMatrix(masked, Stage.R)


def weight_smoothing(
        r: ChannelPowerMatrix,
        q: ChannelPowerMatrix,
        p: ChannelPowerMatrix,
        n: int,
) -> ChannelPowerMatrix:
    """
    T[m, l] = P[m, l] times the mean of R / Q over channels l-N..l+N.

    Q is floored at Q_FLOOR before dividing.
    """
    if not r.shape == q.shape == p.shape:
        raise ValueError(
            f'Shape mismatch: R {r.shape}, Q {q.shape}, P {p.shape}'
        )
    if n < 0:
        raise ValueError(f'Smoothing neighbours must be >= 0: {n}')
    ratio = r.data / np.maximum(q.data, Q_FLOOR)
    smoothed = _truncated_mean(ratio, n, axis=1)
    return ChannelPowerMatrix(p.data * smoothed, Stage.T)


def mean_power_normalize(
        t: ChannelPowerMatrix,
        lam: float = 0.999,
        k: float = 1.0,
) -> ChannelPowerMatrix:
    """
    U[m, l] = k T[m, l] / mu[m].

    mu is a first-order running average of the per-frame channel-mean
    power, started at the first frame and floored at MEAN_POWER_FLOOR.
    """
    frame_power = t.data.mean(axis=1)
    mu = np.empty_like(frame_power)
    if frame_power.size:
        mu[0] = frame_power[0]
    for m in range(1, frame_power.size):
        mu[m] = lam * mu[m - 1] + (1.0 - lam) * frame_power[m]
    scale = k / np.maximum(mu, MEAN_POWER_FLOOR)
    return ChannelPowerMatrix(t.data * scale[:, None], Stage.U)


def rate_level(u: ChannelPowerMatrix, exponent: float = 1.0 / 15.0) -> Spectrogram:
    """
    Power-law rate-level nonlinearity.

    :return: Spectrogram(feature) whose columns are channel indices.
    """
    return Spectrogram(
        np.power(u.data, exponent),
        np.arange(u.shape[1], dtype=np.float64),
        Domain.FEATURE,
    )


def pnc_chain(p: ChannelPowerMatrix, cfg: PncConfig) -> ChannelPowerMatrix:
    """
    Runs P through to the mean-power-normalized U.
    """
    q = medium_time_power(p, cfg.m_window)
    q0 = asymmetric_noise_suppression(q, cfg)
    r = temporal_masking(q0, cfg)
    t = weight_smoothing(r, q, p, cfg.smooth_neighbors)
    return mean_power_normalize(t, cfg.mean_power_lambda)
