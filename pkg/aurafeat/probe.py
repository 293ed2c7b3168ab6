"""
Evaluation metrics (WER, WERD, NWERD, SNR), seeded noise injection and
feature-space robustness probes.
"""
import csv
import logging
from pathlib import Path
import string
import typing as ty

import numpy as np

from aurafeat import audio_io, features
from aurafeat.dsp import AudioBuffer
from aurafeat.features import FeatureConfig, FeatureKind


logger = logging.getLogger(__name__)

MIN_SNR_DB = -200.0
MAX_SNR_DB = 1000.0

# Feature cells moving by more than this count as changed.
CHANGE_TOLERANCE = 1e-6

_PUNCTUATION = str.maketrans('', '', string.punctuation)


class Transcript(ty.NamedTuple):
    """
    Case-folded, whitespace-tokenized words of an utterance.
    """
    words: ty.Tuple[str, ...]

    @classmethod
    def from_text(cls, text: str, strip_punctuation: bool = False) -> 'Transcript':
        if strip_punctuation:
            text = text.translate(_PUNCTUATION)
        return cls(tuple(text.casefold().split()))

    def __len__(self) -> int:
        return len(self.words)


class ProbeReport(ty.NamedTuple):
    feature_kind: FeatureKind
    target_snr_db: float
    achieved_snr_db: float
    relative_distortion: float
    changed_cell_fraction: float


def edit_distance(reference: ty.Sequence[str], hypothesis: ty.Sequence[str]) -> int:
    """
    Minimum number of substitutions, insertions and deletions turning
    the hypothesis into the reference.
    """
    distances = list(range(len(hypothesis) + 1))
    for i, ref_word in enumerate(reference, start=1):
        row = [i]
        for j, hyp_word in enumerate(hypothesis, start=1):
            if ref_word == hyp_word:
                row.append(distances[j - 1])
            else:
                row.append(1 + min(distances[j - 1], distances[j], row[-1]))
        distances = row
    return distances[-1]


def wer(reference: Transcript, hypothesis: Transcript) -> float:
    """
    Word error rate of a hypothesis; may exceed 1 with many insertions.
    :raise ValueError if the reference is empty.
    """
    if not reference.words:
        raise ValueError('WER is undefined for an empty reference.')
    return edit_distance(reference.words, hypothesis.words) / len(reference)


def corpus_wer(pairs: ty.Iterable[ty.Tuple[Transcript, Transcript]]) -> float:
    """
    Total edits over total reference words of many (reference, hypothesis)
    pairs.
    """
    edits = words = 0
    for reference, hypothesis in pairs:
        edits += edit_distance(reference.words, hypothesis.words)
        words += len(reference)
    if not words:
        raise ValueError('WER is undefined for an empty reference.')
    return edits / words


def werd(wer_clean: float, wer_noisy: float) -> float:
    """ WER degradation from clean to noisy data; negative if noise helped. """
    if wer_clean < 0 or wer_noisy < 0:
        raise ValueError(f'WER values must be >= 0: {wer_clean}, {wer_noisy}')
    return wer_noisy - wer_clean


def nwerd(werd_value: float, quality_score: float) -> float:
    """
    WERD normalized by a speech-quality score such as DNSMOS or PESQ.
    Degradation on cleaner (higher quality) speech weighs more.
    """
    if not quality_score > 0:
        raise ValueError(f'Quality score must be positive: {quality_score}')
    return werd_value / quality_score


def mean_nwerd(rows: ty.Iterable[ty.Tuple[float, float]]) -> float:
    """
    Mean NWERD over (werd, quality score) rows of individual utterances.
    """
    values = [nwerd(w, q) for w, q in rows]
    if not values:
        raise ValueError('No utterances to aggregate.')
    return float(np.mean(values))


def read_quality_scores(path: Path) -> ty.Dict[str, float]:
    """
    Reads a two-column CSV of utterance id and quality score. A first
    row whose score is not a number is taken as a header.
    """
    scores: ty.Dict[str, float] = {}
    with Path(path).open(newline='') as f:
        for line_no, row in enumerate(csv.reader(f), start=1):
            if not row:
                continue
            if len(row) != 2:
                raise ValueError(
                    f'{path}:{line_no}: expected "utterance-id,score", got {row}'
                )
            try:
                score = float(row[1])
            except ValueError:
                if line_no == 1:
                    continue
                raise ValueError(
                    f'{path}:{line_no}: invalid quality score {row[1]!r}'
                ) from None
            scores[row[0].strip()] = score
    return scores


def _energy(samples: np.ndarray) -> float:
    return float(np.dot(samples, samples))


def snr_db(signal: AudioBuffer, noise: AudioBuffer) -> float:
    """
    10 log10 of signal energy over noise energy.
    :raise ValueError for mismatched lengths or silent noise.
    """
    if len(signal) != len(noise):
        raise ValueError(
            f'Signal and noise lengths differ: {len(signal)} != {len(noise)}'
        )
    noise_energy = _energy(noise.samples)
    if noise_energy == 0:
        raise ValueError('Noise has zero energy (infinite SNR).')
    return 10.0 * np.log10(_energy(signal.samples) / noise_energy)


def perturbation_snr_db(clean: AudioBuffer, perturbed: AudioBuffer) -> float:
    """
    SNR of a perturbed utterance, treating perturbed - clean as the noise.
    """
    if len(clean) != len(perturbed):
        raise ValueError(
            f'Clean and perturbed lengths differ: {len(clean)} != '
            f'{len(perturbed)}'
        )
    return snr_db(clean, clean.with_samples(perturbed.samples - clean.samples))


def white_noise(n: int, seed: int) -> np.ndarray:
    """
    Reproducible Gaussian white noise.

    Uniforms from a PCG64 generator are mapped through Box-Muller,
    z = sqrt(-2 ln(1 - u1)) cos(2 pi u2), so the output depends only on
    the seed and the generator's uniform stream.
    """
    if n < 1:
        raise ValueError(f'Noise length must be positive: {n}')
    u1, u2 = np.random.Generator(np.random.PCG64(seed)).random((2, n))
    return np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * np.pi * u2)


def scale_noise(
        clean: AudioBuffer, noise: AudioBuffer, target_snr_db: float
) -> AudioBuffer:
    """
    Tiles or truncates noise to the clean length and scales it to the
    target SNR.
    """
    if not MIN_SNR_DB <= target_snr_db <= MAX_SNR_DB:
        raise ValueError(
            f'Target SNR {target_snr_db} dB outside '
            f'[{MIN_SNR_DB}, {MAX_SNR_DB}] dB'
        )
    clean_energy = _energy(clean.samples)
    if clean_energy == 0:
        raise ValueError('Clean signal has zero energy.')
    samples = np.resize(noise.samples, len(clean))
    noise_energy = _energy(samples)
    if noise_energy == 0:
        raise ValueError('Noise has zero energy (infinite SNR).')
    gain = np.sqrt(clean_energy / (noise_energy * 10.0 ** (target_snr_db / 10.0)))
    return clean.with_samples(gain * samples)


def add_noise_at_snr(
        clean: AudioBuffer,
        noise: ty.Optional[AudioBuffer],
        target_snr_db: float,
        seed: int = 0,
) -> AudioBuffer:
    """
    Returns clean + g * noise with g chosen so the mixture has the target
    SNR.

    :param clean: Signal with nonzero energy.
    :param noise: Noise buffer, or None for seeded white noise.
    :param target_snr_db: Desired SNR in dB.
    :param seed: Seed of the white-noise generator.
    """
    if noise is None:
        noise = clean.with_samples(white_noise(len(clean), seed))
    scaled = scale_noise(clean, noise, target_snr_db)
    return clean.with_samples(clean.samples + scaled.samples)


def _distortion(clean: np.ndarray, noisy: np.ndarray) -> ty.Tuple[float, float]:
    reference = np.linalg.norm(clean)
    if reference == 0:
        raise ValueError('Clean features are all zero; distortion is undefined.')
    difference = noisy - clean
    relative = float(np.linalg.norm(difference) / reference)
    changed = float(np.mean(np.abs(difference) > CHANGE_TOLERANCE))
    return relative, changed


def probe_feature(
        clean: AudioBuffer,
        cfg: FeatureConfig,
        snr_list: ty.Sequence[float],
        seed: int = 0,
        save_dir: ty.Optional[Path] = None,
) -> ty.List[ProbeReport]:
    """
    Measures how far a feature moves when seeded white noise is added.

    The same noise realization, scaled per target, is used for every SNR.

    :param clean: Clean utterance.
    :param cfg: Feature configuration; cfg.kind is probed.
    :param snr_list: Target SNRs in dB.
    :param seed: White-noise seed.
    :param save_dir: If given, noisy inputs are written there as WAV.
    :return: One report per target SNR, in order.
    """
    reference = features.extract(clean, cfg).data
    noise = clean.with_samples(white_noise(len(clean), seed))
    reports = []
    for target in snr_list:
        scaled = scale_noise(clean, noise, target)
        noisy = clean.with_samples(clean.samples + scaled.samples)
        achieved = snr_db(clean, scaled)
        relative, changed = _distortion(reference, features.extract(noisy, cfg).data)
        logger.info(
            '%s @ %g dB: distortion %.6g, changed %.4f',
            cfg.kind.value, target, relative, changed,
        )
        if save_dir is not None:
            name = f'{cfg.kind.cli_name}_snr{target:g}_seed{seed}.wav'
            audio_io.write_wav(Path(save_dir, name), noisy)
        reports.append(ProbeReport(cfg.kind, float(target), achieved, relative, changed))
    return reports


PROBE_CSV_HEADER = (
    'feature', 'target_snr_db', 'achieved_snr_db',
    'relative_distortion', 'changed_cell_fraction',
)


def format_probe_csv(reports: ty.Iterable[ProbeReport]) -> str:
    lines = [','.join(PROBE_CSV_HEADER)]
    for report in reports:
        lines.append(
            f'{report.feature_kind.cli_name},{report.target_snr_db:.6f},'
            f'{report.achieved_snr_db:.6f},{report.relative_distortion:.9g},'
            f'{report.changed_cell_fraction:.9g}'
        )
    return '\n'.join(lines) + '\n'


def write_probe_csv(reports: ty.Iterable[ProbeReport], path: Path) -> None:
    audio_io.write_text_atomic(Path(path), format_probe_csv(reports))
