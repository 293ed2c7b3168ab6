"""
WAV ingestion, feature and filterbank serialization, and configuration
loading.
"""
import dataclasses
import enum
import io
import json
import logging
import os
from pathlib import Path
import struct
import tempfile
import typing as ty

import numpy as np

from aurafeat.dsp import AudioBuffer, StftConfig
from aurafeat.features import FeatureConfig, FeatureKind, FeatureMatrix
from aurafeat.filterbank import FilterBank
from aurafeat.masking import MaskConfig, MaskingThresholds, SpreadConvention
from aurafeat.pnc import PncConfig


logger = logging.getLogger(__name__)

PathLike = ty.Union[str, os.PathLike, Path]

WAVE_FORMAT_PCM = 0x0001
WAVE_FORMAT_IEEE_FLOAT = 0x0003
WAVE_FORMAT_EXTENSIBLE = 0xFFFE

AFM1_MAGIC = b'AFM1\x00\x00\x00\x00'
_AFM1_HEADER = struct.Struct('<III')

PAPER_LITERAL_MU_T = 2.0


class WavFormatError(ValueError):
    """
    Malformed WAV data. offset is the byte position of the offending field.
    """
    def __init__(self, message: str, offset: int) -> None:
        super().__init__(f'{message} (at byte {offset})')
        self.message = message
        self.offset = offset


class UnsupportedFormatError(WavFormatError):
    """ Well-formed WAV whose encoding is not supported. """


class ConfigError(ValueError):
    """ Invalid configuration document. path locates the value, e.g. $.pnc.mu_t. """
    def __init__(self, message: str, path: str) -> None:
        super().__init__(f'{path}: {message}')
        self.path = path


class WavHeader(ty.NamedTuple):
    format_tag: int
    channels: int
    sample_rate: int
    bits_per_sample: int
    data_length: int


# WAV reading.


def _unpack(fmt: str, data: bytes, offset: int, what: str) -> tuple:
    size = struct.calcsize(fmt)
    if offset + size > len(data):
        raise WavFormatError(f'Unexpected end of file while reading {what}', offset)
    return struct.unpack_from(fmt, data, offset)


def _parse_fmt(data: bytes, offset: int, size: int) -> ty.Tuple[int, int, int, int]:
    if size < 16:
        raise WavFormatError(f'fmt chunk too small ({size} bytes)', offset)
    tag, channels, rate, _, block_align, bits = _unpack(
        '<HHIIHH', data, offset, 'fmt chunk'
    )
    if tag == WAVE_FORMAT_EXTENSIBLE:
        if size < 40:
            raise WavFormatError('Extensible fmt chunk too small', offset)
        # The sub-format GUID starts with the real format tag.
        tag, = _unpack('<H', data, offset + 24, 'sub-format GUID')
    if channels < 1:
        raise WavFormatError(f'Invalid channel count {channels}', offset + 2)
    if rate < 1:
        raise WavFormatError(f'Invalid sample rate {rate}', offset + 4)
    if bits == 0 or bits % 8:
        raise WavFormatError(
            f'Bits per sample must be a positive multiple of 8: {bits}', offset + 14
        )
    if block_align == 0 or block_align != channels * bits // 8:
        raise WavFormatError(
            f'Block align {block_align} does not match {channels} channels '
            f'of {bits} bits', offset + 12,
        )
    return tag, channels, rate, bits


def read_wav_header(data: bytes) -> ty.Tuple[WavHeader, int]:
    """
    Parses the RIFF structure of a WAV file held in memory.

    :return: (header, byte offset of the sample data)
    :raise WavFormatError on malformed input.
    """
    riff, _, wave = _unpack('<4sI4s', data, 0, 'RIFF header')
    if riff != b'RIFF':
        raise WavFormatError(f'Not a RIFF file: {riff!r}', 0)
    if wave != b'WAVE':
        raise WavFormatError(f'RIFF form type is {wave!r}, not WAVE', 8)

    fmt: ty.Optional[ty.Tuple[int, int, int, int]] = None
    offset = 12
    while offset < len(data):
        chunk_id, size = _unpack('<4sI', data, offset, 'chunk header')
        body = offset + 8
        if chunk_id == b'fmt ':
            fmt = _parse_fmt(data, body, size)
        elif chunk_id == b'data':
            if fmt is None:
                raise WavFormatError('data chunk before fmt chunk', offset)
            size = min(size, len(data) - body)
            tag, channels, rate, bits = fmt
            return WavHeader(tag, channels, rate, bits, size), body
        offset = body + size + (size & 1)
    raise WavFormatError('No data chunk found', offset)


def _decode_samples(header: WavHeader, raw: bytes, offset: int) -> np.ndarray:
    tag, bits = header.format_tag, header.bits_per_sample
    if tag == WAVE_FORMAT_PCM and bits == 16:
        return np.frombuffer(raw, dtype='<i2').astype(np.float64) / 32768.0
    if tag == WAVE_FORMAT_PCM and bits == 24:
        triplets = np.frombuffer(raw, dtype=np.uint8).reshape(-1, 3).astype(np.int32)
        values = triplets[:, 0] | (triplets[:, 1] << 8) | (triplets[:, 2] << 16)
        values = np.where(values >= 1 << 23, values - (1 << 24), values)
        return values.astype(np.float64) / float(1 << 23)
    if tag == WAVE_FORMAT_IEEE_FLOAT and bits == 32:
        return np.frombuffer(raw, dtype='<f4').astype(np.float64)
    raise UnsupportedFormatError(
        f'Unsupported WAV encoding: format tag 0x{tag:04x} with {bits} bits '
        'per sample (supported: 16/24-bit PCM, 32-bit float)', offset,
    )


def decode_wav(data: bytes) -> AudioBuffer:
    """
    Decodes WAV bytes into a mono buffer.

    Samples are scaled to [-1, 1]; multi-channel audio is averaged.
    """
    header, offset = read_wav_header(data)
    frame_bytes = header.channels * header.bits_per_sample // 8
    n_frames = header.data_length // frame_bytes
    if n_frames < 1:
        raise WavFormatError('WAV file contains no samples', offset)
    raw = data[offset:offset + n_frames * frame_bytes]
    samples = _decode_samples(header, raw, offset)
    if header.channels > 1:
        samples = samples.reshape(n_frames, header.channels).mean(axis=1)
    return AudioBuffer(samples, header.sample_rate)


def read_wav(path: PathLike) -> AudioBuffer:
    """
    Reads a RIFF/WAVE file.

    :raise OSError if the file cannot be read.
    :raise WavFormatError on malformed or unsupported content.
    """
    path = Path(path)
    data = path.read_bytes()
    try:
        audio = decode_wav(data)
    except WavFormatError as ex:
        raise type(ex)(f'{path}: {ex.message}', ex.offset) from None
    logger.debug('%s: %d samples at %d Hz', path, len(audio), audio.sample_rate)
    return audio


# WAV writing.


def encode_wav(audio: AudioBuffer) -> bytes:
    """
    16-bit PCM mono encoding. Samples outside [-1, 1) are clipped.
    """
    scaled = np.round(audio.samples * 32768.0)
    clipped = np.clip(scaled, -32768, 32767)
    if np.any(clipped != scaled):
        logger.warning('Clipping %d samples on 16-bit export', int(np.sum(clipped != scaled)))
    pcm = clipped.astype('<i2').tobytes()
    fmt = struct.pack(
        '<HHIIHH', WAVE_FORMAT_PCM, 1, audio.sample_rate,
        audio.sample_rate * 2, 2, 16,
    )
    chunks = b'fmt ' + struct.pack('<I', len(fmt)) + fmt
    chunks += b'data' + struct.pack('<I', len(pcm)) + pcm
    return b'RIFF' + struct.pack('<I', 4 + len(chunks)) + b'WAVE' + chunks


def write_wav(path: PathLike, audio: AudioBuffer) -> None:
    write_bytes_atomic(Path(path), encode_wav(audio))


# Atomic writes.


def write_bytes_atomic(path: Path, payload: bytes) -> None:
    """
    Writes a file through a temporary sibling and a rename, so readers
    never observe a partial file.
    """
    directory = path.parent if str(path.parent) else Path('.')
    fd, tmp_name = tempfile.mkstemp(
        prefix=f'.{path.name}.', suffix='.tmp', dir=directory
    )
    try:
        with os.fdopen(fd, 'wb') as f:
            f.write(payload)
        os.replace(tmp_name, path)
    except BaseException:
        try:
            os.unlink(tmp_name)
        except FileNotFoundError:
            pass
        raise


def write_text_atomic(path: Path, text: str) -> None:
    write_bytes_atomic(path, text.encode('utf-8'))


# Feature matrices.


class MatrixFormat(str, enum.Enum):
    CSV = 'csv'
    AFM1 = 'afm1'


def _format_rows(rows: ty.Iterable[ty.Iterable[float]]) -> ty.List[str]:
    return [','.join(repr(float(v)) for v in row) for row in rows]


def encode_afm1(matrix: FeatureMatrix) -> bytes:
    frames, dims = matrix.data.shape
    header = _AFM1_HEADER.pack(frames, dims, matrix.kind.kind_id)
    body = np.ascontiguousarray(matrix.data, dtype='<f4').tobytes()
    return AFM1_MAGIC + header + body


def decode_afm1(payload: bytes) -> FeatureMatrix:
    if payload[:len(AFM1_MAGIC)] != AFM1_MAGIC:
        raise ValueError(f'Not an AFM1 file: magic {payload[:8]!r}')
    start = len(AFM1_MAGIC)
    if len(payload) < start + _AFM1_HEADER.size:
        raise ValueError('Truncated AFM1 header.')
    frames, dims, kind_id = _AFM1_HEADER.unpack_from(payload, start)
    start += _AFM1_HEADER.size
    expected = frames * dims * 4
    if len(payload) - start != expected:
        raise ValueError(
            f'AFM1 body holds {len(payload) - start} bytes, expected {expected} '
            f'for {frames}x{dims}'
        )
    data = np.frombuffer(payload, dtype='<f4', offset=start).reshape(frames, dims)
    return FeatureMatrix(data.astype(np.float32), FeatureKind.from_id(kind_id))


def encode_feature_csv(matrix: FeatureMatrix) -> str:
    """
    CSV with a one-line header `<kind>,<frames>,<dims>,<fingerprint>`
    followed by one row per frame. The fingerprint may be empty.
    """
    frames, dims = matrix.data.shape
    header = f'{matrix.kind.cli_name},{frames},{dims},{matrix.fingerprint}'
    return '\n'.join([header] + _format_rows(matrix.data)) + '\n'


def decode_feature_csv(text: str) -> FeatureMatrix:
    lines = text.splitlines()
    if not lines:
        raise ValueError('Empty feature CSV.')
    try:
        kind_name, frames_text, dims_text, fingerprint = lines[0].split(',')
        kind = FeatureKind.parse(kind_name)
        frames, dims = int(frames_text), int(dims_text)
    except ValueError as ex:
        raise ValueError(f'Invalid feature CSV header {lines[0]!r}') from ex
    rows = [[float(v) for v in line.split(',')] for line in lines[1:] if line]
    data = np.array(rows, dtype=np.float64).reshape(frames, dims)
    return FeatureMatrix(data, kind, fingerprint)


def write_feature_matrix(
        matrix: FeatureMatrix, path: PathLike, fmt: MatrixFormat = MatrixFormat.AFM1
) -> None:
    """
    Writes a feature matrix as AFM1 (float32, lossless for float32 data)
    or CSV (shortest round-tripping decimal text).
    """
    path = Path(path)
    if MatrixFormat(fmt) is MatrixFormat.AFM1:
        write_bytes_atomic(path, encode_afm1(matrix))
    else:
        write_text_atomic(path, encode_feature_csv(matrix))


def read_feature_matrix(path: PathLike) -> FeatureMatrix:
    """ Reads an AFM1 or CSV feature file, detected by its magic. """
    payload = Path(path).read_bytes()
    try:
        if payload.startswith(AFM1_MAGIC):
            return decode_afm1(payload)
        return decode_feature_csv(payload.decode('utf-8'))
    except ValueError as ex:
        raise ValueError(f'{path}: {ex}') from ex


# Filterbanks and thresholds.


def format_filterbank_csv(fb: FilterBank) -> str:
    """ One row per filter: center frequency, then the coefficients. """
    rows = np.column_stack((fb.center_freqs, fb.weights))
    return '\n'.join(_format_rows(rows)) + '\n'


def format_thresholds_csv(thresholds: MaskingThresholds) -> str:
    """ One row of theta per frame, one column per bin. """
    return '\n'.join(_format_rows(thresholds.theta)) + '\n'


def write_filterbank_csv(fb: FilterBank, path: PathLike) -> None:
    write_text_atomic(Path(path), format_filterbank_csv(fb))


def write_thresholds_csv(thresholds: MaskingThresholds, path: PathLike) -> None:
    write_text_atomic(Path(path), format_thresholds_csv(thresholds))


# Configuration.


# Keys written by dump_config that are accepted and ignored on load.
_ECHO_KEYS = ('fingerprint', 'notices')

_SECTION_TYPES = {
    'stft': StftConfig,
    'mask': MaskConfig,
    'pnc': PncConfig,
}


def _coerce(value: ty.Any, annotation: ty.Any, path: str) -> ty.Any:
    optional = ty.get_origin(annotation) is ty.Union
    if optional:
        if value is None:
            return None
        annotation = next(a for a in ty.get_args(annotation) if a is not type(None))
    if isinstance(annotation, type) and issubclass(annotation, enum.Enum):
        try:
            if not isinstance(value, str):
                raise ValueError(value)
            if annotation is FeatureKind:
                return FeatureKind.parse(value)
            return annotation(value)
        except ValueError:
            choices = ', '.join(str(m.value) for m in annotation)
            raise ConfigError(f'expected one of {choices}, got {value!r}', path) from None
    if annotation is bool or isinstance(value, bool):
        if annotation is bool and isinstance(value, bool):
            return value
        raise ConfigError(f'expected {annotation.__name__}, got {value!r}', path)
    if annotation is int:
        if isinstance(value, int):
            return value
        raise ConfigError(f'expected an integer, got {value!r}', path)
    if annotation is float:
        if isinstance(value, (int, float)):
            return float(value)
        raise ConfigError(f'expected a number, got {value!r}', path)
    if annotation is str:
        if isinstance(value, str):
            return value
        raise ConfigError(f'expected a string, got {value!r}', path)
    raise ConfigError(f'unsupported value {value!r}', path)


def _build(cls: type, doc: ty.Any, path: str) -> ty.Any:
    """
    Builds a config dataclass from a JSON object, rejecting unknown keys.
    """
    if not isinstance(doc, dict):
        raise ConfigError(f'expected an object, got {doc!r}', path)
    hints = ty.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    keys = set(doc) - set(_ECHO_KEYS) if cls is FeatureConfig else set(doc)
    unknown = sorted(keys - names)
    if unknown:
        raise ConfigError(f'unknown key {unknown[0]!r}', f'{path}.{unknown[0]}')
    kwargs = {}
    for name, value in doc.items():
        if name not in names:
            continue
        key_path = f'{path}.{name}'
        if name in _SECTION_TYPES and cls is FeatureConfig:
            kwargs[name] = _build(_SECTION_TYPES[name], value, key_path)
        else:
            kwargs[name] = _coerce(value, hints[name], key_path)
    try:
        return cls(**kwargs)
    except ValueError as ex:
        message = str(ex)
        field = next((k for k in sorted(doc) if message.startswith(k)), None)
        raise ConfigError(message, f'{path}.{field}' if field else path) from ex


def parse_config(doc: ty.Any) -> FeatureConfig:
    """
    Resolves a JSON config object into a FeatureConfig. Missing keys take
    their defaults.

    :raise ConfigError with the JSON path of the offending value.
    """
    cfg = _build(FeatureConfig, doc, '$')
    for notice in config_notices(cfg):
        logger.warning(notice)
    return cfg


def load_config(path: PathLike) -> FeatureConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding='utf-8'))
    except json.JSONDecodeError as ex:
        raise ConfigError(f'invalid JSON: {ex}', f'{path}:$') from ex
    return parse_config(doc)


def config_notices(cfg: FeatureConfig) -> ty.List[str]:
    """ Human-readable flags for settings that follow the literal text. """
    notices = []
    if cfg.pnc.mu_t == PAPER_LITERAL_MU_T:
        notices.append(
            'paper-literal mu_t = 2: masked frames exceed the decayed peak'
        )
    if cfg.mask.spread_convention is SpreadConvention.PAPER_LITERAL:
        notices.append(
            'paper-literal spread sign: thresholds rise below the masker'
        )
    return notices


def paper_literal(cfg: FeatureConfig) -> FeatureConfig:
    """ Flips both disputed conventions to their literal reading. """
    return dataclasses.replace(
        cfg,
        mask=dataclasses.replace(cfg.mask, spread_convention=SpreadConvention.PAPER_LITERAL),
        pnc=dataclasses.replace(cfg.pnc, mu_t=PAPER_LITERAL_MU_T),
    )


def dump_config(cfg: FeatureConfig) -> str:
    """ Fully resolved config as deterministic JSON, with notices. """
    doc = cfg.to_dict()
    doc['fingerprint'] = cfg.fingerprint
    doc['notices'] = config_notices(cfg)
    buffer = io.StringIO()
    json.dump(doc, buffer, indent=2, sort_keys=True)
    return buffer.getvalue() + '\n'
