"""
Tests WAV parsing, matrix serialization and configuration loading.
"""
import json
import logging
import os
from pathlib import Path
import struct

import numpy as np
import pytest
import scipy.io.wavfile

from aurafeat import audio_io, features, masking
from aurafeat.audio_io import ConfigError, MatrixFormat, UnsupportedFormatError, WavFormatError
from aurafeat.dsp import AudioBuffer
from aurafeat.features import FeatureConfig, FeatureKind, FeatureMatrix
from aurafeat.filterbank import FilterKind
from aurafeat.masking import SpreadConvention


SAMPLE_RATE = 16000


def test_read_16_bit_pcm(tmp_path):
    pcm = np.array([0, 16384, -32768, 32767, -1], dtype=np.int16)
    path = Path(tmp_path, 'a.wav')
    scipy.io.wavfile.write(path, SAMPLE_RATE, pcm)
    audio = audio_io.read_wav(path)
    assert audio.sample_rate == SAMPLE_RATE
    np.testing.assert_array_equal(audio.samples, pcm / 32768.0)


def test_read_float_wav(tmp_path):
    samples = np.array([0.0, 0.25, -0.5, 1.0], dtype=np.float32)
    path = Path(tmp_path, 'f.wav')
    scipy.io.wavfile.write(path, 8000, samples)
    audio = audio_io.read_wav(path)
    assert audio.sample_rate == 8000
    np.testing.assert_array_equal(audio.samples, samples.astype(np.float64))


def test_stereo_is_averaged(tmp_path):
    pcm = np.array([[1000, 3000], [-2000, 2000]], dtype=np.int16)
    path = Path(tmp_path, 's.wav')
    scipy.io.wavfile.write(path, SAMPLE_RATE, pcm)
    np.testing.assert_allclose(audio_io.read_wav(path).samples, [2000 / 32768, 0.0])


def test_read_24_bit_pcm():
    values = [0, 1, -1, 2 ** 23 - 1, -2 ** 23]
    raw = b''.join(v.to_bytes(3, 'little', signed=True) for v in values)
    audio = audio_io.decode_wav(_wav_bytes(raw, bits=24))
    np.testing.assert_array_equal(audio.samples, np.array(values) / 2.0 ** 23)


def test_read_extensible_format():
    raw = np.array([100, -100], dtype='<i2').tobytes()
    audio = audio_io.decode_wav(_wav_bytes(raw, bits=16, extensible=True))
    np.testing.assert_array_equal(audio.samples, [100 / 32768, -100 / 32768])


def test_unknown_chunks_are_skipped():
    raw = np.array([5], dtype='<i2').tobytes()
    data = _wav_bytes(raw, bits=16, extra_chunk=b'LIST' + struct.pack('<I', 3) + b'abc\x00')
    np.testing.assert_array_equal(audio_io.decode_wav(data).samples, [5 / 32768])


def test_not_riff():
    with pytest.raises(WavFormatError) as info:
        audio_io.decode_wav(b'RIFX' + bytes(40))
    assert info.value.offset == 0


def test_truncated_header():
    with pytest.raises(WavFormatError, match='Unexpected end of file'):
        audio_io.decode_wav(b'RIFF\x00\x00')


def test_missing_data_chunk():
    data = _wav_bytes(b'', bits=16)
    with pytest.raises(WavFormatError):
        audio_io.decode_wav(data[:36])


def test_unsupported_encoding():
    with pytest.raises(UnsupportedFormatError, match='0x0001 with 8 bits'):
        audio_io.decode_wav(_wav_bytes(b'\x80\x80', bits=8))


@pytest.mark.parametrize('bits', [0, 4, 12])
def test_odd_sample_width_is_a_format_error(bits):
    with pytest.raises(WavFormatError) as info:
        audio_io.decode_wav(_wav_bytes(b'\x00\x00\x00\x00', bits=bits))
    # bits_per_sample sits 14 bytes into the fmt body.
    assert info.value.offset == 20 + 14


def test_error_message_names_file_and_offset(tmp_path):
    path = Path(tmp_path, 'bad.wav')
    path.write_bytes(b'RIFX' + bytes(40))
    with pytest.raises(WavFormatError) as info:
        audio_io.read_wav(path)
    message = str(info.value)
    assert str(path) in message and '(at byte 0)' in message
    assert message.count('(at byte') == 1


def test_missing_file_is_os_error(tmp_path):
    with pytest.raises(OSError):
        audio_io.read_wav(Path(tmp_path, 'nope.wav'))


def test_write_wav_round_trip(tmp_path):
    samples = np.arange(-50, 50) / 32768.0
    path = Path(tmp_path, 'out.wav')
    audio_io.write_wav(path, AudioBuffer(samples, SAMPLE_RATE))
    np.testing.assert_array_equal(audio_io.read_wav(path).samples, samples)
    rate, pcm = scipy.io.wavfile.read(path)
    assert rate == SAMPLE_RATE and pcm.dtype == np.int16


def test_write_wav_clips(tmp_path):
    path = Path(tmp_path, 'loud.wav')
    audio_io.write_wav(path, AudioBuffer(np.array([2.0, -2.0]), SAMPLE_RATE))
    np.testing.assert_array_equal(audio_io.read_wav(path).samples, [32767 / 32768, -1.0])


def test_afm1_layout():
    matrix = FeatureMatrix(np.arange(6, dtype=np.float32).reshape(2, 3), FeatureKind.DOG_SPEC)
    payload = audio_io.encode_afm1(matrix)
    assert payload[:8] == b'AFM1\x00\x00\x00\x00'
    assert struct.unpack('<III', payload[8:20]) == (2, 3, 8)
    assert len(payload) == 20 + 6 * 4
    np.testing.assert_array_equal(np.frombuffer(payload[20:], '<f4'), np.arange(6))


def test_afm1_round_trip(tmp_path):
    data = np.random.default_rng(0).standard_normal((7, 5)).astype(np.float32)
    path = Path(tmp_path, 'm.afm1')
    audio_io.write_feature_matrix(FeatureMatrix(data, FeatureKind.PNCC), path)
    loaded = audio_io.read_feature_matrix(path)
    assert loaded.kind is FeatureKind.PNCC
    np.testing.assert_array_equal(loaded.data, data)


def test_afm1_rejects_truncated_body():
    payload = audio_io.encode_afm1(FeatureMatrix(np.ones((2, 2)), FeatureKind.MFCC))
    with pytest.raises(ValueError, match='expected'):
        audio_io.decode_afm1(payload[:-1])


def test_csv_round_trip_is_exact(tmp_path):
    data = np.random.default_rng(1).standard_normal((4, 3))
    matrix = FeatureMatrix(data, FeatureKind.GAMM_SPEC, 'abc123')
    path = Path(tmp_path, 'm.csv')
    audio_io.write_feature_matrix(matrix, path, MatrixFormat.CSV)
    assert path.read_text().splitlines()[0] == 'gammspec,4,3,abc123'
    loaded = audio_io.read_feature_matrix(path)
    np.testing.assert_array_equal(loaded.data, data)
    assert loaded.fingerprint == 'abc123'


@pytest.mark.parametrize('header', [
    'gammspec,4,3',
    'kind=gammspec,frames=1,dims=1,fingerprint=',
    'nope,1,1,',
])
def test_csv_header_must_be_four_positional_fields(header):
    with pytest.raises(ValueError, match='Invalid feature CSV header'):
        audio_io.decode_feature_csv(header + '\n1.0\n')


def test_atomic_writes_leave_no_temporaries(tmp_path):
    path = Path(tmp_path, 'x.txt')
    audio_io.write_text_atomic(path, 'one')
    audio_io.write_text_atomic(path, 'two')
    assert path.read_text() == 'two'
    assert os.listdir(tmp_path) == ['x.txt']


def test_atomic_write_to_missing_directory_fails(tmp_path):
    with pytest.raises(OSError):
        audio_io.write_text_atomic(Path(tmp_path, 'missing', 'x.txt'), 'x')


def test_filterbank_csv_starts_with_centers():
    fb = features.filterbank_for(FilterKind.MEL, FeatureConfig(n_filters=8))
    rows = [line.split(',') for line in audio_io.format_filterbank_csv(fb).splitlines()]
    assert len(rows) == 8
    assert all(len(row) == 1 + 201 for row in rows)
    np.testing.assert_array_equal([float(r[0]) for r in rows], fb.center_freqs)


def test_thresholds_csv_is_frames_by_bins():
    thresholds = masking.MaskingThresholds(np.zeros((3, 4)), [0.0, 1.0, 2.0, 3.0])
    lines = audio_io.format_thresholds_csv(thresholds).splitlines()
    assert lines == ['0.0,0.0,0.0,0.0'] * 3


def test_csv_writers_match_formatters(tmp_path):
    fb = features.filterbank_for(FilterKind.DOG, FeatureConfig(n_filters=8))
    thresholds = masking.MaskingThresholds(np.ones((2, 3)), [0.0, 1.0, 2.0])
    fb_path, theta_path = Path(tmp_path, 'fb.csv'), Path(tmp_path, 'theta.csv')
    audio_io.write_filterbank_csv(fb, fb_path)
    audio_io.write_thresholds_csv(thresholds, theta_path)
    assert fb_path.read_text() == audio_io.format_filterbank_csv(fb)
    assert theta_path.read_text() == audio_io.format_thresholds_csv(thresholds)


# Configuration.


def test_empty_config_is_default():
    assert audio_io.parse_config({}).fingerprint == FeatureConfig().fingerprint


def test_config_sections_and_enums():
    cfg = audio_io.parse_config({
        'kind': 'dogspec',
        'n_filters': 40,
        'f_max': 7600,
        'stft': {'hop_length': 80},
        'mask': {'spread_convention': 'paper_literal'},
        'pnc': {'mu_t': 0.3},
    })
    assert cfg.kind is FeatureKind.DOG_SPEC
    assert cfg.n_filters == 40 and cfg.f_max == 7600.0
    assert cfg.stft.hop_length == 80 and cfg.stft.win_length == 400
    assert cfg.mask.spread_convention is SpreadConvention.PAPER_LITERAL
    assert cfg.pnc.mu_t == 0.3


@pytest.mark.parametrize('doc, path', [
    ({'n_filter': 80}, '$.n_filter'),
    ({'pnc': {'mu': 1.0}}, '$.pnc.mu'),
    ({'n_filters': 80.5}, '$.n_filters'),
    ({'n_filters': True}, '$.n_filters'),
    ({'n_filters': 0}, '$.n_filters'),
    ({'pnc': {'mu_t': -1}}, '$.pnc.mu_t'),
    ({'kind': 'spectrogram'}, '$.kind'),
    ({'stft': {'hop_length': 500}}, '$.stft'),
    ({'mask': 'standard'}, '$.mask'),
    ([], '$'),
])
def test_config_errors_carry_json_path(doc, path):
    with pytest.raises(ConfigError) as info:
        audio_io.parse_config(doc)
    assert info.value.path == path


def test_load_config_file(tmp_path):
    path = Path(tmp_path, 'cfg.json')
    path.write_text(json.dumps({'kind': 'PNCC', 'n_ceps': 13}))
    cfg = audio_io.load_config(path)
    assert cfg.kind is FeatureKind.PNCC and cfg.cepstra == 13


def test_load_config_rejects_invalid_json(tmp_path):
    path = Path(tmp_path, 'cfg.json')
    path.write_text('{"kind": ')
    with pytest.raises(ConfigError, match='invalid JSON'):
        audio_io.load_config(path)


def test_dumped_config_loads_back():
    cfg = audio_io.paper_literal(FeatureConfig(kind=FeatureKind.PNC, n_filters=64))
    doc = json.loads(audio_io.dump_config(cfg))
    assert doc['fingerprint'] == cfg.fingerprint
    assert len(doc['notices']) == 2
    assert audio_io.parse_config(doc).fingerprint == cfg.fingerprint


def test_dump_is_deterministic():
    assert audio_io.dump_config(FeatureConfig()) == audio_io.dump_config(FeatureConfig())


def test_paper_literal_flips_both_conventions(caplog):
    caplog.set_level(logging.WARNING, logger='aurafeat')
    cfg = audio_io.paper_literal(FeatureConfig())
    assert cfg.pnc.mu_t == 2.0
    assert cfg.mask.spread_convention is SpreadConvention.PAPER_LITERAL
    audio_io.parse_config(cfg.to_dict())
    assert 'paper-literal mu_t' in caplog.text


def test_default_config_has_no_notices():
    assert audio_io.config_notices(FeatureConfig()) == []


# Test util.


def _wav_bytes(
        raw: bytes, bits: int, extensible: bool = False, extra_chunk: bytes = b''
) -> bytes:
    """
    Mono PCM WAV assembled field by field.
    """
    block_align = bits // 8
    tag = 0xFFFE if extensible else 0x0001
    fmt = struct.pack(
        '<HHIIHH', tag, 1, SAMPLE_RATE, SAMPLE_RATE * block_align, block_align, bits
    )
    if extensible:
        guid = struct.pack('<H', 0x0001) + b'\x00\x00\x00\x00\x10\x00\x80\x00\x00\xaa\x00\x38\x9b\x71'
        fmt += struct.pack('<HHI', 22, bits, 0x4) + guid
    chunks = b'fmt ' + struct.pack('<I', len(fmt)) + fmt + extra_chunk
    chunks += b'data' + struct.pack('<I', len(raw)) + raw
    return b'RIFF' + struct.pack('<I', 4 + len(chunks)) + b'WAVE' + chunks
