"""
Auditory-inspired acoustic features for speech recognition front ends.
"""
from aurafeat.dsp import AudioBuffer, Domain, Spectrogram, StftConfig
from aurafeat.filterbank import FilterBank, FilterKind
from aurafeat.masking import MaskConfig, MaskingThresholds, SpreadConvention
from aurafeat.pnc import ChannelPowerMatrix, PncConfig
from aurafeat.features import (
    FeatureConfig, FeatureKind, FeatureMatrix, extract, extract_all,
)
from aurafeat.audio_io import (
    ConfigError, WavFormatError, load_config, read_feature_matrix, read_wav,
    write_feature_matrix, write_wav,
)
from aurafeat.probe import ProbeReport, Transcript, probe_feature, wer


__version__ = '0.1.0'
