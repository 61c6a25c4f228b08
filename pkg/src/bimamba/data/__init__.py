"""Data pipeline: EDF I/O, resampling, epoch slicing, synthetic corpora."""

from .edf import EdfRecording, EdfSignal, parse_edf, write_edf
from .epochs import EpochBatch, Hypnogram, encode_health_input, slice_epochs
from .manifest import DEFAULT_CHANNELS, Dataset, Subject, load_manifest
from .resample import resample
from .synth import (
    DEFAULT_SIGNATURES,
    TABLE_SKEW,
    ClassSignature,
    SynthSubject,
    quota_labels,
    synth_generate,
    synth_health_generate,
    write_dataset,
    write_health_dataset,
)

__all__ = [
    "EdfRecording",
    "EdfSignal",
    "parse_edf",
    "write_edf",
    "EpochBatch",
    "Hypnogram",
    "encode_health_input",
    "slice_epochs",
    "DEFAULT_CHANNELS",
    "Dataset",
    "Subject",
    "load_manifest",
    "resample",
    "DEFAULT_SIGNATURES",
    "TABLE_SKEW",
    "ClassSignature",
    "SynthSubject",
    "quota_labels",
    "synth_generate",
    "synth_health_generate",
    "write_dataset",
    "write_health_dataset",
]
