"""Epoch slicing and hypnogram encoding."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import AlignmentError, DomainError, ShapeError
from ..stages import N_STAGES
from .resample import resample

__all__ = ["EpochBatch", "Hypnogram", "slice_epochs", "encode_health_input"]

EPOCH_SECONDS = 30


@dataclass
class EpochBatch:
    """A stack of scored 30 s windows ready for the stage model."""

    data: np.ndarray  # (B, C, epoch_samples) float64
    labels: np.ndarray  # (B,) int64 stage indices
    subjects: np.ndarray  # (B,) subject ids

    def __len__(self):
        return len(self.labels)


@dataclass
class Hypnogram:
    """Per-epoch stages over a night, with an optional validity mask."""

    stages: np.ndarray
    mask: np.ndarray | None = None
    subject: str = ""
    health: str | None = None  # "healthy" / "unhealthy"

    def __post_init__(self):
        self.stages = np.asarray(self.stages, dtype=np.int64)
        if self.mask is None:
            self.mask = np.ones(len(self.stages), dtype=bool)
        else:
            self.mask = np.asarray(self.mask, dtype=bool)
        if self.mask.shape != self.stages.shape:
            raise ShapeError(
                f"mask length {self.mask.shape} != stages {self.stages.shape}"
            )

    def __len__(self):
        return len(self.stages)


def slice_epochs(
    channels: np.ndarray,
    labels,
    rate_hz: float,
    epoch_samples: int,
    subject: str = "",
    drop_last: int = 0,
) -> EpochBatch:
    """Cut a (C, T) recording into labeled per-epoch windows.

    Each channel is resampled once to epoch_samples/30 Hz, then split into
    consecutive non-overlapping windows, so sample i of epoch e covers
    time (e*30 + i*30/epoch_samples) s.  ``drop_last`` removes that many
    trailing epochs (the provider trims recordings that way).
    """
    channels = np.asarray(channels, dtype=np.float64)
    if channels.ndim != 2:
        raise ShapeError(f"channels must be (C, T), got {channels.shape}")
    labels = np.asarray(labels, dtype=np.int64)
    if labels.ndim != 1:
        raise ShapeError(f"labels must be 1-D, got {labels.shape}")
    if epoch_samples < 1:
        raise DomainError(f"epoch_samples must be >= 1, got {epoch_samples}")
    n_epochs = len(labels)
    duration_s = channels.shape[1] / rate_hz
    # half-sample slack: a recording trimmed to the label grid still passes
    if n_epochs * EPOCH_SECONDS > duration_s + 0.5 / rate_hz:
        raise AlignmentError(
            f"{n_epochs} epochs need {n_epochs * EPOCH_SECONDS:.0f} s "
            f"but the recording has {duration_s:.1f} s"
        )
    if drop_last < 0:
        raise DomainError(f"drop_last must be >= 0, got {drop_last}")
    emit = n_epochs - drop_last
    if emit <= 0:
        raise AlignmentError(
            f"dropping {drop_last} of {n_epochs} epochs leaves nothing"
        )

    target_hz = epoch_samples / EPOCH_SECONDS
    needed = emit * epoch_samples
    out = np.empty((emit, channels.shape[0], epoch_samples))
    for c in range(channels.shape[0]):
        series = resample(channels[c], rate_hz, target_hz)
        if len(series) < needed:
            raise AlignmentError(
                f"channel {c}: {len(series)} samples after resampling, "
                f"need {needed}"
            )
        out[:, c, :] = series[:needed].reshape(emit, epoch_samples)
    return EpochBatch(
        data=out,
        labels=labels[:emit].copy(),
        subjects=np.full(emit, subject, dtype=object),
    )


def encode_health_input(h, max_cycles: int = 850) -> np.ndarray:
    """One-hot a hypnogram into (6, max_cycles): 5 stage rows + mask row.

    Longer nights are truncated at ``max_cycles``; shorter ones padded
    with all-zero columns (mask 0).  Column sums of the stage rows equal
    the mask row by construction.
    """
    stages = np.asarray(getattr(h, "stages", h), dtype=np.int64)
    if stages.ndim != 1:
        raise ShapeError(f"stages must be 1-D, got {stages.shape}")
    if stages.size and (stages.min() < 0 or stages.max() >= N_STAGES):
        bad = int(np.argmax((stages < 0) | (stages >= N_STAGES)))
        raise DomainError(f"stage {stages[bad]} at epoch {bad} outside [0, {N_STAGES})")
    n = min(len(stages), max_cycles)
    out = np.zeros((N_STAGES + 1, max_cycles))
    out[stages[:n], np.arange(n)] = 1.0
    out[N_STAGES, :n] = 1.0
    return out
