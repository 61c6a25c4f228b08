"""Synthetic polysomnography and hypnograms for desk-scale experiments.

Stage epochs are narrowband oscillations (per-stage frequency band and
amplitude, one optionally burst-modulated) in white noise, generated
directly at the model's working rate.  Label counts per subject follow a
fixed skewed allocation (N2 most frequent) via largest-remainder quotas,
so the class marginals are identical across seeds.

Health hypnograms come from a run-length generator: disordered nights
have an elevated wake fraction and short, fragmented N2 runs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import DomainError
from ..serialize import write_tensor
from ..stages import N_STAGES, stage_to_char
from .epochs import EPOCH_SECONDS, Hypnogram

__all__ = [
    "ClassSignature",
    "DEFAULT_SIGNATURES",
    "TABLE_SKEW",
    "SynthSubject",
    "quota_labels",
    "synth_generate",
    "synth_health_generate",
    "write_dataset",
    "write_health_dataset",
]

# relative class frequencies carried over from the stage-count table
TABLE_SKEW = (1674, 1217, 2616, 2016, 1066)


@dataclass(frozen=True)
class ClassSignature:
    """Additive sinusoid components: (low Hz, high Hz, amplitude) each."""

    bands: tuple
    burst: bool = False  # gate the first component with a 1 s on/off envelope


# Bands sit below the Nyquist rate of the smallest supported epoch length
# (epoch_samples=500 -> 16.67 Hz sampling), ordered so no two classes share
# a dominant band.
DEFAULT_SIGNATURES = {
    0: ClassSignature(bands=((5.0, 6.2, 1.2),)),               # W
    1: ClassSignature(bands=((2.0, 3.0, 1.0),)),               # N1
    2: ClassSignature(bands=((7.0, 8.0, 1.0),), burst=True),   # N2
    3: ClassSignature(bands=((0.5, 1.5, 1.5),)),               # N3
    4: ClassSignature(bands=((3.5, 4.5, 0.9), (6.5, 7.5, 0.6))),  # REM
}


@dataclass
class SynthSubject:
    id: str
    channels: np.ndarray  # (C, T) float64
    rate_hz: float
    labels: np.ndarray  # (E,) int64


def quota_labels(n: int, weights, rng: np.random.Generator) -> np.ndarray:
    """Exact largest-remainder allocation of n labels, then a shuffle."""
    w = np.asarray(weights, dtype=np.float64)
    if len(w) != N_STAGES or np.any(w < 0) or w.sum() == 0:
        raise DomainError(f"need {N_STAGES} non-negative weights, got {weights}")
    exact = n * w / w.sum()
    counts = np.floor(exact).astype(np.int64)
    short = n - counts.sum()
    for i in np.argsort(-(exact - counts), kind="stable")[:short]:
        counts[i] += 1
    labels = np.repeat(np.arange(N_STAGES), counts)
    rng.shuffle(labels)
    return labels


def _epoch_wave(
    sig: ClassSignature,
    n: int,
    rate_hz: float,
    rng: np.random.Generator,
) -> np.ndarray:
    t = np.arange(n) / rate_hz
    wave = np.zeros(n)
    for j, (lo, hi, amp) in enumerate(sig.bands):
        if hi > rate_hz / 2:
            raise DomainError(
                f"band {lo}-{hi} Hz exceeds Nyquist for rate {rate_hz:.2f} Hz"
            )
        f = rng.uniform(lo, hi)
        phase = rng.uniform(0, 2 * np.pi)
        component = amp * np.sin(2 * np.pi * f * t + phase)
        if sig.burst and j == 0:
            component = component * (np.floor(2 * t) % 2 == 0)
        wave += component
    return wave


def synth_generate(
    n_subjects: int,
    epochs_per_subject: int,
    seed: int,
    channels: int = 10,
    epoch_samples: int = 1000,
    informative: int | None = None,
    signatures: dict | None = None,
    noise: float = 0.3,
    uninformative_noise: float = 1.0,
    skew=TABLE_SKEW,
) -> list[SynthSubject]:
    """Deterministic synthetic PSG at rate epoch_samples/30 Hz.

    ``informative`` limits the stage signature to the first that many
    channels; the rest carry only (stronger) noise, which gives channel
    attention something to find.  None means every channel is informative.
    """
    if n_subjects < 1 or epochs_per_subject < 1:
        raise DomainError("need at least one subject and one epoch")
    sigs = DEFAULT_SIGNATURES if signatures is None else signatures
    n_inf = channels if informative is None else informative
    if not 1 <= n_inf <= channels:
        raise DomainError(
            f"informative channel count {n_inf} outside [1, {channels}]"
        )
    rate = epoch_samples / EPOCH_SECONDS
    subjects = []
    for s in range(n_subjects):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, s])))
        labels = quota_labels(epochs_per_subject, skew, rng)
        gains = rng.uniform(0.85, 1.15, size=channels)
        data = np.empty((channels, epochs_per_subject * epoch_samples))
        for e, stage in enumerate(labels):
            lo = e * epoch_samples
            for c in range(channels):
                if c < n_inf:
                    wave = _epoch_wave(sigs[int(stage)], epoch_samples, rate, rng)
                    data[c, lo:lo + epoch_samples] = gains[c] * wave + noise * rng.standard_normal(epoch_samples)
                else:
                    data[c, lo:lo + epoch_samples] = uninformative_noise * rng.standard_normal(epoch_samples)
        subjects.append(
            SynthSubject(
                id=f"s{s:02d}", channels=data, rate_hz=rate, labels=labels
            )
        )
    return subjects


# ---------------------------------------------------------------------------
# health hypnograms

# (stage pick probabilities, mean run length per stage)
_HEALTHY_MIX = ((0.05, 0.10, 0.45, 0.25, 0.15), (3.0, 4.0, 12.0, 10.0, 8.0))
_DISORDERED_MIX = ((0.35, 0.15, 0.25, 0.10, 0.15), (4.0, 4.0, 3.0, 4.0, 4.0))


def _run_length_night(n: int, mix, rng: np.random.Generator) -> np.ndarray:
    probs, mean_run = mix
    out = np.empty(n, dtype=np.int64)
    pos = 0
    prev = -1
    while pos < n:
        stage = int(rng.choice(N_STAGES, p=probs))
        if stage == prev:
            continue
        run = 1 + rng.geometric(1.0 / mean_run[stage])
        out[pos:pos + run] = stage
        pos += run
        prev = stage
    return out


def synth_health_generate(
    n_subjects: int,
    seed: int,
    max_cycles: int = 850,
    min_cycles: int = 600,
    balance: bool = False,
) -> list[Hypnogram]:
    """Nights labeled healthy/unhealthy with disorder-correlated statistics.

    ``balance`` mirrors the source-data class totals (110 healthy to 100
    unhealthy); otherwise the split is even.  Disordered nights show more
    wake and fragmented N2 runs.
    """
    if n_subjects < 2:
        raise DomainError("need at least 2 subjects, one per class")
    healthy_frac = 110.0 / 210.0 if balance else 0.5
    n_healthy = max(1, min(n_subjects - 1, round(n_subjects * healthy_frac)))
    out = []
    for s in range(n_subjects):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, s, 7])))
        healthy = s < n_healthy
        n = int(rng.integers(min_cycles, max_cycles + 1))
        stages = _run_length_night(n, _HEALTHY_MIX if healthy else _DISORDERED_MIX, rng)
        out.append(
            Hypnogram(
                stages=stages,
                subject=f"h{s:03d}",
                health="healthy" if healthy else "unhealthy",
            )
        )
    return out


# ---------------------------------------------------------------------------
# on-disk dataset layout

MANIFEST_SCHEMA = "bimamba-manifest/1"


def _write_labels(path: Path, stages) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for v in stages:
            fh.write(stage_to_char(int(v)) + "\n")


def write_dataset(subjects: list[SynthSubject], out_dir, trim_last: int = 0) -> Path:
    """Write signals (one binary tensor per subject), label files, manifest."""
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    entries = []
    for sub in subjects:
        sig_name = f"{sub.id}.bmt"
        lab_name = f"{sub.id}.labels"
        with open(root / sig_name, "wb") as fh:
            write_tensor(fh, sub.channels)
        _write_labels(root / lab_name, sub.labels)
        entry = {
            "id": sub.id,
            "signals": sig_name,
            "rate_hz": sub.rate_hz,
            "labels": lab_name,
        }
        if trim_last:
            entry["trim_last"] = trim_last
        entries.append(entry)
    manifest = {"schema": MANIFEST_SCHEMA, "subjects": entries}
    path = root / "manifest.json"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return path


def write_health_dataset(hypnograms: list[Hypnogram], out_dir) -> Path:
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    entries = []
    for h in hypnograms:
        lab_name = f"{h.subject}.labels"
        _write_labels(root / lab_name, h.stages)
        entries.append({"id": h.subject, "labels": lab_name, "health": h.health})
    manifest = {"schema": MANIFEST_SCHEMA, "subjects": entries}
    path = root / "manifest.json"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return path
