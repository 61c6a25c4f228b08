"""Dataset manifests: one JSON file naming every subject's artifacts.

Each subject entry carries an id, an optional signals path (either an
EDF recording or a raw binary tensor with an explicit sample rate), a
label sidecar (one stage character per line), and an optional health
label.  Validation reports all missing files at once.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ParseError
from ..serialize import read_tensor
from ..stages import stage_from_char
from .edf import parse_edf
from .epochs import EpochBatch, Hypnogram, slice_epochs

__all__ = ["DEFAULT_CHANNELS", "Subject", "Dataset", "load_manifest"]

MANIFEST_SCHEMA = "bimamba-manifest/1"

# the recording montage, in fixed channel order
DEFAULT_CHANNELS = (
    "LOC-A2", "ROC-A1", "F3-A2", "C3-A2", "O1-A2",
    "F4-A1", "C4-A1", "O2-A1", "X1", "X2",
)

_ALLOWED_KEYS = {"id", "signals", "rate_hz", "labels", "health", "trim_last"}
_HEALTH_VALUES = {"healthy", "unhealthy"}


@dataclass
class Subject:
    id: str
    labels_path: Path
    signals_path: Path | None = None
    rate_hz: float | None = None
    health: str | None = None
    trim_last: int = 0


@dataclass
class Dataset:
    root: Path
    subjects: list[Subject]

    def subject_ids(self) -> list[str]:
        return [s.id for s in self.subjects]

    def labels(self, sub: Subject) -> np.ndarray:
        out = []
        with open(sub.labels_path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                ch = line.strip()
                if ch:
                    out.append(stage_from_char(ch, line=lineno))
        return np.asarray(out, dtype=np.int64)

    def hypnogram(self, sub: Subject) -> Hypnogram:
        return Hypnogram(stages=self.labels(sub), subject=sub.id, health=sub.health)

    def signals(self, sub: Subject, channel_names=DEFAULT_CHANNELS):
        """Return (channels (C,T), rate_hz) for one subject."""
        if sub.signals_path is None:
            raise ParseError(f"subject {sub.id} has no signals entry")
        path = sub.signals_path
        if path.suffix == ".edf":
            rec = parse_edf(path.read_bytes())
            have = {s.label for s in rec.signals}
            names = [n for n in channel_names if n in have] or [
                s.label for s in rec.signals
            ]
            rows = [rec.signal(n) for n in names]
            rates = {s.samples_per_record for s in rows}
            if len(rates) != 1:
                raise ParseError(
                    f"subject {sub.id}: selected channels disagree on sample rate"
                )
            data = np.stack([s.physical() for s in rows])
            return data, rows[0].rate_hz(rec.record_duration_s)
        with open(path, "rb") as fh:
            data = read_tensor(fh)
        if data.ndim != 2:
            raise ParseError(
                f"subject {sub.id}: signals tensor must be (C,T), got {data.shape}"
            )
        if sub.rate_hz is None:
            raise ParseError(
                f"subject {sub.id}: raw tensor signals need a rate_hz field"
            )
        return data, sub.rate_hz

    def epochs(self, sub: Subject, epoch_samples: int) -> EpochBatch:
        channels, rate = self.signals(sub)
        return slice_epochs(
            channels,
            self.labels(sub),
            rate_hz=rate,
            epoch_samples=epoch_samples,
            subject=sub.id,
            drop_last=sub.trim_last,
        )


def load_manifest(path) -> Dataset:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read manifest {path}: {exc}") from None
    if not isinstance(doc, dict) or doc.get("schema") != MANIFEST_SCHEMA:
        raise ParseError(
            f"manifest schema must be {MANIFEST_SCHEMA!r}, got {doc.get('schema')!r}"
        )
    raw_subjects = doc.get("subjects")
    if not isinstance(raw_subjects, list) or not raw_subjects:
        raise ParseError("manifest field 'subjects' must be a non-empty list")

    root = path.parent
    subjects = []
    seen = set()
    missing = []
    for i, entry in enumerate(raw_subjects):
        if not isinstance(entry, dict):
            raise ParseError(f"subjects[{i}] must be an object")
        unknown = set(entry) - _ALLOWED_KEYS
        if unknown:
            raise ParseError(f"subjects[{i}] has unknown fields {sorted(unknown)}")
        for req in ("id", "labels"):
            if req not in entry:
                raise ParseError(f"subjects[{i}] is missing field '{req}'")
        sid = entry["id"]
        if sid in seen:
            raise ParseError(f"duplicate subject id {sid!r}")
        seen.add(sid)
        health = entry.get("health")
        if health is not None and health not in _HEALTH_VALUES:
            raise ParseError(
                f"subjects[{i}] health must be one of {sorted(_HEALTH_VALUES)}"
            )
        labels_path = root / entry["labels"]
        if not labels_path.exists():
            missing.append(str(labels_path))
        signals_path = None
        if "signals" in entry:
            signals_path = root / entry["signals"]
            if not signals_path.exists():
                missing.append(str(signals_path))
        subjects.append(
            Subject(
                id=sid,
                labels_path=labels_path,
                signals_path=signals_path,
                rate_hz=entry.get("rate_hz"),
                health=health,
                trim_last=int(entry.get("trim_last", 0)),
            )
        )
    if missing:
        raise ParseError("missing dataset files: " + ", ".join(sorted(missing)))
    return Dataset(root=root, subjects=subjects)
