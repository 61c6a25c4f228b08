"""Reader and writer for EDF biosignal files.

Layout: a 256-byte ASCII header, one 256-byte ASCII header block of
per-signal fields (stored field-by-field across signals), then data
records of 16-bit little-endian two's-complement samples, interleaved
signal-by-signal within each record.

Parsing is strict: every violation raises ParseError carrying the byte
offset of the offending field.  Writing formats every field through one
canonical formatter, so write -> parse -> write reproduces the file
byte-for-byte.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ParseError

__all__ = ["EdfSignal", "EdfRecording", "parse_edf", "write_edf"]

_HEADER = 256
_SIGNAL_FIELDS = (
    # (attribute, width, kind)
    ("label", 16, "str"),
    ("transducer", 80, "str"),
    ("phys_dim", 8, "str"),
    ("phys_min", 8, "float"),
    ("phys_max", 8, "float"),
    ("dig_min", 8, "int"),
    ("dig_max", 8, "int"),
    ("prefilter", 80, "str"),
    ("samples_per_record", 8, "int"),
    ("reserved", 32, "str"),
)


@dataclass
class EdfSignal:
    label: str
    samples_per_record: int
    phys_min: float = -1.0
    phys_max: float = 1.0
    dig_min: int = -32768
    dig_max: int = 32767
    transducer: str = ""
    phys_dim: str = ""
    prefilter: str = ""
    reserved: str = ""
    digital: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int16))

    def physical(self) -> np.ndarray:
        """Affine map from digital counts onto [phys_min, phys_max]."""
        span = (self.phys_max - self.phys_min) / (self.dig_max - self.dig_min)
        return (self.digital.astype(np.float64) - self.dig_min) * span + self.phys_min

    def rate_hz(self, record_duration_s: float) -> float:
        return self.samples_per_record / record_duration_s


@dataclass
class EdfRecording:
    signals: list[EdfSignal]
    n_records: int
    record_duration_s: float = 1.0
    version: str = "0"
    patient: str = ""
    recording: str = ""
    start_date: str = "01.01.00"
    start_time: str = "00.00.00"
    reserved: str = ""

    def signal(self, label: str) -> EdfSignal:
        for s in self.signals:
            if s.label == label:
                return s
        raise KeyError(f"no signal labelled {label!r}")


def _fmt_number(value) -> str:
    """Shortest decimal text that parses back to the same float."""
    f = float(value)
    if f == int(f) and abs(f) < 1e15:
        return str(int(f))
    return repr(f)


def _field_text(value, width: int, kind: str, what: str) -> bytes:
    if kind == "str":
        text = str(value)
    elif kind == "int":
        text = str(int(value))
    else:
        text = _fmt_number(value)
    raw = text.encode("ascii")
    if len(raw) > width:
        raise ParseError(f"{what} does not fit in {width} ascii bytes: {text!r}")
    return raw.ljust(width)


def write_edf(rec: EdfRecording) -> bytes:
    ns = len(rec.signals)
    header_bytes = _HEADER * (ns + 1)
    parts = [
        _field_text(rec.version, 8, "str", "version"),
        _field_text(rec.patient, 80, "str", "patient"),
        _field_text(rec.recording, 80, "str", "recording"),
        _field_text(rec.start_date, 8, "str", "start date"),
        _field_text(rec.start_time, 8, "str", "start time"),
        _field_text(header_bytes, 8, "int", "header bytes"),
        _field_text(rec.reserved, 44, "str", "reserved"),
        _field_text(rec.n_records, 8, "int", "record count"),
        _field_text(rec.record_duration_s, 8, "float", "record duration"),
        _field_text(ns, 4, "int", "signal count"),
    ]
    for attr, width, kind in _SIGNAL_FIELDS:
        for s in rec.signals:
            parts.append(_field_text(getattr(s, attr), width, kind, f"signal {attr}"))
    n_rec = rec.n_records
    if n_rec < 0:
        lengths = {len(s.digital) // s.samples_per_record for s in rec.signals}
        if len(lengths) != 1:
            raise ParseError("signals disagree on record count")
        n_rec = lengths.pop()
    for r in range(n_rec):
        for s in rec.signals:
            spr = s.samples_per_record
            chunk = s.digital[r * spr:(r + 1) * spr]
            if len(chunk) != spr:
                raise ParseError(
                    f"signal {s.label!r} has too few samples for record {r}"
                )
            parts.append(chunk.astype("<i2").tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, width: int, what: str) -> str:
        start = self.pos
        raw = self.buf[start:start + width]
        if len(raw) < width:
            raise ParseError(f"truncated header while reading {what}", offset=start)
        for i, byte in enumerate(raw):
            if not 32 <= byte <= 126:
                raise ParseError(
                    f"non-ascii byte 0x{byte:02x} in {what}", offset=start + i
                )
        self.pos += width
        return raw.decode("ascii").rstrip()

    def take_int(self, width: int, what: str) -> int:
        start = self.pos
        text = self.take(width, what)
        try:
            return int(text)
        except ValueError:
            raise ParseError(f"{what} is not an integer: {text!r}", offset=start) from None

    def take_float(self, width: int, what: str) -> float:
        start = self.pos
        text = self.take(width, what)
        try:
            return float(text)
        except ValueError:
            raise ParseError(f"{what} is not a number: {text!r}", offset=start) from None


def parse_edf(buf: bytes) -> EdfRecording:
    rd = _Reader(buf)
    version = rd.take(8, "version")
    if version != "0":
        raise ParseError(f"unsupported format version {version!r}", offset=0)
    patient = rd.take(80, "patient id")
    recording = rd.take(80, "recording id")
    start_date = rd.take(8, "start date")
    start_time = rd.take(8, "start time")
    header_bytes = rd.take_int(8, "header byte count")
    reserved = rd.take(44, "reserved")
    n_records = rd.take_int(8, "record count")
    duration_pos = rd.pos
    record_duration = rd.take_float(8, "record duration")
    ns_pos = rd.pos
    ns = rd.take_int(4, "signal count")
    if ns < 1:
        raise ParseError(f"signal count must be >= 1, got {ns}", offset=ns_pos)
    if record_duration <= 0:
        raise ParseError(
            f"record duration must be positive, got {record_duration}",
            offset=duration_pos,
        )
    expected_header = _HEADER * (ns + 1)
    if header_bytes != expected_header:
        raise ParseError(
            f"header byte count {header_bytes} != 256*(1+{ns})", offset=184
        )
    if len(buf) < expected_header:
        raise ParseError("file shorter than declared header", offset=len(buf))

    columns: dict[str, list] = {}
    offsets: dict[str, int] = {}
    for attr, width, kind in _SIGNAL_FIELDS:
        offsets[attr] = rd.pos
        vals = []
        for i in range(ns):
            what = f"signal {i} {attr}"
            if kind == "str":
                vals.append(rd.take(width, what))
            elif kind == "int":
                vals.append(rd.take_int(width, what))
            else:
                vals.append(rd.take_float(width, what))
        columns[attr] = vals

    signals = []
    for i in range(ns):
        if columns["dig_min"][i] >= columns["dig_max"][i]:
            raise ParseError(
                f"signal {i}: digital min {columns['dig_min'][i]} >= "
                f"max {columns['dig_max'][i]}",
                offset=offsets["dig_min"] + 8 * i,
            )
        if columns["samples_per_record"][i] < 1:
            raise ParseError(
                f"signal {i}: samples per record must be >= 1",
                offset=offsets["samples_per_record"] + 8 * i,
            )
        signals.append(
            EdfSignal(
                label=columns["label"][i],
                transducer=columns["transducer"][i],
                phys_dim=columns["phys_dim"][i],
                phys_min=columns["phys_min"][i],
                phys_max=columns["phys_max"][i],
                dig_min=columns["dig_min"][i],
                dig_max=columns["dig_max"][i],
                prefilter=columns["prefilter"][i],
                samples_per_record=columns["samples_per_record"][i],
                reserved=columns["reserved"][i],
            )
        )

    record_words = sum(s.samples_per_record for s in signals)
    body = len(buf) - expected_header
    if n_records == -1:  # unknown count: infer from file size
        if body % (2 * record_words):
            raise ParseError(
                "data section is not a whole number of records",
                offset=expected_header,
            )
        n_records = body // (2 * record_words)
    elif n_records < 0:
        raise ParseError(f"record count must be -1 or >= 0, got {n_records}", offset=236)
    expected_body = 2 * record_words * n_records
    if body != expected_body:
        raise ParseError(
            f"data section has {body} bytes, expected {expected_body}",
            offset=expected_header + min(body, expected_body),
        )

    raw = np.frombuffer(buf, dtype="<i2", offset=expected_header)
    per_signal = [np.empty(n_records * s.samples_per_record, dtype=np.int16) for s in signals]
    pos = 0
    for r in range(n_records):
        for i, s in enumerate(signals):
            spr = s.samples_per_record
            per_signal[i][r * spr:(r + 1) * spr] = raw[pos:pos + spr]
            pos += spr
    before = np.cumsum([0] + [s.samples_per_record for s in signals])
    for i, s in enumerate(signals):
        lo, hi = s.dig_min, s.dig_max
        vals = per_signal[i]
        bad = (vals < lo) | (vals > hi)
        if bad.any():
            j = int(np.argmax(bad))
            spr = s.samples_per_record
            word = (j // spr) * record_words + before[i] + j % spr
            raise ParseError(
                f"signal {i} sample {j} = {vals[j]} outside [{lo}, {hi}]",
                offset=expected_header + 2 * word,
            )
        s.digital = vals

    return EdfRecording(
        signals=signals,
        n_records=n_records,
        record_duration_s=record_duration,
        version=version,
        patient=patient,
        recording=recording,
        start_date=start_date,
        start_time=start_time,
        reserved=reserved,
    )
