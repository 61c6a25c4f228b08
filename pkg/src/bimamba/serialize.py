"""Binary tensor records and model checkpoints.

A tensor record is self-delimiting:

    magic  b"BMT1"
    rank   uint32 little-endian
    dims   rank * uint64 little-endian
    data   prod(dims) * float64 little-endian, C order

A checkpoint is a directory with ``params.bmt`` (records concatenated in
a fixed order) and ``manifest.json`` naming each record, so files remain
byte-identical across runs with the same seed.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import ParseError

MAGIC = b"BMT1"
CHECKPOINT_SCHEMA = "bimamba-checkpoint/1"

_MAX_RANK = 32


def write_tensor(fh, array: np.ndarray) -> None:
    """Append one record for ``array`` to the binary file object ``fh``."""
    # asarray, not ascontiguousarray: the latter promotes 0-d to 1-d,
    # and tobytes() below already emits C order for any layout
    arr = np.asarray(array, dtype="<f8")
    fh.write(MAGIC)
    fh.write(struct.pack("<I", arr.ndim))
    fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
    fh.write(arr.tobytes())


def read_tensor(fh) -> np.ndarray:
    """Read one record; raises ParseError with the offending byte offset."""
    start = fh.tell()
    magic = fh.read(4)
    if len(magic) < 4:
        raise ParseError("truncated record: missing magic", offset=start)
    if magic != MAGIC:
        raise ParseError(f"bad magic {magic!r}, expected {MAGIC!r}", offset=start)
    raw = fh.read(4)
    if len(raw) < 4:
        raise ParseError("truncated record: missing rank", offset=start + 4)
    rank = struct.unpack("<I", raw)[0]
    if rank > _MAX_RANK:
        raise ParseError(f"implausible rank {rank}", offset=start + 4)
    raw = fh.read(8 * rank)
    if len(raw) < 8 * rank:
        raise ParseError("truncated record: missing dims", offset=start + 8)
    dims = struct.unpack(f"<{rank}Q", raw) if rank else ()
    count = 1
    for d in dims:
        count *= d
    payload = fh.read(8 * count)
    if len(payload) < 8 * count:
        raise ParseError(
            f"truncated record: expected {8 * count} payload bytes, got {len(payload)}",
            offset=start + 8 + 8 * rank,
        )
    return np.frombuffer(payload, dtype="<f8").reshape(dims).copy()


def save_checkpoint(path, named_params, kind: str, config: dict) -> None:
    """Write ``params.bmt`` + ``manifest.json`` under directory ``path``.

    ``named_params`` is an ordered list of (name, ndarray); the manifest
    records the names in file order.
    """
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    names = []
    with open(root / "params.bmt", "wb") as fh:
        for name, arr in named_params:
            write_tensor(fh, arr)
            names.append(name)
    manifest = {
        "schema": CHECKPOINT_SCHEMA,
        "kind": kind,
        "config": config,
        "params": names,
    }
    with open(root / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")


def load_checkpoint(path):
    """Return (manifest dict, {name: ndarray}) from a checkpoint directory."""
    root = Path(path)
    mpath = root / "manifest.json"
    if not mpath.exists():
        raise ParseError(f"missing manifest: {mpath}")
    with open(mpath) as fh:
        manifest = json.load(fh)
    if manifest.get("schema") != CHECKPOINT_SCHEMA:
        raise ParseError(
            f"unknown checkpoint schema {manifest.get('schema')!r}"
        )
    params = {}
    with open(root / "params.bmt", "rb") as fh:
        for name in manifest["params"]:
            params[name] = read_tensor(fh)
        trailing = fh.read(1)
        if trailing:
            raise ParseError(
                "trailing bytes after last named record", offset=fh.tell() - 1
            )
    return manifest, params
