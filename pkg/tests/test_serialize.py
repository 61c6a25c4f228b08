"""Binary tensor records and checkpoint directories."""

import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bimamba.errors import ParseError
from bimamba.serialize import load_checkpoint, read_tensor, save_checkpoint, write_tensor


def roundtrip(arr):
    buf = io.BytesIO()
    write_tensor(buf, arr)
    buf.seek(0)
    return read_tensor(buf)


def test_roundtrip_shapes_and_values():
    rng = np.random.default_rng(0)
    for shape in [(), (1,), (5,), (3, 4), (2, 3, 4, 5)]:
        arr = rng.normal(size=shape)
        got = roundtrip(arr)
        assert got.shape == arr.shape
        assert np.array_equal(got, arr)


def test_roundtrip_preserves_exact_bits():
    specials = np.array([0.0, -0.0, 1e-308, 1e308, np.pi])
    got = roundtrip(specials)
    assert got.tobytes() == specials.tobytes()


@given(st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64), max_size=40))
@settings(max_examples=60, deadline=None)
def test_roundtrip_any_finite_payload(values):
    arr = np.asarray(values, dtype=np.float64)
    assert np.array_equal(roundtrip(arr), arr)


def test_multiple_records_stream():
    buf = io.BytesIO()
    a, b = np.arange(3.0), np.ones((2, 2))
    write_tensor(buf, a)
    write_tensor(buf, b)
    buf.seek(0)
    assert np.array_equal(read_tensor(buf), a)
    assert np.array_equal(read_tensor(buf), b)


def test_bad_magic_reports_offset():
    buf = io.BytesIO(b"XXXX" + b"\x00" * 16)
    with pytest.raises(ParseError) as ei:
        read_tensor(buf)
    assert ei.value.offset == 0
    assert "magic" in str(ei.value)


def test_bad_magic_offset_of_second_record():
    buf = io.BytesIO()
    write_tensor(buf, np.arange(2.0))
    pos = buf.tell()
    buf.write(b"JUNKJUNKJUNK")
    buf.seek(0)
    read_tensor(buf)
    with pytest.raises(ParseError) as ei:
        read_tensor(buf)
    assert ei.value.offset == pos


def test_truncated_payload():
    buf = io.BytesIO()
    write_tensor(buf, np.arange(10.0))
    data = buf.getvalue()[:-8]
    with pytest.raises(ParseError, match="payload"):
        read_tensor(io.BytesIO(data))


def test_implausible_rank_rejected():
    import struct

    buf = io.BytesIO(b"BMT1" + struct.pack("<I", 1000))
    with pytest.raises(ParseError, match="rank"):
        read_tensor(buf)


# ---------------------------------------------------------------------------
# checkpoints


def test_checkpoint_roundtrip(tmp_path):
    rng = np.random.default_rng(1)
    named = [("w", rng.normal(size=(3, 2))), ("b", rng.normal(size=3))]
    save_checkpoint(tmp_path / "ck", named, kind="stage", config={"n_state": 8})
    manifest, params = load_checkpoint(tmp_path / "ck")
    assert manifest["kind"] == "stage"
    assert manifest["config"] == {"n_state": 8}
    assert manifest["params"] == ["w", "b"]
    assert np.array_equal(params["w"], named[0][1])
    assert np.array_equal(params["b"], named[1][1])


def test_checkpoint_write_is_deterministic(tmp_path):
    named = [("w", np.arange(6.0).reshape(2, 3))]
    save_checkpoint(tmp_path / "a", named, kind="stage", config={})
    save_checkpoint(tmp_path / "b", named, kind="stage", config={})
    assert (tmp_path / "a" / "params.bmt").read_bytes() == (tmp_path / "b" / "params.bmt").read_bytes()
    assert (tmp_path / "a" / "manifest.json").read_bytes() == (tmp_path / "b" / "manifest.json").read_bytes()


def test_checkpoint_missing_manifest(tmp_path):
    with pytest.raises(ParseError, match="manifest"):
        load_checkpoint(tmp_path / "nope")


def test_checkpoint_trailing_bytes_detected(tmp_path):
    save_checkpoint(tmp_path / "ck", [("w", np.ones(2))], kind="stage", config={})
    with open(tmp_path / "ck" / "params.bmt", "ab") as fh:
        fh.write(b"\x00")
    with pytest.raises(ParseError, match="trailing"):
        load_checkpoint(tmp_path / "ck")


def test_checkpoint_unknown_schema(tmp_path):
    save_checkpoint(tmp_path / "ck", [("w", np.ones(1))], kind="stage", config={})
    mpath = tmp_path / "ck" / "manifest.json"
    mpath.write_text(mpath.read_text().replace("bimamba-checkpoint/1", "other/9"))
    with pytest.raises(ParseError, match="schema"):
        load_checkpoint(tmp_path / "ck")
