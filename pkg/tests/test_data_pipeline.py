"""Epoch slicing, hypnogram encoding, synthetic data, and manifest loading."""

import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bimamba.data.edf import EdfRecording, EdfSignal, write_edf
from bimamba.data.epochs import EpochBatch, Hypnogram, encode_health_input, slice_epochs
from bimamba.data.manifest import load_manifest
from bimamba.data.synth import (
    DEFAULT_SIGNATURES,
    TABLE_SKEW,
    quota_labels,
    synth_generate,
    synth_health_generate,
    write_dataset,
    write_health_dataset,
)
from bimamba.errors import AlignmentError, DomainError, ParseError

RATE_500 = 500 / 30.0  # epoch_samples=500 at 30 s epochs


# ---------------------------------------------------------------------------
# slice_epochs


def test_slice_identity_rate_reproduces_windows():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(2, 4 * 500))
    batch = slice_epochs(x, [0, 1, 2, 3], rate_hz=RATE_500, epoch_samples=500, subject="s0")
    assert batch.data.shape == (4, 2, 500)
    assert np.allclose(batch.data[2, 1], x[1, 1000:1500])
    assert batch.labels.tolist() == [0, 1, 2, 3]
    assert set(batch.subjects) == {"s0"}
    assert len(batch) == 4


def test_slice_resamples_to_epoch_grid():
    # 100 Hz input, 500-sample epochs: every epoch still spans 30 s
    x = np.random.default_rng(1).normal(size=(1, 3000))
    batch = slice_epochs(x, [0], rate_hz=100.0, epoch_samples=500)
    assert batch.data.shape == (1, 1, 500)


def test_slice_rejects_more_labels_than_signal():
    x = np.zeros((1, 2 * 500))
    with pytest.raises(AlignmentError):
        slice_epochs(x, [0, 1, 2], rate_hz=RATE_500, epoch_samples=500)


def test_slice_tolerates_float_rate_jitter():
    # 1000/(500/30) is 59.99999999999999 s in float; the half-sample
    # slack keeps exact-length recordings from being rejected
    x = np.zeros((1, 2 * 500))
    assert 1000 / RATE_500 < 60.0
    batch = slice_epochs(x, [0, 1], rate_hz=RATE_500, epoch_samples=500)
    assert batch.data.shape == (2, 1, 500)
    # but a recording short by one whole sample is a real mismatch
    with pytest.raises(AlignmentError):
        slice_epochs(np.zeros((1, 2 * 500 - 1)), [0, 1], rate_hz=RATE_500, epoch_samples=500)


def test_slice_drop_last():
    x = np.zeros((1, 5 * 500))
    batch = slice_epochs(x, [0, 1, 2, 3, 4], rate_hz=RATE_500, epoch_samples=500, drop_last=2)
    assert batch.data.shape == (3, 1, 500)
    assert batch.labels.tolist() == [0, 1, 2]


def test_slice_drop_last_cannot_consume_everything():
    x = np.zeros((1, 2 * 500))
    with pytest.raises(AlignmentError):
        slice_epochs(x, [0, 1], rate_hz=RATE_500, epoch_samples=500, drop_last=2)


# ---------------------------------------------------------------------------
# encode_health_input


def test_encode_shape_and_roundtrip():
    stages = np.array([0, 1, 2, 3, 4, 2, 2])
    x = encode_health_input(stages)
    assert x.shape == (6, 850)
    assert np.array_equal(np.argmax(x[:5, :7], axis=0), stages)
    assert np.all(x[5, :7] == 1.0)
    assert np.all(x[:, 7:] == 0.0)


def test_encode_truncates_long_nights():
    x = encode_health_input(np.zeros(900, dtype=int))
    assert x.shape == (6, 850)
    assert x[5].sum() == 850


def test_encode_rejects_bad_stage():
    with pytest.raises(DomainError, match="epoch 1"):
        encode_health_input(np.array([0, 9]))


def test_encode_accepts_hypnogram_object():
    h = Hypnogram(stages=[1, 1, 4], subject="x")
    x = encode_health_input(h)
    assert x[5].sum() == 3.0


@given(n=st.integers(0, 1000))
@settings(max_examples=50, deadline=None)
def test_encode_mask_is_prefix_and_matches_stage_mass(n):
    x = encode_health_input(np.zeros(n, dtype=int), max_cycles=850)
    mask = x[5]
    assert np.all(np.diff(mask) <= 0)  # ones then zeros
    assert np.array_equal(x[:5].sum(axis=0), mask)
    assert mask.sum() == min(n, 850)


# ---------------------------------------------------------------------------
# quota labels and stage generation


def test_quota_exact_counts_for_200():
    labels = quota_labels(200, TABLE_SKEW, np.random.default_rng(0))
    assert np.bincount(labels, minlength=5).tolist() == [39, 28, 61, 47, 25]


@given(n=st.integers(50, 2000))
@settings(max_examples=40, deadline=None)
def test_quota_within_two_percent(n):
    labels = quota_labels(n, TABLE_SKEW, np.random.default_rng(1))
    frac = np.bincount(labels, minlength=5) / n
    target = np.asarray(TABLE_SKEW) / sum(TABLE_SKEW)
    assert np.all(np.abs(frac - target) <= 0.02)


def test_quota_rejects_bad_weights():
    with pytest.raises(DomainError):
        quota_labels(10, (1, 2, 3), np.random.default_rng(0))
    with pytest.raises(DomainError):
        quota_labels(10, (0, 0, 0, 0, 0), np.random.default_rng(0))


def test_synth_deterministic_per_seed():
    a = synth_generate(2, 6, seed=5, channels=2, epoch_samples=500)
    b = synth_generate(2, 6, seed=5, channels=2, epoch_samples=500)
    c = synth_generate(2, 6, seed=6, channels=2, epoch_samples=500)
    for x, y in zip(a, b):
        assert np.array_equal(x.channels, y.channels)
        assert np.array_equal(x.labels, y.labels)
    assert not np.array_equal(a[0].channels, c[0].channels)


def test_synth_shapes_and_rate():
    subs = synth_generate(3, 10, seed=0, channels=4, epoch_samples=500)
    assert len(subs) == 3
    for s in subs:
        assert s.channels.shape == (4, 10 * 500)
        assert np.isclose(s.rate_hz, RATE_500)
        assert len(s.labels) == 10


def test_synth_informative_channels_carry_class_structure():
    subs = synth_generate(1, 60, seed=3, channels=2, epoch_samples=500, informative=1)
    s = subs[0]
    power = s.channels.reshape(2, 60, 500).var(axis=2)  # (C, E)
    by_class_inf = [power[0, s.labels == c].mean() for c in range(5)]
    by_class_noise = [power[1, s.labels == c].mean() for c in range(5)]
    # informative channel: class power spread spans the signature amplitudes
    assert max(by_class_inf) / min(by_class_inf) > 1.5
    # noise channel: nearly flat across classes
    assert max(by_class_noise) / min(by_class_noise) < 1.3


def test_synth_rejects_band_over_nyquist():
    # 200-sample epochs sample at 6.67 Hz; the default bands reach 8 Hz
    with pytest.raises(DomainError, match="Nyquist"):
        synth_generate(1, 2, seed=0, channels=1, epoch_samples=200)


def test_synth_rejects_bad_informative_count():
    with pytest.raises(DomainError):
        synth_generate(1, 2, seed=0, channels=2, epoch_samples=500, informative=3)


# ---------------------------------------------------------------------------
# health hypnograms


def test_health_generate_deterministic_and_labeled():
    a = synth_health_generate(6, seed=9)
    b = synth_health_generate(6, seed=9)
    for x, y in zip(a, b):
        assert np.array_equal(x.stages, y.stages)
        assert x.health == y.health
    assert {h.health for h in a} == {"healthy", "unhealthy"}


def test_health_generate_night_lengths_in_range():
    for h in synth_health_generate(8, seed=2, max_cycles=850, min_cycles=600):
        assert 600 <= len(h) <= 850


def test_health_balance_fraction():
    hs = synth_health_generate(21, seed=0, balance=True)
    n_healthy = sum(1 for h in hs if h.health == "healthy")
    assert n_healthy == 11  # round(21 * 110/210)


def test_disordered_nights_have_more_wake_and_fragmentation():
    hs = synth_health_generate(30, seed=4)
    wake = {"healthy": [], "unhealthy": []}
    runs = {"healthy": [], "unhealthy": []}
    for h in hs:
        wake[h.health].append(float(np.mean(h.stages == 0)))
        change = np.count_nonzero(np.diff(h.stages)) + 1
        runs[h.health].append(len(h.stages) / change)
    assert np.mean(wake["unhealthy"]) > np.mean(wake["healthy"]) + 0.1
    assert np.mean(runs["healthy"]) > np.mean(runs["unhealthy"]) * 1.5


# ---------------------------------------------------------------------------
# on-disk dataset round trip


def test_write_and_load_dataset(tmp_path):
    subs = synth_generate(2, 4, seed=1, channels=2, epoch_samples=500)
    man = write_dataset(subs, tmp_path)
    ds = load_manifest(man)
    assert ds.subject_ids() == ["s00", "s01"]
    batch = ds.epochs(ds.subjects[0], epoch_samples=500)
    assert isinstance(batch, EpochBatch)
    assert batch.data.shape == (4, 2, 500)
    # identity-rate path: windows are the raw generated samples
    assert np.allclose(batch.data[0, 0], subs[0].channels[0, :500])
    assert np.array_equal(batch.labels, subs[0].labels)


def test_trim_last_is_recorded_and_applied(tmp_path):
    subs = synth_generate(1, 5, seed=1, channels=1, epoch_samples=500)
    man = write_dataset(subs, tmp_path, trim_last=2)
    ds = load_manifest(man)
    assert ds.subjects[0].trim_last == 2
    batch = ds.epochs(ds.subjects[0], epoch_samples=500)
    assert len(batch) == 3


def test_write_and_load_health_dataset(tmp_path):
    hs = synth_health_generate(4, seed=3)
    man = write_health_dataset(hs, tmp_path)
    ds = load_manifest(man)
    got = ds.hypnogram(ds.subjects[0])
    assert np.array_equal(got.stages, hs[0].stages)
    assert got.health == hs[0].health


def test_manifest_with_edf_signals(tmp_path):
    # only montage channels are selected, in montage order
    rng = np.random.default_rng(5)
    names = ["C3-A2", "LOC-A2", "EXTRA"]
    sigs = [
        EdfSignal(label=n, samples_per_record=50, dig_min=-100, dig_max=100,
                  phys_min=-100.0, phys_max=100.0,
                  digital=rng.integers(-100, 101, size=50 * 60).astype(np.int16))
        for n in names
    ]
    (tmp_path / "a.edf").write_bytes(
        write_edf(EdfRecording(signals=sigs, n_records=60, record_duration_s=1.0))
    )
    (tmp_path / "a.labels").write_text("W\n1\n")
    (tmp_path / "manifest.json").write_text(json.dumps({
        "schema": "bimamba-manifest/1",
        "subjects": [{"id": "a", "signals": "a.edf", "labels": "a.labels"}],
    }))
    ds = load_manifest(tmp_path / "manifest.json")
    channels, rate = ds.signals(ds.subjects[0])
    assert channels.shape == (2, 3000)  # LOC-A2 and C3-A2 only
    assert rate == 50.0
    sel = ds.epochs(ds.subjects[0], epoch_samples=500)
    assert sel.data.shape == (2, 2, 500)


def test_labels_file_bad_char_names_line(tmp_path):
    (tmp_path / "a.labels").write_text("W\nQ\n")
    (tmp_path / "manifest.json").write_text(json.dumps({
        "schema": "bimamba-manifest/1",
        "subjects": [{"id": "a", "labels": "a.labels"}],
    }))
    ds = load_manifest(tmp_path / "manifest.json")
    with pytest.raises(ParseError, match="line 2"):
        ds.labels(ds.subjects[0])


def test_bmt_signals_require_rate(tmp_path):
    from bimamba.serialize import write_tensor

    with open(tmp_path / "a.bmt", "wb") as fh:
        write_tensor(fh, np.zeros((1, 500)))
    (tmp_path / "a.labels").write_text("W\n")
    (tmp_path / "manifest.json").write_text(json.dumps({
        "schema": "bimamba-manifest/1",
        "subjects": [{"id": "a", "signals": "a.bmt", "labels": "a.labels"}],
    }))
    ds = load_manifest(tmp_path / "manifest.json")
    with pytest.raises(ParseError, match="rate_hz"):
        ds.signals(ds.subjects[0])


# ---------------------------------------------------------------------------
# manifest validation


def manifest_doc(**overrides):
    doc = {
        "schema": "bimamba-manifest/1",
        "subjects": [{"id": "a", "labels": "a.labels"}],
    }
    doc.update(overrides)
    return doc


def write_manifest(tmp_path, doc):
    p = tmp_path / "manifest.json"
    p.write_text(json.dumps(doc))
    return p


def test_manifest_rejects_wrong_schema(tmp_path):
    (tmp_path / "a.labels").write_text("W\n")
    with pytest.raises(ParseError, match="schema"):
        load_manifest(write_manifest(tmp_path, manifest_doc(schema="nope/2")))


def test_manifest_rejects_garbage_json(tmp_path):
    p = tmp_path / "manifest.json"
    p.write_text("{not json")
    with pytest.raises(ParseError):
        load_manifest(p)


def test_manifest_rejects_empty_subject_list(tmp_path):
    with pytest.raises(ParseError, match="non-empty"):
        load_manifest(write_manifest(tmp_path, manifest_doc(subjects=[])))


def test_manifest_rejects_unknown_field(tmp_path):
    (tmp_path / "a.labels").write_text("W\n")
    doc = manifest_doc()
    doc["subjects"][0]["shoesize"] = 42
    with pytest.raises(ParseError, match="shoesize"):
        load_manifest(write_manifest(tmp_path, doc))


def test_manifest_requires_id_and_labels(tmp_path):
    doc = manifest_doc(subjects=[{"labels": "a.labels"}])
    with pytest.raises(ParseError, match="'id'"):
        load_manifest(write_manifest(tmp_path, doc))


def test_manifest_rejects_duplicate_ids(tmp_path):
    (tmp_path / "a.labels").write_text("W\n")
    doc = manifest_doc(subjects=[
        {"id": "a", "labels": "a.labels"},
        {"id": "a", "labels": "a.labels"},
    ])
    with pytest.raises(ParseError, match="duplicate"):
        load_manifest(write_manifest(tmp_path, doc))


def test_manifest_rejects_bad_health_value(tmp_path):
    (tmp_path / "a.labels").write_text("W\n")
    doc = manifest_doc(subjects=[{"id": "a", "labels": "a.labels", "health": "fine"}])
    with pytest.raises(ParseError, match="health"):
        load_manifest(write_manifest(tmp_path, doc))


def test_manifest_reports_all_missing_files_at_once(tmp_path):
    doc = manifest_doc(subjects=[
        {"id": "a", "labels": "gone1.labels"},
        {"id": "b", "labels": "gone2.labels", "signals": "gone3.bmt"},
    ])
    with pytest.raises(ParseError) as ei:
        load_manifest(write_manifest(tmp_path, doc))
    msg = str(ei.value)
    assert "gone1.labels" in msg and "gone2.labels" in msg and "gone3.bmt" in msg
