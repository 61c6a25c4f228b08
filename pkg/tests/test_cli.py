"""CLI surface: argument handling, JSON contracts, and run artifacts."""

import json
import subprocess
import sys

import numpy as np
import pytest

from bimamba.cli import main, parse_ratios
from bimamba.errors import ConfigError
from bimamba.metrics import bundle
from bimamba.pipeline import worker_count, write_json

pytestmark = pytest.mark.filterwarnings("ignore::DeprecationWarning")

SMALL_CONFIG = {
    "model": {
        "channels": 2,
        "n_state": 4,
        "dropout": 0.0,
        "cnn": [[4, 7, 2], [6, 5, 2], [8, 3, 2]],
    },
    "training": {"epochs": 2, "batch_size": 30, "lr": 0.01},
}


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def last_json(out):
    return json.loads(out.strip().splitlines()[-1])


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """One tiny stage dataset plus a model/training config, built once."""
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "config.json"
    cfg.write_text(json.dumps(SMALL_CONFIG), encoding="utf-8")
    code = main([
        "synth", "--out", str(root / "ds"), "--seed", "0",
        "--subjects", "4", "--epochs-per-subject", "30",
        "--channels", "2", "--epoch-samples", "500", "--informative", "2",
    ])
    assert code == 0
    return root


def stage_args(workspace, out_name):
    return [
        "--manifest", str(workspace / "ds" / "manifest.json"),
        "--out", str(workspace / out_name),
        "--epoch-samples", "500",
        "--config", str(workspace / "config.json"),
    ]


# ---------------------------------------------------------------------------
# pure helpers


def test_parse_ratios_range():
    assert parse_ratios("0.5..0.9") == [0.5, 0.6, 0.7, 0.8, 0.9]
    assert parse_ratios("0.7..0.7") == [0.7]


def test_parse_ratios_comma_list():
    assert parse_ratios("0.25,0.5,0.75") == [0.25, 0.5, 0.75]
    assert parse_ratios("0.7") == [0.7]


def test_parse_ratios_rejects_nonsense():
    with pytest.raises(ConfigError):
        parse_ratios("0.9..0.5")
    with pytest.raises(ConfigError):
        parse_ratios(",")
    with pytest.raises(ConfigError):
        parse_ratios("1.5")
    with pytest.raises(ConfigError):
        parse_ratios("0.0..0.2")  # 0.0 is not a usable train ratio


def test_worker_count(monkeypatch):
    monkeypatch.delenv("BIMAMBA_THREADS", raising=False)
    assert worker_count() == 1
    monkeypatch.setenv("BIMAMBA_THREADS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("BIMAMBA_THREADS", "0")
    assert worker_count() == 1
    monkeypatch.setenv("BIMAMBA_THREADS", "two")
    with pytest.raises(ConfigError):
        worker_count()


# ---------------------------------------------------------------------------
# argument errors


def test_no_command_is_usage_error(capsys):
    code, _, err = run_cli(capsys)
    assert code == 2
    assert json.loads(err.strip())["kind"] == "usage"


def test_unknown_command_is_usage_error(capsys):
    code, _, err = run_cli(capsys, "frobnicate")
    assert code == 2
    assert "error" in json.loads(err.strip())


def test_missing_manifest_is_runtime_error(capsys, tmp_path):
    code, _, err = run_cli(
        capsys, "train", "--manifest", str(tmp_path / "nope.json"),
        "--out", str(tmp_path / "out"),
    )
    assert code == 1
    doc = json.loads(err.strip())
    assert "nope.json" in doc["error"]


def test_bad_config_file_is_runtime_error(capsys, tmp_path, workspace):
    bad = tmp_path / "broken.json"
    bad.write_text("{not json", encoding="utf-8")
    code, _, err = run_cli(
        capsys, "train",
        "--manifest", str(workspace / "ds" / "manifest.json"),
        "--out", str(tmp_path / "out"), "--config", str(bad),
    )
    assert code == 1
    assert json.loads(err.strip())["kind"] == "ConfigError"


# ---------------------------------------------------------------------------
# synth


def test_synth_writes_loadable_dataset(capsys, workspace):
    from bimamba.data import load_manifest

    ds = load_manifest(workspace / "ds" / "manifest.json")
    assert len(ds.subjects) == 4
    batch = ds.epochs(ds.subjects[0], 500)
    assert batch.data.shape == (30, 2, 500)


def test_synth_health_balance(capsys, tmp_path):
    code, out, _ = run_cli(
        capsys, "synth", "--task", "health", "--out", str(tmp_path / "h"),
        "--subjects", "21", "--balance",
        "--max-cycles", "120", "--min-cycles", "80",
    )
    assert code == 0
    doc = last_json(out)
    assert doc["mode"] == "health"
    assert doc["subjects"] == 21
    assert doc["healthy"] == 11  # round(21 * 110/210)


# ---------------------------------------------------------------------------
# train / cv / report


def test_train_run_directory(capsys, workspace):
    code, out, _ = run_cli(capsys, "train", *stage_args(workspace, "run_train"))
    assert code == 0
    doc = last_json(out)
    assert doc["task"] == "train"
    assert 0.0 <= doc["best_val_accuracy"] <= 1.0
    rd = workspace / "run_train"
    for rel in (
        "config.json", "loss_curves.png",
        "fold_00/metrics.json", "fold_00/hypnograms.json",
        "fold_00/checkpoint/manifest.json",
    ):
        assert (rd / rel).exists(), rel
    metrics = json.loads((rd / "fold_00" / "metrics.json").read_text())
    assert len(metrics["report"]["epochs"]) == 2
    # subject-wise split: no id appears on both sides
    assert not set(metrics["train_subjects"]) & set(metrics["val_subjects"])


def test_cv_run_and_report_artifacts(capsys, workspace):
    code, out, _ = run_cli(
        capsys, "cv", "--k", "2", "--seed", "1", *stage_args(workspace, "run_cv")
    )
    assert code == 0
    doc = last_json(out)
    assert doc["task"] == "cv"
    assert doc["k"] == 2
    rd = workspace / "run_cv"
    names = {p.name for p in rd.iterdir()}
    assert {"aggregate.json", "table.txt", "metrics.csv",
            "confusion.png", "loss_curves.png"} <= names
    assert any(n.startswith("hypnogram_fold00_") and n.endswith(".svg") for n in names)
    agg = json.loads((rd / "aggregate.json").read_text())
    assert len(agg["folds"]) == 2
    assert np.isclose(
        agg["mean"]["accuracy"],
        np.mean([f["metrics"]["accuracy"] for f in agg["folds"]]),
    )
    assert doc["mean_accuracy"] == agg["mean"]["accuracy"]
    csv_lines = (rd / "metrics.csv").read_text().splitlines()
    assert csv_lines[0].startswith("fold,accuracy,macro_f1,kappa,f1_W")
    assert len(csv_lines) == 1 + 2 + 1  # header, two folds, mean


def test_report_is_idempotent(capsys, workspace):
    rd = workspace / "run_cv"
    before = {
        n: (rd / n).read_bytes()
        for n in ("aggregate.json", "table.txt", "metrics.csv")
    }
    code, out, _ = run_cli(capsys, "report", str(rd))
    assert code == 0
    for n, blob in before.items():
        assert (rd / n).read_bytes() == blob, n


def test_report_out_elsewhere(capsys, workspace, tmp_path):
    code, _, _ = run_cli(
        capsys, "report", str(workspace / "run_cv"), "--out", str(tmp_path / "agg")
    )
    assert code == 0
    a = (workspace / "run_cv" / "aggregate.json").read_bytes()
    b = (tmp_path / "agg" / "aggregate.json").read_bytes()
    assert a == b


def crafted_run(tmp_path, folds):
    """Hand-built run directory with known per-fold confusions."""
    rd = tmp_path / "crafted"
    rd.mkdir()
    write_json(rd / "config.json", {"schema": "bimamba-report/1", "task": "cv", "k": len(folds)})
    for i, cm in enumerate(folds):
        d = rd / f"fold_{i:02d}"
        d.mkdir()
        mb = bundle(np.asarray(cm))
        write_json(d / "metrics.json", {
            "fold": i,
            "train_subjects": ["a"],
            "val_subjects": [f"v{i}"],
            "report": {
                "epochs": [{"epoch": 0, "train_loss": 1.0, "val_loss": 1.0,
                            "val_accuracy": mb.accuracy}],
                "best_epoch": 0,
                "best_val_accuracy": mb.accuracy,
                "final": {"val_loss": 1.0, "confusion": list(map(list, cm)),
                          "metrics": mb.to_dict()},
            },
        })
    return rd


def test_report_math_on_crafted_folds(capsys, tmp_path):
    eye = (np.eye(5, dtype=int) * 4).tolist()          # accuracy 1.0
    half = np.full((5, 5), 1, dtype=int).tolist()      # accuracy 0.2
    rd = crafted_run(tmp_path, [eye, half])
    code, out, _ = run_cli(capsys, "report", str(rd))
    assert code == 0
    agg = json.loads((rd / "aggregate.json").read_text())
    assert np.isclose(agg["mean"]["accuracy"], (1.0 + 0.2) / 2)
    total = np.asarray(agg["confusion_total"])
    assert np.array_equal(total, np.asarray(eye) + np.asarray(half))


def test_report_missing_fold_fails(capsys, tmp_path):
    eye = (np.eye(5, dtype=int) * 4).tolist()
    rd = crafted_run(tmp_path, [eye, eye])
    (rd / "fold_01" / "metrics.json").unlink()
    code, _, err = run_cli(capsys, "report", str(rd))
    assert code == 1
    assert "missing folds: [1]" in json.loads(err.strip())["error"]


def test_report_refuses_non_run_directory(capsys, tmp_path):
    code, _, err = run_cli(capsys, "report", str(tmp_path))
    assert code == 1
    assert "config.json" in json.loads(err.strip())["error"]


# ---------------------------------------------------------------------------
# predict / xeval


def test_predict_renders_per_subject(capsys, workspace, tmp_path):
    ck = workspace / "run_train" / "fold_00" / "checkpoint"
    code, out, _ = run_cli(
        capsys, "predict", "--checkpoint", str(ck),
        "--manifest", str(workspace / "ds" / "manifest.json"),
        "--out", str(tmp_path / "pred"),
    )
    assert code == 0
    doc = last_json(out)
    assert doc["subjects"] == 4
    pd = tmp_path / "pred"
    preds = json.loads((pd / "predictions.json").read_text())
    for entry in preds["subjects"]:
        assert (pd / entry["svg"]).exists()
        assert len(entry["pred"]) == len(entry["true"]) == 30
    text = (pd / "predictions.txt").read_text()
    assert text.count("subject ") == 4
    assert "ref " in text and "pred" in text


def test_predict_rejects_health_checkpoint(capsys, tmp_path, workspace):
    from bimamba.model import HealthModelConfig, build_health_model

    m = build_health_model(HealthModelConfig(max_cycles=40, n_state=4), seed=0)
    m.save(tmp_path / "hck")
    code, _, err = run_cli(
        capsys, "predict", "--checkpoint", str(tmp_path / "hck"),
        "--manifest", str(workspace / "ds" / "manifest.json"),
        "--out", str(tmp_path / "pred2"),
    )
    assert code == 1
    assert "stage" in json.loads(err.strip())["error"]


def test_xeval_runs_across_datasets(capsys, workspace, tmp_path):
    code, _, _ = run_cli(
        capsys, "synth", "--out", str(tmp_path / "ds_b"), "--seed", "9",
        "--subjects", "2", "--epochs-per-subject", "20",
        "--channels", "2", "--epoch-samples", "500", "--informative", "2",
    )
    assert code == 0
    code, out, _ = run_cli(
        capsys, "xeval",
        "--manifest", str(workspace / "ds" / "manifest.json"),
        "--eval-manifest", str(tmp_path / "ds_b" / "manifest.json"),
        "--out", str(tmp_path / "run_x"),
        "--epoch-samples", "500", "--config", str(workspace / "config.json"),
    )
    assert code == 0
    doc = last_json(out)
    assert 0.0 <= doc["eval_accuracy"] <= 1.0
    xj = json.loads((tmp_path / "run_x" / "xeval.json").read_text())
    assert np.asarray(xj["eval"]["confusion"]).sum() == 40
    assert (tmp_path / "run_x" / "xeval_confusion.png").exists()


# ---------------------------------------------------------------------------
# health


def test_health_sweep(capsys, tmp_path):
    code, _, _ = run_cli(
        capsys, "synth", "--task", "health", "--out", str(tmp_path / "hds"),
        "--subjects", "12", "--seed", "3",
        "--max-cycles", "120", "--min-cycles", "80",
    )
    assert code == 0
    cfg = tmp_path / "hcfg.json"
    cfg.write_text(json.dumps({
        "model": {"max_cycles": 120, "n_state": 4, "dropout": 0.0},
        "training": {"epochs": 1, "batch_size": 8, "lr": 0.003},
    }), encoding="utf-8")
    code, out, _ = run_cli(
        capsys, "health",
        "--manifest", str(tmp_path / "hds" / "manifest.json"),
        "--out", str(tmp_path / "run_h"),
        "--ratios", "0.5,0.8", "--config", str(cfg),
    )
    assert code == 0
    doc = last_json(out)
    assert doc["ratios"] == [0.5, 0.8]
    assert len(doc["accuracy"]) == 2 and len(doc["auc"]) == 2
    rd = tmp_path / "run_h"
    hj = json.loads((rd / "health.json").read_text())
    for run in hj["runs"]:
        assert run["n_train"] + run["n_test"] == 12
        assert 0.0 <= run["auc"] <= 1.0
    assert (rd / "roc.png").exists()
    assert (rd / "accuracy_vs_ratio.png").exists()


# ---------------------------------------------------------------------------
# gradcheck


def test_gradcheck_command(capsys):
    code, out, _ = run_cli(capsys, "gradcheck", "--seed", "0")
    assert code == 0
    doc = last_json(out)
    assert doc["task"] == "gradcheck"
    assert doc["worst"] < 1e-4
    names = set(doc["checks"])
    assert {"conv1d.w", "selective_scan.u", "bimamba_block", "stage_model"} <= names


# ---------------------------------------------------------------------------
# determinism and parallel workers


def test_cv_results_independent_of_worker_count(capsys, workspace, monkeypatch):
    args = ["cv", "--k", "2", "--seed", "7"]
    monkeypatch.delenv("BIMAMBA_THREADS", raising=False)
    code, _, _ = run_cli(capsys, *args, *stage_args(workspace, "run_seq"))
    assert code == 0
    monkeypatch.setenv("BIMAMBA_THREADS", "2")
    code, _, _ = run_cli(capsys, *args, *stage_args(workspace, "run_par"))
    assert code == 0
    for rel in (
        "aggregate.json", "table.txt", "metrics.csv",
        "fold_00/metrics.json", "fold_01/metrics.json",
    ):
        a = (workspace / "run_seq" / rel).read_bytes()
        b = (workspace / "run_par" / rel).read_bytes()
        assert a == b, rel


def test_bad_thread_env_fails_cleanly(capsys, workspace, monkeypatch):
    monkeypatch.setenv("BIMAMBA_THREADS", "many")
    code, _, err = run_cli(
        capsys, "cv", "--k", "2", *stage_args(workspace, "run_bad")
    )
    assert code == 1
    assert "BIMAMBA_THREADS" in json.loads(err.strip())["error"]


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "bimamba", "synth", "--out", str(tmp_path / "d"),
         "--subjects", "2", "--epochs-per-subject", "4",
         "--channels", "2", "--epoch-samples", "500"],
        capture_output=True, text=True, timeout=120,
    )
    assert proc.returncode == 0, proc.stderr
    doc = json.loads(proc.stdout.strip().splitlines()[-1])
    assert doc["task"] == "synth"
