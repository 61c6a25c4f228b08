"""End-to-end runs behind the CLI: train, cross-validate, cross-dataset
evaluation, the health ratio sweep, and prediction rendering.

Every run writes deterministic artifacts (JSON with fixed key order, no
timestamps, relative paths) under its output directory, so repeating a
run with the same seed reproduces every metric file byte-for-byte.
Fold-level work derives its seeds from (seed, fold index) and may run in
parallel worker processes without changing any result.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import plots
from .data import encode_health_input, load_manifest
from .errors import ConfigError
from .metrics import bundle, confusion, roc_auc
from .model import (
    HealthModelConfig,
    StageModelConfig,
    build_health_model,
    build_stage_model,
    load_model,
)
from .tensor import Tensor, no_grad
from .training import TrainingConfig, derive_seed, evaluate, subject_kfold, train

__all__ = [
    "stage_arrays",
    "cv_run",
    "train_run",
    "xeval_run",
    "health_run",
    "predict_run",
    "worker_count",
]

REPORT_SCHEMA = "bimamba-report/1"


def write_json(path, doc) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def worker_count() -> int:
    raw = os.environ.get("BIMAMBA_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"BIMAMBA_THREADS must be an integer, got {raw!r}") from None
    return max(1, n)


def stage_arrays(ds, subject_ids, epoch_samples: int):
    """Concatenate per-epoch windows for the given subjects.

    Returns (x (n,C,S), y (n,), subjects (n,)) in manifest order.
    """
    wanted = set(subject_ids)
    xs, ys, ss = [], [], []
    for sub in ds.subjects:
        if sub.id not in wanted:
            continue
        batch = ds.epochs(sub, epoch_samples)
        xs.append(batch.data)
        ys.append(batch.labels)
        ss.append(batch.subjects)
    if not xs:
        raise ConfigError(f"no subjects matched {sorted(wanted)}")
    return np.concatenate(xs), np.concatenate(ys), np.concatenate(ss)


def predict_classes(model, x: np.ndarray, batch_size: int = 100):
    """(argmax predictions, class-1 softmax scores) under frozen params."""
    preds = np.empty(len(x), dtype=np.int64)
    scores = np.empty(len(x))
    with no_grad():
        for lo in range(0, len(x), batch_size):
            hi = min(lo + batch_size, len(x))
            logits = model.forward(Tensor(x[lo:hi]), train=False).data
            z = logits - logits.max(axis=1, keepdims=True)
            p = np.exp(z)
            p /= p.sum(axis=1, keepdims=True)
            preds[lo:hi] = np.argmax(logits, axis=1)
            scores[lo:hi] = p[:, 1]
    return preds, scores


def _stage_config(epoch_samples: int, n_bimamba: int, use_eca: bool, overrides: dict | None) -> StageModelConfig:
    kwargs = dict(overrides or {})
    kwargs.setdefault("epoch_samples", epoch_samples)
    kwargs.setdefault("n_bimamba", n_bimamba)
    kwargs.setdefault("use_eca", use_eca)
    return StageModelConfig(**kwargs)


def _training_config(seed: int, overrides: dict | None) -> TrainingConfig:
    kwargs = dict(overrides or {})
    kwargs["seed"] = seed
    return TrainingConfig(**kwargs)


def _fold_payload(manifest, out_dir, fold_idx, train_ids, val_ids, epoch_samples,
                  model_cfg, training, base_seed):
    return {
        "manifest": str(manifest),
        "out_dir": None if out_dir is None else str(out_dir),
        "fold": fold_idx,
        "train_ids": list(train_ids),
        "val_ids": list(val_ids),
        "epoch_samples": epoch_samples,
        "model_cfg": model_cfg,
        "training": training,
        "seed": base_seed,
    }


def run_stage_fold(payload: dict) -> dict:
    """Train one fold; safe to call in a separate process.

    Reads the dataset from the manifest path, trains on the fold's train
    subjects, validates on its validation subjects, writes the fold's
    artifacts (metrics, hypnogram tracks, checkpoint), and returns the
    summary used for aggregation.
    """
    ds = load_manifest(payload["manifest"])
    es = payload["epoch_samples"]
    train_x, train_y, train_s = stage_arrays(ds, payload["train_ids"], es)
    val_x, val_y, val_s = stage_arrays(ds, payload["val_ids"], es)
    fold = payload["fold"]
    model = build_stage_model(
        StageModelConfig(**payload["model_cfg"]),
        derive_seed(payload["seed"], fold, 0),
    )
    cfg = _training_config(derive_seed(payload["seed"], fold, 1), payload["training"])
    out_dir = payload["out_dir"]
    ckpt = None
    if out_dir is not None:
        fold_dir = Path(out_dir) / f"fold_{fold:02d}"
        fold_dir.mkdir(parents=True, exist_ok=True)
        ckpt = fold_dir / "checkpoint"
    report = train(
        model, train_x, train_y, val_x, val_y, cfg,
        checkpoint_dir=ckpt, train_subjects=train_s, val_subjects=val_s,
    )
    preds, _ = predict_classes(model, val_x, cfg.batch_size)
    tracks = []
    for sid in payload["val_ids"]:
        sel = val_s == sid
        tracks.append(
            {
                "id": sid,
                "true": val_y[sel].tolist(),
                "pred": preds[sel].tolist(),
            }
        )
    summary = {
        "fold": fold,
        "train_subjects": list(payload["train_ids"]),
        "val_subjects": list(payload["val_ids"]),
        "report": report.to_dict(),
    }
    if out_dir is not None:
        write_json(fold_dir / "metrics.json", summary)
        write_json(fold_dir / "hypnograms.json", {"subjects": tracks})
    return summary


def cv_run(
    manifest,
    k: int,
    out,
    seed: int,
    epoch_samples: int = 1000,
    n_bimamba: int = 1,
    use_eca: bool = True,
    model_overrides: dict | None = None,
    training: dict | None = None,
    workers: int | None = None,
) -> dict:
    """Subject-wise k-fold cross-validation over one manifest."""
    from .report import report_run

    ds = load_manifest(manifest)
    plan = subject_kfold(ds.subject_ids(), k, seed)
    model_cfg = _stage_config(epoch_samples, n_bimamba, use_eca, model_overrides)
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    from dataclasses import asdict

    write_json(
        out_dir / "config.json",
        {
            "schema": REPORT_SCHEMA,
            "task": "cv",
            "manifest": str(manifest),
            "k": k,
            "seed": seed,
            "epoch_samples": epoch_samples,
            "model": asdict(model_cfg),
            "training": training or {},
        },
    )
    payloads = [
        _fold_payload(
            manifest, out_dir, i, tr, va, epoch_samples,
            asdict(model_cfg), training, seed,
        )
        for i, (tr, va) in enumerate(plan)
    ]
    n_workers = worker_count() if workers is None else max(1, workers)
    if n_workers > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=min(n_workers, len(payloads))) as pool:
            results = list(pool.map(run_stage_fold, payloads))
    else:
        results = [run_stage_fold(p) for p in payloads]
    results.sort(key=lambda r: r["fold"])
    return report_run(out_dir)


def train_run(
    manifest,
    out,
    seed: int,
    epoch_samples: int = 1000,
    n_bimamba: int = 1,
    use_eca: bool = True,
    model_overrides: dict | None = None,
    training: dict | None = None,
    holdout_k: int = 5,
) -> dict:
    """Single train/validation split (first fold of a k-way subject split)."""
    ds = load_manifest(manifest)
    ids = ds.subject_ids()
    plan = subject_kfold(ids, min(holdout_k, len(ids)), seed)
    train_ids, val_ids = plan[0]
    model_cfg = _stage_config(epoch_samples, n_bimamba, use_eca, model_overrides)
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    from dataclasses import asdict

    payload = _fold_payload(
        manifest, out_dir, 0, train_ids, val_ids, epoch_samples,
        asdict(model_cfg), training, seed,
    )
    summary = run_stage_fold(payload)
    write_json(
        out_dir / "config.json",
        {
            "schema": REPORT_SCHEMA,
            "task": "train",
            "manifest": str(manifest),
            "k": 1,
            "seed": seed,
            "epoch_samples": epoch_samples,
            "model": asdict(model_cfg),
            "training": training or {},
        },
    )
    plots.save_loss_curves([summary["report"]["epochs"]], out_dir / "loss_curves.png")
    return summary


def xeval_run(
    manifest,
    eval_manifest,
    out,
    seed: int,
    epoch_samples: int = 1000,
    n_bimamba: int = 1,
    use_eca: bool = True,
    model_overrides: dict | None = None,
    training: dict | None = None,
) -> dict:
    """Train on one dataset, evaluate the frozen model on another."""
    out_dir = Path(out)
    summary = train_run(
        manifest, out_dir, seed, epoch_samples, n_bimamba, use_eca,
        model_overrides, training,
    )
    model = load_model(out_dir / "fold_00" / "checkpoint")
    ds_b = load_manifest(eval_manifest)
    x, y, _ = stage_arrays(ds_b, ds_b.subject_ids(), epoch_samples)
    cm, mb, loss = evaluate(model, x, y)
    doc = {
        "schema": REPORT_SCHEMA,
        "task": "xeval",
        "train_manifest": str(manifest),
        "eval_manifest": str(eval_manifest),
        "train_val_accuracy": summary["report"]["best_val_accuracy"],
        "eval": {
            "loss": loss,
            "confusion": cm.tolist(),
            "metrics": mb.to_dict(),
        },
    }
    write_json(out_dir / "xeval.json", doc)
    plots.save_confusion(cm, out_dir / "xeval_confusion.png")
    return doc


def _stratified_split(y: np.ndarray, ratio: float, rng: np.random.Generator):
    train_idx, test_idx = [], []
    for cls in np.unique(y):
        idx = np.flatnonzero(y == cls)
        idx = idx[rng.permutation(len(idx))]
        n_tr = int(round(ratio * len(idx)))
        n_tr = min(max(n_tr, 1), len(idx) - 1)
        train_idx.extend(idx[:n_tr])
        test_idx.extend(idx[n_tr:])
    return np.sort(np.asarray(train_idx)), np.sort(np.asarray(test_idx))


def health_run(
    manifest,
    out,
    seed: int,
    ratios=(0.5, 0.6, 0.7, 0.8, 0.9),
    model_overrides: dict | None = None,
    training: dict | None = None,
) -> dict:
    """Train/test ratio sweep for whole-night health classification.

    Class 1 is "unhealthy" (the detection target); ROC scores are its
    softmax probability.  Splits are stratified per class.
    """
    ds = load_manifest(manifest)
    hyps = [ds.hypnogram(sub) for sub in ds.subjects]
    missing = [h.subject for h in hyps if h.health is None]
    if missing:
        raise ConfigError(f"subjects lack health labels: {missing}")
    cfg_kwargs = dict(model_overrides or {})
    model_cfg = HealthModelConfig(**cfg_kwargs)
    x = np.stack([encode_health_input(h, model_cfg.max_cycles) for h in hyps])
    y = np.asarray([0 if h.health == "healthy" else 1 for h in hyps], dtype=np.int64)
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    runs = []
    curves = []
    for ri, ratio in enumerate(ratios):
        split_rng = np.random.Generator(
            np.random.PCG64(derive_seed(seed, ri, 2))
        )
        tr, te = _stratified_split(y, ratio, split_rng)
        model = build_health_model(model_cfg, derive_seed(seed, ri, 0))
        cfg = _training_config(derive_seed(seed, ri, 1), training)
        train(model, x[tr], y[tr], x[te], y[te], cfg)
        preds, scores = predict_classes(model, x[te], cfg.batch_size)
        cm = confusion(y[te], preds, 2)
        mb = bundle(cm)
        points, auc = roc_auc(scores, y[te])
        runs.append(
            {
                "ratio": ratio,
                "n_train": int(len(tr)),
                "n_test": int(len(te)),
                "accuracy": mb.accuracy,
                "auc": auc,
                "confusion": cm.tolist(),
                "roc": [[p[0], p[1]] for p in points],
            }
        )
        curves.append((f"ratio {ratio:g}", points, auc))
    doc = {
        "schema": REPORT_SCHEMA,
        "task": "health",
        "manifest": str(manifest),
        "seed": seed,
        "ratios": [float(r) for r in ratios],
        "runs": runs,
    }
    write_json(out_dir / "health.json", doc)
    plots.save_roc(curves, out_dir / "roc.png")
    plots.save_accuracy_vs_ratio(
        [r["ratio"] for r in runs], [r["accuracy"] for r in runs],
        out_dir / "accuracy_vs_ratio.png",
    )
    return doc


def predict_run(checkpoint, manifest, out, epoch_samples: int | None = None) -> dict:
    """Per-subject hypnogram prediction with SVG comparison plots."""
    from .metrics import render_hypnogram

    model = load_model(checkpoint)
    if model.kind != "stage":
        raise ConfigError("predict needs a stage-model checkpoint")
    es = model.config.epoch_samples if epoch_samples is None else epoch_samples
    ds = load_manifest(manifest)
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    text_parts = []
    for sub in ds.subjects:
        batch = ds.epochs(sub, es)
        preds, _ = predict_classes(model, batch.data)
        cm = confusion(batch.labels, preds, 5)
        mb = bundle(cm)
        svg_name = f"{sub.id}.svg"
        text = render_hypnogram(batch.labels, preds, out_dir / svg_name)
        text_parts.append(f"subject {sub.id}  accuracy {mb.accuracy:.4f}\n{text}")
        entries.append(
            {
                "id": sub.id,
                "accuracy": mb.accuracy,
                "kappa": mb.kappa,
                "true": batch.labels.tolist(),
                "pred": preds.tolist(),
                "svg": svg_name,
            }
        )
    doc = {"schema": REPORT_SCHEMA, "task": "predict", "subjects": entries}
    write_json(out_dir / "predictions.json", doc)
    with open(out_dir / "predictions.txt", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(text_parts))
    return doc
