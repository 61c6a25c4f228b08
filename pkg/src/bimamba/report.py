"""Aggregate fold artifacts of a run directory into one report.

Reads fold_XX/metrics.json files, averages the headline metrics, sums
confusion matrices, and emits aggregate.json, an aligned text table, a
per-fold CSV, comparison hypnogram SVGs, and matplotlib figures.  The
step is a pure function of the fold files, so re-running it on the same
directory rewrites identical bytes.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import plots
from .errors import ConfigError
from .metrics import MetricBundle, metrics_table, render_hypnogram
from .pipeline import REPORT_SCHEMA, write_json
from .stages import STAGE_NAMES

__all__ = ["report_run"]


def _load_json(path: Path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def report_run(run_dir, out=None) -> dict:
    run = Path(run_dir)
    out_dir = Path(out) if out is not None else run
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg_path = run / "config.json"
    if not cfg_path.exists():
        raise ConfigError(f"{run} has no config.json; not a run directory")
    config = _load_json(cfg_path)
    k = config.get("k")
    fold_dirs = sorted(run.glob("fold_*"))
    summaries = []
    present = set()
    for d in fold_dirs:
        mpath = d / "metrics.json"
        if mpath.exists():
            s = _load_json(mpath)
            summaries.append(s)
            present.add(s["fold"])
    if isinstance(k, int) and k >= 1:
        absent = sorted(set(range(k)) - present)
        if absent:
            raise ConfigError(f"run is missing folds: {absent}")
    if not summaries:
        raise ConfigError(f"no fold metrics found under {run}")
    summaries.sort(key=lambda s: s["fold"])

    bundles = []
    confusion_total = None
    for s in summaries:
        final = s["report"]["final"]
        bundles.append(MetricBundle(**final["metrics"]))
        cm = np.asarray(final["confusion"])
        confusion_total = cm if confusion_total is None else confusion_total + cm

    def _mean(attr):
        return float(np.mean([getattr(b, attr) for b in bundles]))

    n_classes = len(bundles[0].f1)
    mean_bundle = MetricBundle(
        accuracy=_mean("accuracy"),
        precision=[float(np.mean([b.precision[c] for b in bundles])) for c in range(n_classes)],
        recall=[float(np.mean([b.recall[c] for b in bundles])) for c in range(n_classes)],
        f1=[float(np.mean([b.f1[c] for b in bundles])) for c in range(n_classes)],
        macro_f1=_mean("macro_f1"),
        kappa=_mean("kappa"),
        p_o=_mean("p_o"),
        p_e=_mean("p_e"),
        zero_division=sorted({z for b in bundles for z in b.zero_division}),
    )

    aggregate = {
        "schema": REPORT_SCHEMA,
        "task": "report",
        "folds": [
            {
                "fold": s["fold"],
                "val_subjects": s["val_subjects"],
                "best_epoch": s["report"]["best_epoch"],
                "metrics": b.to_dict(),
            }
            for s, b in zip(summaries, bundles)
        ],
        "mean": mean_bundle.to_dict(),
        "confusion_total": confusion_total.tolist(),
    }
    write_json(out_dir / "aggregate.json", aggregate)

    rows = [(f"fold {s['fold']}", b) for s, b in zip(summaries, bundles)]
    rows.append(("mean", mean_bundle))
    table = metrics_table(rows)
    with open(out_dir / "table.txt", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(table)

    with open(out_dir / "metrics.csv", "w", encoding="utf-8", newline="\n") as fh:
        cols = ["fold", "accuracy", "macro_f1", "kappa"] + [
            f"f1_{n}" for n in STAGE_NAMES[:n_classes]
        ]
        fh.write(",".join(cols) + "\n")
        for name, b in rows:
            cells = [name, f"{b.accuracy:.6f}", f"{b.macro_f1:.6f}", f"{b.kappa:.6f}"]
            cells += [f"{v:.6f}" for v in b.f1]
            fh.write(",".join(cells) + "\n")

    plots.save_confusion(confusion_total, out_dir / "confusion.png")
    plots.save_loss_curves(
        [s["report"]["epochs"] for s in summaries], out_dir / "loss_curves.png"
    )
    for s in summaries:
        hpath = run / f"fold_{s['fold']:02d}" / "hypnograms.json"
        if not hpath.exists():
            continue
        tracks = _load_json(hpath)["subjects"]
        if tracks:
            first = tracks[0]
            render_hypnogram(
                first["true"], first["pred"],
                out_dir / f"hypnogram_fold{s['fold']:02d}_{first['id']}.svg",
            )
    return aggregate
