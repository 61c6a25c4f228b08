"""Confusion-matrix metrics, ROC/AUC, and hypnogram comparison rendering.

Accuracy here is the multiclass trace/total; precision, recall, and F1
are one-vs-rest per class with macro (unweighted) averaging; kappa uses
chance agreement p_e = sum_k row_k * col_k / n^2.  Classes whose
denominator is zero score 0 and are flagged rather than propagating NaN.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ShapeError
from .stages import N_STAGES, STAGE_NAMES

__all__ = [
    "confusion",
    "MetricBundle",
    "bundle",
    "roc_auc",
    "render_hypnogram",
    "hypnogram_text",
    "metrics_table",
]


def confusion(true, pred, k: int) -> np.ndarray:
    """Count matrix with rows = true class, columns = predicted class."""
    t = np.asarray(true, dtype=np.int64)
    p = np.asarray(pred, dtype=np.int64)
    if t.shape != p.shape or t.ndim != 1:
        raise ShapeError(
            f"label vectors must be equal-length 1-D, got {t.shape} and {p.shape}"
        )
    for name, v in (("true", t), ("pred", p)):
        bad = (v < 0) | (v >= k)
        if bad.any():
            i = int(np.argmax(bad))
            raise DomainError(
                f"{name} label {v[i]} at index {i} outside [0, {k})"
            )
    cm = np.zeros((k, k), dtype=np.int64)
    np.add.at(cm, (t, p), 1)
    return cm


@dataclass
class MetricBundle:
    accuracy: float
    precision: list[float]
    recall: list[float]
    f1: list[float]
    macro_f1: float
    kappa: float
    p_o: float
    p_e: float
    zero_division: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "macro_f1": self.macro_f1,
            "kappa": self.kappa,
            "p_o": self.p_o,
            "p_e": self.p_e,
            "zero_division": self.zero_division,
        }


def _safe_div(num: float, den: float, flags: list, what: str) -> float:
    if den == 0:
        flags.append(what)
        return 0.0
    return num / den


def bundle(cm: np.ndarray) -> MetricBundle:
    cm = np.asarray(cm)
    n = cm.sum()
    if n == 0:
        raise DomainError("confusion matrix is empty")
    k = cm.shape[0]
    flags: list[str] = []
    accuracy = float(np.trace(cm)) / float(n)
    row = cm.sum(axis=1).astype(np.float64)  # true-class supports
    col = cm.sum(axis=0).astype(np.float64)  # predicted-class totals
    precision, recall, f1 = [], [], []
    for c in range(k):
        tp = float(cm[c, c])
        prec = _safe_div(tp, float(col[c]), flags, f"precision[{c}]")
        rec = _safe_div(tp, float(row[c]), flags, f"recall[{c}]")
        precision.append(prec)
        recall.append(rec)
        f1.append(_safe_div(2 * prec * rec, prec + rec, flags, f"f1[{c}]"))
    p_o = accuracy
    p_e = float((row * col).sum()) / float(n) ** 2
    kappa = _safe_div(p_o - p_e, 1.0 - p_e, flags, "kappa")
    return MetricBundle(
        accuracy=accuracy,
        precision=precision,
        recall=recall,
        f1=f1,
        macro_f1=float(np.mean(f1)),
        kappa=kappa,
        p_o=p_o,
        p_e=p_e,
        zero_division=flags,
    )


def roc_auc(scores, labels):
    """Threshold-sweep ROC over unique scores; AUC by trapezoid.

    Points run from (0,0) to (1,1) in rising false-positive order; tied
    scores move together, which matches rank-averaged (Mann-Whitney)
    handling of ties.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if s.shape != y.shape or s.ndim != 1:
        raise ShapeError(
            f"scores and labels must be equal-length 1-D, got {s.shape}, {y.shape}"
        )
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise DomainError("AUC undefined: both classes must be present")
    points = [(0.0, 0.0)]
    for thr in np.unique(s)[::-1]:
        hit = s >= thr
        tpr = float((hit & (y == 1)).sum()) / n_pos
        fpr = float((hit & (y == 0)).sum()) / n_neg
        points.append((fpr, tpr))
    auc = 0.0
    for (x0, y0), (x1, y1) in zip(points, points[1:]):
        auc += (x1 - x0) * (y0 + y1) / 2.0
    return points, auc


# ---------------------------------------------------------------------------
# hypnogram rendering

# display rows, top to bottom
_DISPLAY_ORDER = ("W", "REM", "N1", "N2", "N3")
_STAGE_TO_ROW = {STAGE_NAMES.index(name): row for row, name in enumerate(_DISPLAY_ORDER)}

_CELL_W = 16
_ROW_H = 18
_PANEL_H = _ROW_H * N_STAGES
_MARGIN_L = 48
_MARGIN_T = 24
_PANEL_GAP = 28


def _as_stage_array(h) -> np.ndarray:
    stages = getattr(h, "stages", h)
    return np.asarray(stages, dtype=np.int64)


def hypnogram_text(true, pred) -> str:
    """Terminal view: one char per epoch, caret marks disagreements."""
    t = _as_stage_array(true)
    p = _as_stage_array(pred)
    if t.shape != p.shape:
        raise ShapeError(f"track lengths differ: {t.shape} vs {p.shape}")
    from .stages import stage_to_char

    line_t = "".join(stage_to_char(int(v)) for v in t)
    line_p = "".join(stage_to_char(int(v)) for v in p)
    marks = "".join(" " if a == b else "^" for a, b in zip(t, p))
    return f"ref  {line_t}\npred {line_p}\n     {marks}\n"


def _track_points(stages: np.ndarray, top: int) -> str:
    pts = []
    for i, v in enumerate(stages):
        y = top + _STAGE_TO_ROW[int(v)] * _ROW_H + _ROW_H // 2
        x0 = _MARGIN_L + i * _CELL_W
        pts.append(f"{x0},{y} {x0 + _CELL_W},{y}")
    return " ".join(pts)


def render_hypnogram(true, pred, out) -> str:
    """Write a two-panel step-plot SVG; returns the text rendering.

    Panels share an x-axis of epochs; the reference track sits above the
    prediction.  Epochs where the tracks disagree get a tinted column
    spanning both panels.  Output is deterministic byte-for-byte.
    """
    t = _as_stage_array(true)
    p = _as_stage_array(pred)
    if t.shape != p.shape:
        raise ShapeError(f"track lengths differ: {t.shape} vs {p.shape}")
    n = len(t)
    width = _MARGIN_L + n * _CELL_W + 16
    height = _MARGIN_T + 2 * _PANEL_H + _PANEL_GAP + 24
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    tops = (_MARGIN_T, _MARGIN_T + _PANEL_H + _PANEL_GAP)
    for idx, (top, title) in enumerate(zip(tops, ("reference", "predicted"))):
        lines.append(
            f'<text x="{_MARGIN_L}" y="{top - 6}" font-family="monospace" '
            f'font-size="11" fill="black">{title}</text>'
        )
        for row, name in enumerate(_DISPLAY_ORDER):
            y = top + row * _ROW_H + _ROW_H // 2
            lines.append(
                f'<text x="{_MARGIN_L - 40}" y="{y + 4}" font-family="monospace" '
                f'font-size="10" fill="black">{name}</text>'
            )
            lines.append(
                f'<line x1="{_MARGIN_L}" y1="{y}" x2="{_MARGIN_L + n * _CELL_W}" '
                f'y2="{y}" stroke="#dddddd" stroke-width="1"/>'
            )
    # disagreement tint first so tracks draw on top
    for i in range(n):
        if t[i] != p[i]:
            x = _MARGIN_L + i * _CELL_W
            lines.append(
                f'<rect x="{x}" y="{tops[0]}" width="{_CELL_W}" '
                f'height="{_PANEL_H * 2 + _PANEL_GAP}" fill="#ffcccc" opacity="0.6"/>'
            )
    lines.append(
        f'<polyline fill="none" stroke="#1f4e9c" stroke-width="2" '
        f'points="{_track_points(t, tops[0])}"/>'
    )
    lines.append(
        f'<polyline fill="none" stroke="#b03030" stroke-width="2" '
        f'points="{_track_points(p, tops[1])}"/>'
    )
    lines.append("</svg>")
    svg = "\n".join(lines) + "\n"
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(svg)
    return hypnogram_text(t, p)


def metrics_table(rows: list[tuple[str, MetricBundle]]) -> str:
    """Aligned text table: ACC, F1 (macro), Kappa, then per-class F1."""
    header = ["model", "ACC", "F1", "Kappa"] + list(STAGE_NAMES)
    table = [header]
    for name, mb in rows:
        table.append(
            [name, f"{mb.accuracy:.4f}", f"{mb.macro_f1:.4f}", f"{mb.kappa:.4f}"]
            + [f"{v:.4f}" for v in mb.f1]
        )
    widths = [max(len(r[i]) for r in table) for i in range(len(header))]
    out = []
    for r in table:
        out.append("  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip())
    return "\n".join(out) + "\n"
