"""Per-class precision / recall / F1 from a confusion matrix."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ConfigError
from .data.types import LABELS

CSV_COLUMNS = ("run_id", "split", "ablation", "class", "precision", "recall", "f1", "support")


@dataclass
class MetricsReport:
    split: str
    confusion: np.ndarray  # [K, K], rows = truth, cols = prediction
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    macro_precision: float
    macro_recall: float
    macro_f1: float
    average: str = "macro"

    @property
    def support(self) -> np.ndarray:
        return self.confusion.sum(axis=1)

    def summary(self) -> str:
        parts = [f"{LABELS[k]} P={self.precision[k]:.4f} R={self.recall[k]:.4f} F1={self.f1[k]:.4f}"
                 for k in range(len(LABELS))]
        return (f"[{self.split}] {self.average} P={self.macro_precision:.4f} "
                f"R={self.macro_recall:.4f} F1={self.macro_f1:.4f} | " + "; ".join(parts))


def confusion_matrix(y_true, y_pred, n_classes: int = len(LABELS)) -> np.ndarray:
    y_true = np.asarray(y_true, dtype=np.intp)
    y_pred = np.asarray(y_pred, dtype=np.intp)
    if y_true.shape != y_pred.shape:
        raise ValueError(f"confusion_matrix: {y_true.shape} truths vs {y_pred.shape} predictions")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (y_true, y_pred), 1)
    return cm


def _ratio(num, den):
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    return np.divide(num, den, out=np.zeros_like(num), where=den > 0)


def _f1(p, r):
    return _ratio(2.0 * p * r, p + r)


def report_from_confusion(cm: np.ndarray, split: str = "", average: str = "macro",
                          include_others: bool = True, macro_over: str = "all") -> MetricsReport:
    """Zero conventions: P=0 for a class never predicted, R=0 for a class with
    no support, F1=0 when P+R=0.

    ``average`` is "macro" (unweighted class mean) or "micro" (pooled counts);
    ``include_others`` keeps the last class in the headline score;
    ``macro_over`` is "all" or "supported" (classes with nonzero support).
    """
    if average not in ("macro", "micro"):
        raise ConfigError(f"average must be 'macro' or 'micro', got {average!r}")
    if macro_over not in ("all", "supported"):
        raise ConfigError(f"macro_over must be 'all' or 'supported', got {macro_over!r}")
    cm = np.asarray(cm, dtype=np.int64)
    tp = np.diag(cm).astype(np.float64)
    precision = _ratio(tp, cm.sum(axis=0))
    recall = _ratio(tp, cm.sum(axis=1))
    f1 = _f1(precision, recall)
    keep = np.ones(len(cm), dtype=bool)
    if not include_others:
        keep[LABELS.index("others")] = False
    if macro_over == "supported":
        keep &= cm.sum(axis=1) > 0
    if average == "macro":
        if keep.any():
            mp, mr, mf = (float(a[keep].mean()) for a in (precision, recall, f1))
        else:
            mp = mr = mf = 0.0
    else:
        tp_k = tp[keep].sum()
        mp = float(_ratio(tp_k, cm[:, keep].sum()))
        mr = float(_ratio(tp_k, cm[keep, :].sum()))
        mf = float(_f1(mp, mr))
    return MetricsReport(split, cm, precision, recall, f1, mp, mr, mf, average)


def compute_metrics(y_true, y_pred, split: str = "", **flags) -> MetricsReport:
    return report_from_confusion(confusion_matrix(y_true, y_pred), split, **flags)


def metrics_rows(report: MetricsReport, run_id: str, ablation: str) -> list[dict]:
    rows = []
    for k, name in enumerate(LABELS):
        rows.append({"run_id": run_id, "split": report.split, "ablation": ablation, "class": name,
                     "precision": f"{report.precision[k]:.6f}", "recall": f"{report.recall[k]:.6f}",
                     "f1": f"{report.f1[k]:.6f}", "support": int(report.support[k])})
    rows.append({"run_id": run_id, "split": report.split, "ablation": ablation, "class": report.average,
                 "precision": f"{report.macro_precision:.6f}", "recall": f"{report.macro_recall:.6f}",
                 "f1": f"{report.macro_f1:.6f}", "support": int(report.support.sum())})
    return rows


def write_metrics_csv(path: str | Path, rows: list[dict]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    return path


def read_metrics_csv(path: str | Path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))
