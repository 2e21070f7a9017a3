"""Multi-class evaluation: confusion matrix, MCC, kappa, macro P/R/F1, one-vs-rest ROC-AUC."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass

import numpy as np

logger = logging.getLogger(__name__)

N_CLASSES = 4
METRICS = ("accuracy", "mcc", "f1_macro", "precision_macro", "recall_macro", "kappa", "roc_auc_macro")


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # rows = true, cols = predicted

    @classmethod
    def from_labels(cls, y_true, y_pred, n_classes: int = N_CLASSES):
        cm = np.zeros((n_classes, n_classes), dtype=np.int64)
        np.add.at(cm, (np.asarray(y_true, dtype=int), np.asarray(y_pred, dtype=int)), 1)
        return cls(cm)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def to_list(self):
        return self.counts.astype(int).tolist()


@dataclass
class MetricsReport:
    accuracy: float
    mcc: float
    f1_macro: float
    precision_macro: float
    recall_macro: float
    kappa: float
    roc_auc_macro: float | None
    n: int

    def to_dict(self) -> dict:
        return asdict(self)


def accuracy(cm) -> float:
    cm = np.asarray(cm, dtype=np.float64)
    return float(np.trace(cm) / cm.sum())


def mcc(cm) -> float:
    """Gorodkin's K-category correlation coefficient; 0 when undefined."""
    cm = np.asarray(cm, dtype=np.float64)
    s = cm.sum()
    c = np.trace(cm)
    t = cm.sum(axis=1)
    p = cm.sum(axis=0)
    den = math.sqrt((s * s - p @ p) * (s * s - t @ t))
    return float((c * s - t @ p) / den) if den > 0 else 0.0


def cohen_kappa(cm) -> float:
    cm = np.asarray(cm, dtype=np.float64)
    s = cm.sum()
    po = np.trace(cm) / s
    pe = (cm.sum(axis=0) @ cm.sum(axis=1)) / (s * s)
    if pe >= 1.0:
        return 1.0 if po >= 1.0 else 0.0
    return float((po - pe) / (1.0 - pe))


def _ratio(num, den):
    return np.divide(num, den, out=np.zeros_like(num, dtype=np.float64), where=den > 0)


def per_class_prf(cm):
    """Per-class precision, recall, F1 with 0/0 taken as 0."""
    cm = np.asarray(cm, dtype=np.float64)
    tp = np.diag(cm)
    precision = _ratio(tp, cm.sum(axis=0))
    recall = _ratio(tp, cm.sum(axis=1))
    f1 = _ratio(2 * precision * recall, precision + recall)
    return precision, recall, f1


def roc_auc_ovr(y_true, probs) -> float | None:
    """Macro one-vs-rest ROC-AUC over the classes that have both positives and negatives.

    ``None`` when fewer than two classes occur in ``y_true``.
    """
    from sklearn.metrics import roc_auc_score

    y_true = np.asarray(y_true)
    probs = np.asarray(probs, dtype=np.float64)
    present = np.unique(y_true)
    if len(present) < 2:
        return None
    aucs = [roc_auc_score(y_true == k, probs[:, k]) for k in present]
    return float(np.mean(aucs))


def evaluate_arrays(y_true, probs):
    y_true = np.asarray(y_true, dtype=int)
    probs = np.asarray(probs, dtype=np.float64)
    if y_true.size == 0:
        raise ValueError("no predictions to evaluate")
    if y_true.min() < 0 or y_true.max() >= N_CLASSES:
        raise ValueError("labels must lie in 0..3")
    y_pred = probs.argmax(axis=1)
    cm = ConfusionMatrix.from_labels(y_true, y_pred)
    precision, recall, f1 = per_class_prf(cm.counts)
    auc = roc_auc_ovr(y_true, probs)
    if auc is None:
        logger.warning("only one class present; ROC-AUC reported as null")
    report = MetricsReport(
        accuracy=accuracy(cm.counts),
        mcc=mcc(cm.counts),
        f1_macro=float(f1.mean()),
        precision_macro=float(precision.mean()),
        recall_macro=float(recall.mean()),
        kappa=cohen_kappa(cm.counts),
        roc_auc_macro=auc,
        n=int(len(y_true)),
    )
    return report, cm


def evaluate(predictions):
    """``predictions`` is a sequence of ``(true_label, ClassProbabilities | vector)`` pairs."""
    predictions = list(predictions)
    if not predictions:
        raise ValueError("no predictions to evaluate")
    y = [int(t) for t, _ in predictions]
    p = np.stack([np.asarray(getattr(cp, "p", cp), dtype=np.float64) for _, cp in predictions])
    return evaluate_arrays(y, p)


def report_json(report: MetricsReport, cm: ConfusionMatrix, **extra) -> str:
    body = {"metrics": report.to_dict(), "confusion_matrix": cm.to_list(), **extra}
    return json.dumps(body, indent=2, sort_keys=True)


# --------------------------------------------------------------------------- comparison


@dataclass
class ComparisonTable:
    target: str
    metrics: tuple
    rows: list  # dicts: name, rank, <metric>, delta_<metric> (points, target minus row)

    def to_text(self) -> str:
        head = ["rank", "model"] + list(self.metrics) + [f"d_{m}" for m in self.metrics]
        body = [[str(r["rank"]), r["name"]] + [_fmt(r[m]) for m in self.metrics]
                + [_fmt(r[f"delta_{m}"], signed=True) for m in self.metrics] for r in self.rows]
        widths = [max(len(x) for x in col) for col in zip(head, *body)]
        lines = ["  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in [head] + body]
        return "\n".join(lines)

    def to_markdown(self) -> str:
        cols = ["Model"] + [m for m in self.metrics] + [f"{self.target} gain ({m}, pts)" for m in self.metrics]
        out = ["| " + " | ".join(cols) + " |", "|" + "---|" * len(cols)]
        for r in self.rows:
            cells = [r["name"]] + [_fmt(r[m]) for m in self.metrics] + \
                    [_fmt(r[f"delta_{m}"], signed=True) for m in self.metrics]
            out.append("| " + " | ".join(cells) + " |")
        return "\n".join(out)


def _fmt(v, signed=False):
    if v is None:
        return "n/a"
    return f"{v:+.2f}" if signed else f"{v:.4f}"


def _get(rep, m):
    return rep.get(m) if isinstance(rep, dict) else getattr(rep, m, None)


def compare_models(reports: dict, target: str | None = None, metrics=METRICS,
                   rank_by: str = "accuracy") -> ComparisonTable:
    """Rank models by ``rank_by`` and give each row the target's gain over it, in points (x100)."""
    names = list(reports)
    if target is None:
        target = max(names, key=lambda n: (_get(reports[n], rank_by), n))
    order = sorted(names, key=lambda n: (-_get(reports[n], rank_by), n))
    rows = []
    for rank, name in enumerate(order, 1):
        row = {"name": name, "rank": rank}
        for m in metrics:
            v, tv = _get(reports[name], m), _get(reports[target], m)
            row[m] = v
            row[f"delta_{m}"] = None if v is None or tv is None else round(100.0 * (tv - v), 10)
        rows.append(row)
    return ComparisonTable(target, tuple(metrics), rows)
