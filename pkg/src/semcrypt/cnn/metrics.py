"""Classification metrics: accuracy, per-class precision/recall, macro F1, one-vs-rest AUC."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from semcrypt.errors import EmptyInput, SingleClassDataset


def auc_mann_whitney(scores: np.ndarray, positive: np.ndarray) -> float:
    """ROC AUC as the Mann-Whitney U statistic; tied scores share their mid-rank."""
    scores = np.asarray(scores, dtype=np.float64)
    positive = np.asarray(positive, dtype=bool)
    n_pos = int(positive.sum())
    n_neg = positive.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClassDataset("AUC needs both positive and negative examples")
    ranks = rankdata(scores, method="average")
    u = ranks[positive].sum() - n_pos * (n_pos + 1) / 2
    return float(u / (n_pos * n_neg))


@dataclass(frozen=True)
class EvalReport:
    accuracy: float
    macro_f1: float
    precision: tuple[float, ...]
    recall: tuple[float, ...]
    auc: tuple[float | None, ...]  # None for a class absent from the labels
    macro_auc: float
    confusion: tuple[tuple[int, ...], ...]  # rows = true class, columns = predicted

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "precision": list(self.precision),
            "recall": list(self.recall),
            "auc": list(self.auc),
            "macro_auc": self.macro_auc,
            "confusion": [list(r) for r in self.confusion],
        }


def evaluate_scores(probs: np.ndarray, labels: np.ndarray) -> EvalReport:
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise EmptyInput("cannot evaluate an empty dataset")
    if np.unique(labels).size < 2:
        raise SingleClassDataset("dataset holds a single class")
    k = probs.shape[1]
    pred = probs.argmax(axis=1)
    confusion = np.zeros((k, k), dtype=np.int64)
    np.add.at(confusion, (labels, pred), 1)
    tp = np.diag(confusion).astype(np.float64)
    predicted = confusion.sum(axis=0)
    actual = confusion.sum(axis=1)
    precision = np.divide(tp, predicted, out=np.zeros(k), where=predicted > 0)
    recall = np.divide(tp, actual, out=np.zeros(k), where=actual > 0)
    denom = precision + recall
    f1 = np.divide(2 * precision * recall, denom, out=np.zeros(k), where=denom > 0)
    present = actual > 0
    aucs: list[float | None] = []
    for c in range(k):
        aucs.append(auc_mann_whitney(probs[:, c], labels == c) if present[c] else None)
    valid = [a for a in aucs if a is not None]
    return EvalReport(
        accuracy=float(tp.sum() / labels.size),
        macro_f1=float(f1[present].mean()),
        precision=tuple(float(v) for v in precision),
        recall=tuple(float(v) for v in recall),
        auc=tuple(aucs),
        macro_auc=float(np.mean(valid)),
        confusion=tuple(tuple(int(v) for v in row) for row in confusion),
    )


def evaluate(model, images: np.ndarray, labels: np.ndarray) -> EvalReport:
    if len(labels) == 0:
        raise EmptyInput("cannot evaluate an empty dataset")
    return evaluate_scores(model.predict_proba(images), labels)


def format_table(reports: dict[str, EvalReport]) -> str:
    """Plain-text comparison table, one row per domain."""
    lines = [f"{'Domain':<16}{'AUC':>8}{'F1':>8}{'Acc':>8}"]
    for name, r in reports.items():
        lines.append(f"{name:<16}{r.macro_auc:>8.3f}{r.macro_f1:>8.3f}{r.accuracy:>8.3f}")
    return "\n".join(lines) + "\n"
