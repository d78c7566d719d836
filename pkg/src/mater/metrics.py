"""Evaluation metrics: Macro-F1 and accuracy (percent) for categories, CCC for attributes."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .labels import ATTRIBUTES, CATEGORIES
from .neural.losses import ccc


class MetricError(ValueError):
    pass


def _pair(preds, golds):
    p = list(preds)
    g = list(golds)
    if len(p) != len(g):
        raise MetricError(f"length mismatch: {len(p)} predictions vs {len(g)} golds")
    if not p:
        raise MetricError("empty input")
    return p, g


def per_class_stats(preds, golds, classes=None) -> dict:
    """``class -> (precision, recall, f1, support)``; undefined ratios count as 0."""
    p, g = _pair(preds, golds)
    if classes is None:
        classes = sorted(set(g) | set(p), key=str)
    out = {}
    for c in classes:
        tp = sum(1 for a, b in zip(p, g) if a == c and b == c)
        n_pred = sum(1 for a in p if a == c)
        support = sum(1 for b in g if b == c)
        prec = tp / n_pred if n_pred else 0.0
        rec = tp / support if support else 0.0
        f1 = 2 * prec * rec / (prec + rec) if prec + rec > 0 else 0.0
        out[c] = (prec, rec, f1, support)
    return out


def macro_f1(preds, golds) -> float:
    """Mean F1 over classes that occur in ``golds``, in percent."""
    p, g = _pair(preds, golds)
    present = sorted(set(g), key=str)
    stats = per_class_stats(p, g, present)
    return 100.0 * sum(stats[c][2] for c in present) / len(present)


def accuracy(preds, golds) -> float:
    p, g = _pair(preds, golds)
    return 100.0 * sum(1 for a, b in zip(p, g) if a == b) / len(p)


@dataclass(frozen=True)
class ClassificationReport:
    per_class: dict
    macro_f1: float
    accuracy: float

    def to_json(self) -> str:
        pc = {
            str(c): {"precision": v[0], "recall": v[1], "f1": v[2], "support": v[3]}
            for c, v in self.per_class.items()
        }
        return json.dumps({"per_class": pc, "macro_f1": self.macro_f1, "accuracy": self.accuracy}, indent=2)


def classification_report(preds, golds, classes=CATEGORIES) -> ClassificationReport:
    p, g = _pair(preds, golds)
    extra = sorted((set(p) | set(g)) - set(classes), key=str)
    stats = per_class_stats(p, g, list(classes) + extra)
    return ClassificationReport(stats, macro_f1(p, g), accuracy(p, g))


def ccc_eval(preds, golds) -> dict:
    """Per-attribute CCC plus their arithmetic mean."""
    P = np.asarray(preds, dtype=np.float64)
    G = np.asarray(golds, dtype=np.float64)
    if P.shape != G.shape or P.ndim != 2 or P.shape[1] != len(ATTRIBUTES):
        raise MetricError(f"expected two m x 3 matrices, got {P.shape} and {G.shape}")
    if P.shape[0] < 2:
        raise MetricError("ccc needs at least two samples")
    out = {a: ccc(P[:, i], G[:, i]) for i, a in enumerate(ATTRIBUTES)}
    out["mean"] = float(np.mean([out[a] for a in ATTRIBUTES]))
    return out
