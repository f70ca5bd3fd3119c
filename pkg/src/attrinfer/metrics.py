"""Argmax prediction and evaluation metrics over test cells."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError


def predict_labels(x_hat: np.ndarray, schema) -> np.ndarray:
    """1-based argmax within each attribute block; ties go to the lowest label."""
    out = np.empty((x_hat.shape[0], schema.n_types), dtype=np.int64)
    for j, (start, end) in enumerate(schema.blocks):
        out[:, j] = np.argmax(x_hat[:, start:end], axis=1) + 1
    return out


def accuracy_cell(predictions, truth, mask) -> float:
    n = int(mask.sum())
    if n == 0:
        raise ConfigurationError("evaluation mask selects no cells")
    return float((predictions[mask] == truth[mask]).sum() / n)


@dataclass
class LabelCounts:
    """Per-label confusion counts, keyed by (attribute index, 1-based label)."""

    tp: dict = field(default_factory=dict)
    tn: dict = field(default_factory=dict)
    fp: dict = field(default_factory=dict)
    fn: dict = field(default_factory=dict)

    def totals(self) -> tuple:
        return tuple(sum(d.values()) for d in (self.tp, self.tn, self.fp, self.fn))


def label_counts(predictions, truth, mask, schema) -> LabelCounts:
    counts = LabelCounts()
    for j, k in enumerate(schema.label_counts):
        rows = np.flatnonzero(mask[:, j])
        t = truth[rows, j]
        p = predictions[rows, j]
        for label in range(1, k + 1):
            key = (j, label)
            counts.tp[key] = int(((p == label) & (t == label)).sum())
            counts.fp[key] = int(((p == label) & (t != label)).sum())
            counts.fn[key] = int(((p != label) & (t == label)).sum())
            counts.tn[key] = int(((p != label) & (t != label)).sum())
    return counts


def accuracy(predictions, truth, mask, schema):
    """Return ``(accuracy_cell, accuracy_label_level, counts)``.

    The label-level figure is (TP + TN) / (TP + TN + FP + FN) summed over all
    labels of every tested attribute block.
    """
    acc = accuracy_cell(predictions, truth, mask)
    counts = label_counts(predictions, truth, mask, schema)
    tp, tn, fp, fn = counts.totals()
    return acc, (tp + tn) / (tp + tn + fp + fn), counts


def macro_f1(counts: LabelCounts) -> float:
    """Mean F1 over labels that occur in the evaluated cells (TP + FN > 0)."""
    scores = []
    for key in sorted(counts.tp):
        tp, fp, fn = counts.tp[key], counts.fp[key], counts.fn[key]
        if tp + fn == 0:
            continue
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn)
        scores.append(2 * prec * rec / (prec + rec) if prec + rec else 0.0)
    if not scores:
        raise ConfigurationError("no label occurs in the evaluated cells")
    return float(np.mean(scores))


def per_attribute_accuracy(predictions, truth, mask, schema) -> dict:
    out = {}
    for j, name in enumerate(schema.names):
        m = mask[:, j]
        if m.any():
            out[name] = float((predictions[m, j] == truth[m, j]).mean())
    return out


@dataclass
class MetricsReport:
    accuracy_cell: float
    accuracy_eq15: float
    macro_f1: float
    per_attribute_accuracy: dict
    n_cells: int
    counts: LabelCounts

    def as_dict(self, schema) -> dict:
        labels = []
        for (j, label) in sorted(self.counts.tp):
            tp, fp, fn, tn = (self.counts.tp[(j, label)], self.counts.fp[(j, label)],
                              self.counts.fn[(j, label)], self.counts.tn[(j, label)])
            labels.append({
                "attribute": schema.names[j],
                "label": label,
                "tp": tp, "tn": tn, "fp": fp, "fn": fn,
                "precision": tp / (tp + fp) if tp + fp else 0.0,
                "recall": tp / (tp + fn) if tp + fn else 0.0,
            })
        return {
            "accuracy_cell": self.accuracy_cell,
            "accuracy_eq15": self.accuracy_eq15,
            "macro_f1": self.macro_f1,
            "per_attribute_accuracy": self.per_attribute_accuracy,
            "n_cells": self.n_cells,
            "labels": labels,
        }


def evaluate(x_hat, truth, mask, schema) -> MetricsReport:
    pred = predict_labels(x_hat, schema)
    acc, acc15, counts = accuracy(pred, truth, mask, schema)
    return MetricsReport(acc, acc15, macro_f1(counts), per_attribute_accuracy(pred, truth, mask, schema),
                         int(mask.sum()), counts)
