"""ROC/AUC scoring of probability maps against ternary ground truth."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .world import CellState, GridMap


@dataclass(eq=False)
class LabeledPairs:
    probs: np.ndarray
    labels: np.ndarray  # 1 occupied, 0 free

    @property
    def count(self) -> int:
        return int(self.labels.shape[0])


@dataclass(eq=False)
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))


@dataclass(frozen=True)
class AucRow:
    name: str
    auc: float
    cells: int


def make_pairs(prob_grid, truth: GridMap) -> LabeledPairs:
    """One (probability, label) pair per occupied or free truth cell."""
    prob_grid = np.asarray(prob_grid, dtype=float)
    if prob_grid.shape != truth.cells.shape:
        raise ValueError(f"probability grid {prob_grid.shape} does not match truth {truth.cells.shape}")
    known = truth.cells != CellState.UNKNOWN
    labels = (truth.cells[known] == CellState.OCCUPIED).astype(np.int8)
    return LabeledPairs(probs=prob_grid[known], labels=labels)


def roc_auc(pairs: LabeledPairs) -> tuple[RocCurve, float]:
    """ROC curve over the distinct probabilities and its trapezoidal area.

    A cell is predicted occupied when ``prob >= threshold``.  Tied
    probabilities enter the curve together, which gives ties half credit.
    """
    probs = np.asarray(pairs.probs, dtype=float)
    labels = np.asarray(pairs.labels).astype(bool)
    if probs.shape != labels.shape:
        raise ValueError("probs and labels must have equal lengths")
    n_pos = int(labels.sum())
    n_neg = labels.shape[0] - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC needs both occupied and free cells")

    order = np.argsort(-probs, kind="mergesort")
    p_sorted = probs[order]
    l_sorted = labels[order]
    # last index of each run of equal probabilities
    ends = np.flatnonzero(np.r_[p_sorted[1:] != p_sorted[:-1], True])
    tp = np.cumsum(l_sorted)[ends]
    fp = (ends + 1) - tp

    tpr = np.r_[0.0, tp / n_pos, 1.0]
    fpr = np.r_[0.0, fp / n_neg, 1.0]
    thresholds = np.r_[np.inf, p_sorted[ends], -np.inf]
    auc = float(np.sum((fpr[1:] - fpr[:-1]) * (tpr[1:] + tpr[:-1]) / 2.0))
    return RocCurve(fpr=fpr, tpr=tpr, thresholds=thresholds), auc


def auc_report(maps: dict, truth: GridMap) -> list[AucRow]:
    rows = []
    for name in sorted(maps):
        pairs = make_pairs(maps[name], truth)
        _, auc = roc_auc(pairs)
        rows.append(AucRow(name=name, auc=auc, cells=pairs.count))
    return rows


def write_auc_csv(rows: list[AucRow], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["name", "auc", "cells"])
        for row in rows:
            writer.writerow([row.name, f"{row.auc:.6f}", row.cells])


def read_auc_csv(path) -> list[AucRow]:
    with open(path, newline="") as fh:
        return [AucRow(r["name"], float(r["auc"]), int(r["cells"])) for r in csv.DictReader(fh)]


def write_roc_csv(curves: dict, path) -> None:
    """Long-format ROC points: name, threshold, fpr, tpr."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["name", "threshold", "fpr", "tpr"])
        for name in sorted(curves):
            curve = curves[name]
            for th, f, t in zip(curve.thresholds, curve.fpr, curve.tpr):
                writer.writerow([name, f"{th:.6f}", f"{f:.6f}", f"{t:.6f}"])


def unknown_bias(prob_grid, truth: GridMap) -> float:
    """Absolute deviation from 0.5 of the mean probability over truth-unknown cells."""
    prob_grid = np.asarray(prob_grid, dtype=float)
    unknown = truth.cells == CellState.UNKNOWN
    if not unknown.any():
        raise ValueError("truth map has no unknown cells")
    return float(abs(prob_grid[unknown].mean() - 0.5))

