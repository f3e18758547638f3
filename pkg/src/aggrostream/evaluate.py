"""Prequential evaluation and metric reporting."""

from __future__ import annotations

import csv
import io
from collections import deque
from dataclasses import dataclass, field


class EmptyMetricsError(ValueError):
    """Metrics requested from a matrix with no instances."""


class ConfusionMatrix:
    """K×K counts, rows = actual class, columns = predicted class."""

    def __init__(self, n_classes: int, counts=None):
        self.n_classes = n_classes
        self.counts = [list(row) for row in counts] if counts is not None else [[0] * n_classes for _ in range(n_classes)]

    def add(self, actual: int, predicted: int, n: int = 1) -> None:
        self.counts[actual][predicted] += n

    def merge(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        for r, orow in zip(self.counts, other.counts):
            for j, v in enumerate(orow):
                r[j] += v
        return self

    @property
    def total(self) -> int:
        return sum(map(sum, self.counts))

    def copy(self) -> "ConfusionMatrix":
        return ConfusionMatrix(self.n_classes, self.counts)

    def __eq__(self, other):
        return isinstance(other, ConfusionMatrix) and self.counts == other.counts

    def __repr__(self):
        return f"ConfusionMatrix({self.counts})"


def f1(precision: float, recall: float) -> float:
    return 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    precision: tuple[float, ...]
    recall: tuple[float, ...]
    f1: tuple[float, ...]
    support: tuple[int, ...]
    weighted_precision: float
    weighted_recall: float
    weighted_f1: float


def metrics(cm: ConfusionMatrix) -> Metrics:
    total = cm.total
    if total == 0:
        raise EmptyMetricsError("metrics of an empty confusion matrix are undefined")
    k = cm.n_classes
    rows = [sum(r) for r in cm.counts]
    cols = [sum(cm.counts[i][j] for i in range(k)) for j in range(k)]
    diag = [cm.counts[i][i] for i in range(k)]
    prec = tuple(diag[c] / cols[c] if cols[c] else 0.0 for c in range(k))
    rec = tuple(diag[c] / rows[c] if rows[c] else 0.0 for c in range(k))
    f = tuple(f1(p, r) for p, r in zip(prec, rec))

    def weighted(vals):
        return sum(rows[c] * vals[c] for c in range(k)) / total

    return Metrics(sum(diag) / total, prec, rec, f, tuple(rows), weighted(prec), weighted(rec), weighted(f))


def report_header(class_names) -> list[str]:
    cols = ["instances_seen", "labeled_seen"]
    for scope in ("cum", "win"):
        cols += [f"{scope}_accuracy", f"{scope}_precision", f"{scope}_recall", f"{scope}_f1"]
    cols += [f"f1_{name}" for name in class_names]
    cols += [f"pred_unlabeled_{name}" for name in class_names]
    cols.append("throughput")
    return cols


@dataclass
class PrequentialEvaluator:
    """Cumulative and windowed test-then-train metrics with periodic history rows."""

    n_classes: int
    class_names: tuple[str, ...] = ()
    window: int = 1000
    sample_every: int = 500
    cm: ConfusionMatrix = field(init=False)
    recent: deque = field(init=False)
    unlabeled_predictions: list = field(init=False)
    instances_seen: int = 0
    history: list = field(default_factory=list)
    throughput: float | None = None

    def __post_init__(self):
        if not self.class_names:
            self.class_names = tuple(f"c{i}" for i in range(self.n_classes))
        self.cm = ConfusionMatrix(self.n_classes)
        self.recent = deque(maxlen=self.window)
        self.unlabeled_predictions = [0] * self.n_classes

    @property
    def labeled_seen(self) -> int:
        return self.cm.total

    def preq_step(self, predicted: int, actual: int) -> None:
        self.cm.add(actual, predicted)
        self.recent.append((predicted, actual))
        self.instances_seen += 1
        if self.labeled_seen % self.sample_every == 0:
            self.history.append(self.row())

    def observe_unlabeled(self, predicted: int) -> None:
        self.unlabeled_predictions[predicted] += 1
        self.instances_seen += 1

    def window_matrix(self) -> ConfusionMatrix:
        cm = ConfusionMatrix(self.n_classes)
        for p, a in self.recent:
            cm.add(a, p)
        return cm

    def cumulative(self) -> Metrics:
        return metrics(self.cm)

    def windowed(self) -> Metrics:
        return metrics(self.window_matrix())

    def row(self) -> dict:
        row = {"instances_seen": self.instances_seen, "labeled_seen": self.labeled_seen}
        names = report_header(self.class_names)
        for col in names[2:]:
            row[col] = None
        if self.labeled_seen:
            for scope, m in (("cum", self.cumulative()), ("win", self.windowed())):
                row[f"{scope}_accuracy"] = m.accuracy
                row[f"{scope}_precision"] = m.weighted_precision
                row[f"{scope}_recall"] = m.weighted_recall
                row[f"{scope}_f1"] = m.weighted_f1
            for name, v in zip(self.class_names, self.cumulative().f1):
                row[f"f1_{name}"] = v
        n_unl = sum(self.unlabeled_predictions)
        for name, c in zip(self.class_names, self.unlabeled_predictions):
            row[f"pred_unlabeled_{name}"] = c / n_unl if n_unl else None
        row["throughput"] = self.throughput
        return row


def emit_report(evaluator: PrequentialEvaluator, fh=None, final_row: bool = False) -> str:
    """Write the history as CSV (to ``fh`` if given) and return the text.

    With no labeled instances the history is empty, so a single row with the
    predicted-label distribution is written instead.
    """
    rows = list(evaluator.history)
    if not rows or (final_row and rows[-1]["instances_seen"] != evaluator.instances_seen):
        rows.append(evaluator.row())
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=report_header(evaluator.class_names), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: ("" if v is None else repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    text = buf.getvalue()
    if fh is not None:
        fh.write(text)
    return text


def read_report(text: str) -> list[dict]:
    """Parse a report back into rows with numeric values (``None`` for empty cells)."""
    out = []
    for row in csv.DictReader(io.StringIO(text)):
        parsed = {}
        for k, v in row.items():
            if v == "":
                parsed[k] = None
            elif k in ("instances_seen", "labeled_seen"):
                parsed[k] = int(v)
            else:
                parsed[k] = float(v)
        out.append(parsed)
    return out
