"""Test metrics and complement-distribution statistics of a trained model."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .datasets import Dataset
from .models import ModelState, forward
from .numerics import DimensionError, argmax_rows, softmax
from .objectives import _complement_terms


@dataclass
class EvalReport:
    num_samples: int
    num_classes: int
    error_rate: float
    mean_true_confidence: float
    mean_normalized_complement_entropy: float
    mean_max_complement_prob: float
    confusion: list[list[int]]

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, extra: dict | None = None) -> str:
        payload = self.to_dict()
        if extra:
            payload = {**extra, **payload}
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"

    def write_json(self, path, extra: dict | None = None) -> None:
        Path(path).write_text(self.to_json(extra))

    def write_csv(self, path, header_comment: str | None = None) -> None:
        scalars = {k: v for k, v in self.to_dict().items() if k != "confusion"}
        with open(path, "w", newline="") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["metric", "value"])
            for k, v in scalars.items():
                w.writerow([k, repr(v)])
            for i, row in enumerate(self.confusion):
                for j, c in enumerate(row):
                    w.writerow([f"confusion[{i}][{j}]", c])


def report_from_probs(probs: np.ndarray, labels: np.ndarray) -> EvalReport:
    """Build an :class:`EvalReport` from predicted probabilities.

    Predictions use argmax with ties going to the lowest class index.
    """
    n, k = probs.shape
    labels = np.asarray(labels, dtype=np.int64)
    confusion = np.zeros((k, k), dtype=np.int64)
    if n == 0:
        return EvalReport(0, k, 0.0, 0.0, 0.0, 0.0, confusion.tolist())
    pred = argmax_rows(probs)
    np.add.at(confusion, (labels, pred), 1)
    rows = np.arange(n)
    comp = probs.copy()
    comp[rows, labels] = -np.inf
    h = _complement_terms(probs, labels)
    return EvalReport(
        num_samples=n,
        num_classes=k,
        error_rate=float(1.0 - np.trace(confusion) / n),
        mean_true_confidence=float(np.mean(probs[rows, labels])),
        mean_normalized_complement_entropy=float(np.mean(h) / (k - 1)),
        mean_max_complement_prob=float(np.mean(comp.max(axis=1))),
        confusion=confusion.tolist(),
    )


def evaluate(model: ModelState, dataset: Dataset) -> EvalReport:
    if dataset.dim != model.arch.input_dim or dataset.num_classes != model.arch.num_classes:
        raise DimensionError(
            f"dataset (D={dataset.dim}, K={dataset.num_classes}) does not match model "
            f"(D={model.arch.input_dim}, K={model.arch.num_classes})"
        )
    k = model.arch.num_classes
    if len(dataset) == 0:
        return report_from_probs(np.zeros((0, k)), dataset.labels)
    return report_from_probs(softmax(forward(model, dataset.features).logits), dataset.labels)


def export_embeddings(model: ModelState, dataset: Dataset, path) -> None:
    """Write pre-softmax logits plus label as CSV, 17 significant digits."""
    k = model.arch.num_classes
    logits = forward(model, dataset.features).logits if len(dataset) else np.zeros((0, k))
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"logit{j}" for j in range(k)] + ["label"])
            for row, label in zip(logits, dataset.labels):
                w.writerow([f"{v:.17g}" for v in row] + [int(label)])
    except OSError as exc:
        raise OSError(f"cannot write embeddings to {path}: {exc}") from exc


def load_embeddings(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    k = len(header) - 1
    if not body:
        return np.zeros((0, k)), np.zeros(0, dtype=np.int64)
    arr = np.array([[float(v) for v in r[:k]] for r in body])
    labels = np.array([int(r[k]) for r in body], dtype=np.int64)
    return arr, labels
