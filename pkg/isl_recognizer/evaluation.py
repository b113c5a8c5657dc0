import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from sklearn.metrics import confusion_matrix, precision_recall_fscore_support
from sklearn.model_selection import train_test_split

from .errors import EvaluationError
from .gesture_hmm import WRONG_GESTURE, GestureBank, classify_gesture
from .grid_features import GridSpec, extract_features
from .imaging import Blob
from .knn_classifier import KnnModel, LabeledSample, classify_many, fit

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class EvaluationReport:
    labels: List[str]
    counts: np.ndarray
    precision: np.ndarray
    recall: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def correct(self) -> int:
        return int(np.trace(self.counts))

    @property
    def accuracy(self) -> float:
        """Correctly classified samples over all samples."""
        return self.correct / self.total if self.total else 0.0

    @property
    def support(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def row_percent(self) -> np.ndarray:
        rows = self.support[:, None].astype(np.float64)
        return np.divide(100.0 * self.counts, rows, out=np.zeros(self.counts.shape), where=rows > 0)

    def confusion_frame(self, percent: bool = False) -> pd.DataFrame:
        values = self.row_percent() if percent else self.counts
        return pd.DataFrame(values, index=pd.Index(self.labels, name="true"), columns=self.labels)

    def per_class_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "label": self.labels,
            "support": self.support,
            "precision": self.precision,
            "recall": self.recall,
        })

    def to_csv(self, path) -> None:
        """Confusion counts to `path`; per-class metrics to `<stem>_classes.csv` beside it."""
        path = Path(path)
        self.confusion_frame().to_csv(path, encoding="utf-8")
        self.per_class_frame().to_csv(path.with_name(f"{path.stem}_classes.csv"), index=False,
                                      encoding="utf-8", float_format="%.6f")
        logger.info(f"Wrote evaluation report to {path}")

    def format_table(self) -> str:
        lines = [self.confusion_frame(percent=True).round(1).to_string(), "",
                 self.per_class_frame().to_string(index=False, float_format=lambda v: f"{v:.3f}"), "",
                 f"accuracy: {self.accuracy:.3f} ({self.correct}/{self.total})"]
        return "\n".join(lines)


def build_report(y_true: Sequence[str], y_pred: Sequence[str],
                 labels: Optional[Sequence[str]] = None) -> EvaluationReport:
    if len(y_true) == 0:
        raise EvaluationError("cannot evaluate an empty test set")
    if labels is None:
        labels = sorted(set(y_true) | set(y_pred))
    labels = list(labels)
    counts = confusion_matrix(y_true, y_pred, labels=labels)
    precision, recall, _, _ = precision_recall_fscore_support(
        y_true, y_pred, labels=labels, zero_division=0)
    return EvaluationReport(labels, counts, precision, recall)


def split_indices(labels: Sequence[str], test_fraction: float = 0.3,
                  seed: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """Seeded shuffle split, stratified when every class has at least two members."""
    indices = np.arange(len(labels))
    _, class_counts = np.unique(np.asarray(labels), return_counts=True)
    stratify = labels if len(class_counts) and class_counts.min() >= 2 else None
    try:
        train, test = train_test_split(indices, test_size=test_fraction, random_state=seed,
                                       shuffle=True, stratify=stratify)
    except ValueError:
        train, test = train_test_split(indices, test_size=test_fraction, random_state=seed, shuffle=True)
    return np.sort(train), np.sort(test)


def split_dataset(samples: Sequence[LabeledSample], test_fraction: float = 0.3,
                  seed: int = 0) -> Tuple[List[LabeledSample], List[LabeledSample]]:
    train, test = split_indices([s.label for s in samples], test_fraction, seed)
    return [samples[i] for i in train], [samples[i] for i in test]


def evaluate_poses(model: KnnModel, test: Sequence[LabeledSample]) -> EvaluationReport:
    if not test:
        raise EvaluationError("cannot evaluate an empty test set")
    results = classify_many(model, [s.features for s in test])
    y_true = [s.label for s in test]
    y_pred = [r.label for r in results]
    labels = sorted(set(model.labels) | set(y_true))
    report = build_report(y_true, y_pred, labels)
    logger.info(f"Pose evaluation: accuracy {report.accuracy:.4f} on {report.total} samples")
    return report


def evaluate_gestures(bank: GestureBank, takes: Sequence[Tuple[str, Sequence[int]]]) -> EvaluationReport:
    """`takes` holds (true label, observation sequence); impostors carry the WRONG label."""
    if not takes:
        raise EvaluationError("cannot evaluate an empty test set")
    y_true, y_pred = [], []
    for label, obs in takes:
        y_true.append(label)
        y_pred.append(classify_gesture(bank, obs).label)
    labels = bank.names + [WRONG_GESTURE]
    extra = sorted(set(y_true) - set(labels))
    report = build_report(y_true, y_pred, labels + extra)
    logger.info(f"Gesture evaluation: accuracy {report.accuracy:.4f} on {report.total} takes")
    return report


def sweep_grids(hands: Sequence[Tuple[str, Blob]], grids: Sequence[GridSpec], k: int = 5,
                backend: str = "kd_tree", test_fraction: float = 0.3, seed: int = 0) -> pd.DataFrame:
    """Accuracy per grid size over one fixed train/test split of the extracted hands."""
    if not hands:
        raise EvaluationError("cannot sweep grids without samples")
    train_idx, test_idx = split_indices([label for label, _ in hands], test_fraction, seed)
    rows = []
    for grid in grids:
        samples = [LabeledSample(label, extract_features(hand, grid)) for label, hand in hands]
        model = fit([samples[i] for i in train_idx], k=k, backend=backend)
        report = evaluate_poses(model, [samples[i] for i in test_idx])
        rows.append({"grid": str(grid), "accuracy": round(report.accuracy, 3)})
        logger.info(f"Grid {grid}: accuracy {report.accuracy:.3f}")
    return pd.DataFrame(rows, columns=["grid", "accuracy"])
