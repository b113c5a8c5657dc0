import logging
from dataclasses import dataclass
from typing import Iterable, Tuple

import numpy as np
import pandas as pd

from .errors import FeatureGridMismatch
from .imaging import Blob

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GridSpec:
    rows: int
    cols: int

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError(f"grid must be at least 1x1, got {self.rows}x{self.cols}")

    @property
    def size(self) -> int:
        return self.rows * self.cols

    @classmethod
    def parse(cls, text: str) -> "GridSpec":
        try:
            rows, cols = (int(part) for part in text.lower().split("x"))
        except ValueError:
            raise ValueError(f"grid must look like MxN, got {text!r}") from None
        return cls(rows, cols)

    def __str__(self):
        return f"{self.rows}x{self.cols}"


@dataclass(frozen=True, eq=False)
class FeatureVector:
    values: np.ndarray
    grid: GridSpec

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != (self.grid.size,):
            raise FeatureGridMismatch(f"expected {self.grid.size} values for grid {self.grid}, got {values.shape}")
        values = np.ascontiguousarray(values)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self):
        return self.grid.size


def grid_edges(length: int, parts: int) -> np.ndarray:
    """Floor partition: block i spans [edges[i], edges[i+1])."""
    return (np.arange(parts + 1) * length) // parts


def block_pixel_counts(hand: Blob, grid: GridSpec) -> np.ndarray:
    row_edges = grid_edges(hand.height, grid.rows)
    col_edges = grid_edges(hand.width, grid.cols)
    return np.outer(np.diff(row_edges), np.diff(col_edges)).ravel()


def _hand_pixel_counts(hand: Blob, grid: GridSpec) -> Tuple[np.ndarray, np.ndarray]:
    # integral image: block sums by four lookups
    integral = np.zeros((hand.height + 1, hand.width + 1), dtype=np.int64)
    integral[1:, 1:] = np.cumsum(np.cumsum(hand.mask, axis=0, dtype=np.int64), axis=1)
    r = grid_edges(hand.height, grid.rows)
    c = grid_edges(hand.width, grid.cols)
    counts = (
        integral[np.ix_(r[1:], c[1:])] - integral[np.ix_(r[:-1], c[1:])]
        - integral[np.ix_(r[1:], c[:-1])] + integral[np.ix_(r[:-1], c[:-1])]
    )
    return counts.ravel(), block_pixel_counts(hand, grid)


def extract_features(hand: Blob, grid: GridSpec) -> FeatureVector:
    """Fraction of each bounding-box grid block covered by the hand."""
    if hand.area < 1:
        raise ValueError("cannot extract features from an empty hand")
    counts, sizes = _hand_pixel_counts(hand, grid)
    values = np.zeros(grid.size, dtype=np.float64)
    nonempty = sizes > 0
    values[nonempty] = counts[nonempty] / sizes[nonempty]
    return FeatureVector(values, grid)


def feature_distance(a: FeatureVector, b: FeatureVector) -> float:
    if a.grid != b.grid:
        raise FeatureGridMismatch(f"cannot compare grid {a.grid} with grid {b.grid}")
    return float(np.linalg.norm(a.values - b.values))


def features_frame(samples: Iterable[Tuple[str, FeatureVector]]) -> pd.DataFrame:
    """`label, f0 .. f{MN-1}` table, one row per sample."""
    samples = list(samples)
    if not samples:
        return pd.DataFrame(columns=["label"])
    size = len(samples[0][1])
    matrix = np.vstack([features.values for _, features in samples])
    frame = pd.DataFrame(matrix, columns=[f"f{i}" for i in range(size)])
    frame.insert(0, "label", [label for label, _ in samples])
    return frame


def export_features_csv(samples: Iterable[Tuple[str, FeatureVector]], path) -> int:
    frame = features_frame(samples)
    frame.to_csv(path, index=False, float_format="%.9g")
    logger.info(f"Exported {len(frame)} feature rows to {path}")
    return len(frame)
