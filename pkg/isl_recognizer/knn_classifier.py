"""
k-nearest-neighbour pose classification over grid feature vectors.

Two backends answer every query identically: an exhaustive scan and a
median-split k-d tree with leaf buckets. Both rank neighbours by
(squared distance, insertion index) and compute distances with the same
numpy expression, so the k-d tree only changes which rows are visited.
"""
import heapq
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np

from .errors import FeatureGridMismatch, KnnError
from .grid_features import FeatureVector, GridSpec

logger = logging.getLogger(__name__)

Backend = Literal["brute", "kd_tree"]
BACKENDS = ("brute", "kd_tree")
DEFAULT_K = 5
LEAF_SIZE = 16


@dataclass(frozen=True)
class LabeledSample:
    label: str
    features: FeatureVector


@dataclass(frozen=True)
class KnnResult:
    label: str
    votes: int
    mean_distance: float
    neighbors: Tuple[int, ...] = ()


def _squared_distances(rows: np.ndarray, q: np.ndarray) -> np.ndarray:
    diff = rows - q
    return (diff * diff).sum(axis=1)


# ===== k-d tree =====

@dataclass
class _Node:
    indices: Optional[np.ndarray] = None  # set on leaves only
    axis: int = -1
    split: float = 0.0
    left: Optional["_Node"] = None
    right: Optional["_Node"] = None


class KdTree:
    """Median split on the axis of largest spread; leaves hold up to `leaf_size` rows."""

    def __init__(self, data: np.ndarray, leaf_size: int = LEAF_SIZE):
        if leaf_size < 1:
            raise KnnError("leaf_size must be >= 1")
        self.data = data
        self.leaf_size = leaf_size
        self.root = self._build(np.arange(len(data)))

    def _build(self, indices: np.ndarray) -> _Node:
        if len(indices) <= self.leaf_size:
            return _Node(indices=indices)
        points = self.data[indices]
        spread = points.max(axis=0) - points.min(axis=0)
        axis = int(np.argmax(spread))
        if spread[axis] == 0:
            # every remaining row is identical
            return _Node(indices=indices)
        order = indices[np.argsort(points[:, axis], kind="stable")]
        mid = len(order) // 2
        # left rows satisfy x <= split, right rows x >= split
        split = float(self.data[order[mid], axis])
        return _Node(axis=axis, split=split, left=self._build(order[:mid]), right=self._build(order[mid:]))

    def query(self, q: np.ndarray, k: int) -> List[Tuple[float, int]]:
        """k best (squared distance, index) pairs, ascending."""
        heap: List[Tuple[float, int]] = []  # entries are (-dist, -index); heap[0] is the worst kept
        self._search(self.root, q, k, heap)
        return sorted((-d, -i) for d, i in heap)

    def _search(self, node: _Node, q: np.ndarray, k: int, heap) -> None:
        if node.indices is not None:
            dists = _squared_distances(self.data[node.indices], q)
            for dist, idx in zip(dists.tolist(), node.indices.tolist()):
                if len(heap) < k:
                    heapq.heappush(heap, (-dist, -idx))
                else:
                    worst_d, worst_i = -heap[0][0], -heap[0][1]
                    if dist < worst_d or (dist == worst_d and idx < worst_i):
                        heapq.heapreplace(heap, (-dist, -idx))
            return

        diff = float(q[node.axis]) - node.split
        near, far = (node.left, node.right) if diff < 0 else (node.right, node.left)
        self._search(near, q, k, heap)
        # prune only when the splitting plane is strictly beyond the worst kept neighbour
        if len(heap) < k or diff * diff <= -heap[0][0]:
            self._search(far, q, k, heap)


# ===== Model =====

@dataclass(frozen=True, eq=False)
class KnnModel:
    k: int
    grid: GridSpec
    backend: str
    sample_labels: Tuple[str, ...]
    matrix: np.ndarray
    tree: Optional[KdTree] = field(default=None, repr=False)

    @property
    def labels(self) -> List[str]:
        """Distinct class labels, sorted."""
        return sorted(set(self.sample_labels))

    @property
    def samples(self) -> List[LabeledSample]:
        return [LabeledSample(label, FeatureVector(row, self.grid))
                for label, row in zip(self.sample_labels, self.matrix)]

    def __len__(self):
        return len(self.sample_labels)


def fit(samples: Sequence[LabeledSample], k: int = DEFAULT_K, backend: str = "kd_tree",
        leaf_size: int = LEAF_SIZE) -> KnnModel:
    samples = list(samples)
    if not samples:
        raise KnnError("cannot fit a k-NN model without samples")
    if backend not in BACKENDS:
        raise KnnError(f"unknown k-NN backend: {backend!r}")
    if k < 1:
        raise KnnError(f"k must be >= 1, got {k}")
    if k > len(samples):
        raise KnnError(f"k={k} exceeds the {len(samples)} available samples")

    grid = samples[0].features.grid
    for i, sample in enumerate(samples):
        if sample.features.grid != grid:
            raise FeatureGridMismatch(f"sample {i} has grid {sample.features.grid}, expected {grid}")

    matrix = np.vstack([s.features.values for s in samples]).astype(np.float64)
    matrix.setflags(write=False)
    tree = KdTree(matrix, leaf_size) if backend == "kd_tree" else None
    logger.info(f"Fitted k-NN model: {len(samples)} samples, k={k}, grid={grid}, backend={backend}")
    return KnnModel(k=k, grid=grid, backend=backend,
                    sample_labels=tuple(s.label for s in samples), matrix=matrix, tree=tree)


def nearest(model: KnnModel, q: FeatureVector) -> List[Tuple[float, int]]:
    """The model's k nearest samples to `q` as (squared distance, index), ascending."""
    if q.grid != model.grid:
        raise FeatureGridMismatch(f"query grid {q.grid} does not match model grid {model.grid}")
    query = np.asarray(q.values, dtype=np.float64)
    if model.tree is not None:
        return model.tree.query(query, model.k)

    dists = _squared_distances(model.matrix, query)
    order = np.lexsort((np.arange(len(dists)), dists))[:model.k]
    return [(float(dists[i]), int(i)) for i in order]


def _vote(model: KnnModel, neighbours: List[Tuple[float, int]]) -> KnnResult:
    votes = defaultdict(int)
    distance_sums = defaultdict(float)
    for sq_dist, idx in neighbours:
        label = model.sample_labels[idx]
        votes[label] += 1
        distance_sums[label] += float(np.sqrt(sq_dist))

    def rank(label):
        return (-votes[label], distance_sums[label] / votes[label], label)

    winner = min(votes, key=rank)
    return KnnResult(
        label=winner,
        votes=votes[winner],
        mean_distance=distance_sums[winner] / votes[winner],
        neighbors=tuple(idx for _, idx in neighbours),
    )


def classify(model: KnnModel, q: FeatureVector) -> KnnResult:
    """Majority label among the k nearest; vote ties go to the closer class, then the smaller label."""
    return _vote(model, nearest(model, q))


def classify_many(model: KnnModel, queries: Sequence[FeatureVector]) -> List[KnnResult]:
    return [classify(model, q) for q in queries]
