"""
Text model files.

    pose.knn / intermediate.knn   KNN v1 k=<k> grid=<M>x<N> backend=<b> [samples=<n>]
                                  <label> <f0> ... <f{MN-1}>
    gestures.hmm                  HMMBANK v1 S=<S> poses=<p0,p1,...> reject=<t>
                                  then per chain: name, n, pi, n rows of A, n rows of B
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, List, Optional, Tuple

import numpy as np

from .errors import HmmError, KnnError, ModelFormatError, ModelVersionError
from .gesture_hmm import GestureBank, HmmChain, SymbolTable
from .grid_features import FeatureVector, GridSpec
from .knn_classifier import BACKENDS, KnnModel, LabeledSample, fit

logger = logging.getLogger(__name__)

KNN_MAGIC = "KNN"
BANK_MAGIC = "HMMBANK"
FORMAT_VERSION = "v1"

POSE_MODEL_FILE = "pose.knn"
INTERMEDIATE_MODEL_FILE = "intermediate.knn"
BANK_FILE = "gestures.hmm"


@dataclass(frozen=True)
class ModelSet:
    """The models one pipeline runs with; any of them may be missing."""

    pose_model: Optional[KnnModel] = None
    intermediate_model: Optional[KnnModel] = None
    bank: Optional[GestureBank] = None


class _Lines:
    """Non-blank lines with their 1-based numbers."""

    def __init__(self, path: Path):
        self.path = path
        text = path.read_text(encoding="utf-8").splitlines()
        self._lines: List[Tuple[int, str]] = [(no, line.rstrip()) for no, line in enumerate(text, start=1)
                                              if line.strip()]
        self._pos = 0
        self.last_line_no = len(text)

    def __bool__(self):
        return self._pos < len(self._lines)

    def next(self) -> Tuple[int, str]:
        if self._pos >= len(self._lines):
            raise ModelFormatError(self.path, self.last_line_no + 1, "unexpected end of file")
        item = self._lines[self._pos]
        self._pos += 1
        return item

    def __iter__(self) -> Iterator[Tuple[int, str]]:
        while self:
            yield self.next()


def _header_fields(path: Path, line_no: int, line: str, magic: str) -> dict:
    parts = line.split()
    if not parts or parts[0] != magic:
        raise ModelFormatError(path, line_no, f"not a {magic} file")
    if len(parts) < 2 or parts[1] != FORMAT_VERSION:
        version = parts[1] if len(parts) > 1 else "<missing>"
        raise ModelVersionError(f"{path}: unsupported {magic} version {version}, expected {FORMAT_VERSION}")
    fields = {}
    for part in parts[2:]:
        key, sep, value = part.partition("=")
        if not sep:
            raise ModelFormatError(path, line_no, f"malformed header field {part!r}")
        fields[key] = value
    return fields


def _floats(path: Path, line_no: int, tokens: List[str], expected: int) -> np.ndarray:
    if len(tokens) != expected:
        raise ModelFormatError(path, line_no, f"expected {expected} values, got {len(tokens)}")
    try:
        return np.array([float(t) for t in tokens], dtype=np.float64)
    except ValueError as e:
        raise ModelFormatError(path, line_no, f"bad number: {e}") from e


# ===== k-NN =====

def save_knn(model: KnnModel, path) -> None:
    path = Path(path)
    lines = [f"{KNN_MAGIC} {FORMAT_VERSION} k={model.k} grid={model.grid} backend={model.backend} "
             f"samples={len(model)}"]
    for label, row in zip(model.sample_labels, model.matrix):
        if not label or any(ch.isspace() for ch in label):
            raise KnnError(f"label {label!r} cannot be stored: labels must be non-empty without whitespace")
        lines.append(label + " " + " ".join(f"{v:.9g}" for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.info(f"Saved k-NN model ({len(model)} samples) to {path}")


def load_knn(path) -> KnnModel:
    path = Path(path)
    lines = _Lines(path)
    if not lines:
        raise ModelFormatError(path, 1, "empty model file")
    header_no, header = lines.next()
    fields = _header_fields(path, header_no, header, KNN_MAGIC)
    try:
        k = int(fields["k"])
        grid = GridSpec.parse(fields["grid"])
        backend = fields.get("backend", "kd_tree")
        expected = int(fields["samples"]) if "samples" in fields else None
    except (KeyError, ValueError) as e:
        raise ModelFormatError(path, header_no, f"bad header: {e}") from e
    if backend not in BACKENDS:
        raise ModelFormatError(path, header_no, f"unknown backend {backend!r}")

    samples = []
    for line_no, line in lines:
        label, *tokens = line.split()
        samples.append(LabeledSample(label, FeatureVector(_floats(path, line_no, tokens, grid.size), grid)))
    if expected is not None and len(samples) != expected:
        raise ModelFormatError(path, lines.last_line_no + 1,
                               f"unexpected end of file: {len(samples)} of {expected} samples")
    try:
        model = fit(samples, k=k, backend=backend)
    except KnnError as e:
        raise ModelFormatError(path, header_no, str(e)) from e
    logger.info(f"Loaded k-NN model from {path}: {len(samples)} samples, grid {grid}")
    return model


# ===== HMM bank =====

def save_bank(bank: GestureBank, path) -> None:
    path = Path(path)
    for pose in bank.symbols.poses:
        if any(ch.isspace() or ch == "," for ch in pose):
            raise HmmError(f"pose {pose!r} cannot be stored: pose labels must not contain commas or whitespace")

    def row(values) -> str:
        return " ".join(f"{v:.12g}" for v in values)

    lines = [f"{BANK_MAGIC} {FORMAT_VERSION} S={bank.symbols.size} poses={','.join(bank.symbols.poses)} "
             f"reject={bank.reject_threshold:.12g}"]
    for chain in bank.chains:
        lines.append(chain.name)
        lines.append(str(chain.n))
        lines.append(row(chain.pi))
        lines.extend(row(r) for r in chain.A)
        lines.extend(row(r) for r in chain.B)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.info(f"Saved gesture bank ({len(bank.chains)} chains) to {path}")


def _renormalized(matrix: np.ndarray) -> np.ndarray:
    # undo print rounding so rows sum to one again; zeros stay zero
    return matrix / matrix.sum(axis=1, keepdims=True)


def load_bank(path) -> GestureBank:
    path = Path(path)
    lines = _Lines(path)
    if not lines:
        raise ModelFormatError(path, 1, "empty model file")
    header_no, header = lines.next()
    fields = _header_fields(path, header_no, header, BANK_MAGIC)
    try:
        S = int(fields["S"])
        poses = tuple(p for p in fields.get("poses", "").split(",") if p)
        reject = float(fields.get("reject", "-inf"))
    except (KeyError, ValueError) as e:
        raise ModelFormatError(path, header_no, f"bad header: {e}") from e
    try:
        table = SymbolTable(poses)
    except ValueError as e:
        raise ModelFormatError(path, header_no, str(e)) from e
    if table.size != S:
        raise ModelFormatError(path, header_no, f"S={S} but {len(poses)} poses give {table.size} symbols")

    chains = []
    while lines:
        name_no, name = lines.next()
        n_no, n_text = lines.next()
        try:
            n = int(n_text)
        except ValueError:
            raise ModelFormatError(path, n_no, f"bad state count {n_text!r}") from None
        if n < 1:
            raise ModelFormatError(path, n_no, "state count must be >= 1")
        pi_no, pi_line = lines.next()
        pi = _floats(path, pi_no, pi_line.split(), n)
        A = np.vstack([_floats(path, no, line.split(), n) for no, line in (lines.next() for _ in range(n))])
        B = np.vstack([_floats(path, no, line.split(), S) for no, line in (lines.next() for _ in range(n))])
        try:
            chains.append(HmmChain(name.strip(), pi, _renormalized(A), _renormalized(B)))
        except ValueError as e:
            raise ModelFormatError(path, name_no, str(e)) from e
    if not chains:
        raise ModelFormatError(path, header_no + 1, "unexpected end of file: no chains")
    logger.info(f"Loaded gesture bank from {path}: {len(chains)} chains, S={S}")
    return GestureBank(tuple(chains), table, reject)


# ===== Model sets =====

def save_models(models: ModelSet, directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    if models.pose_model is not None:
        save_knn(models.pose_model, directory / POSE_MODEL_FILE)
    if models.intermediate_model is not None:
        save_knn(models.intermediate_model, directory / INTERMEDIATE_MODEL_FILE)
    if models.bank is not None:
        save_bank(models.bank, directory / BANK_FILE)
    return directory


def load_models(directory) -> ModelSet:
    """Load whichever of the three model files exist under `directory`."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"model directory not found: {directory}")

    def optional(name, loader):
        path = directory / name
        return loader(path) if path.exists() else None

    models = ModelSet(
        pose_model=optional(POSE_MODEL_FILE, load_knn),
        intermediate_model=optional(INTERMEDIATE_MODEL_FILE, load_knn),
        bank=optional(BANK_FILE, load_bank),
    )
    if models.pose_model is None and models.intermediate_model is None and models.bank is None:
        raise FileNotFoundError(f"no model files in {directory}")
    return models
