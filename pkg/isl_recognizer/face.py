"""
Face detection and face-neck elimination.

The detector is a HOG descriptor scored by an externally supplied linear
model over an image pyramid. Two cheaper providers (a per-frame annotation
sidecar and a skin-blob heuristic) share its interface.
"""
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np
from PIL import Image

from .errors import ConfigError, FaceAnnotationError, ModelFormatError
from .imaging import Frame, connected_components, luminance, segment_skin

logger = logging.getLogger(__name__)

HOG_EPSILON = 1e-5


@dataclass(frozen=True)
class FaceBox:
    bbox: Tuple[int, int, int, int]
    score: float = 0.0

    def __post_init__(self):
        x0, y0, x1, y1 = self.bbox
        if x0 > x1 or y0 > y1:
            raise ValueError(f"degenerate face box {self.bbox}")

    @property
    def center(self) -> Tuple[float, float]:
        x0, y0, x1, y1 = self.bbox
        return (x0 + x1) / 2.0, (y0 + y1) / 2.0

    def translated(self, dx: int, dy: int) -> "FaceBox":
        x0, y0, x1, y1 = self.bbox
        return FaceBox((x0 + dx, y0 + dy, x1 + dx, y1 + dy), self.score)

    def clipped(self, width: int, height: int) -> Optional["FaceBox"]:
        x0, y0, x1, y1 = self.bbox
        x0, y0 = max(0, x0), max(0, y0)
        x1, y1 = min(width - 1, x1), min(height - 1, y1)
        if x0 > x1 or y0 > y1:
            return None
        return FaceBox((x0, y0, x1, y1), self.score)


@dataclass(frozen=True, eq=False)
class HogDescriptor:
    values: np.ndarray
    cell_size: int = 8
    block_size: int = 2
    bins: int = 9


@dataclass(frozen=True, eq=False)
class LinearFaceModel:
    window: Tuple[int, int]
    weights: np.ndarray
    bias: float = 0.0
    threshold: float = 0.0
    cell_size: int = 8

    def __post_init__(self):
        expected = hog_length(self.window, self.cell_size)
        if len(self.weights) != expected:
            raise ValueError(
                f"face model has {len(self.weights)} weights, window {self.window} needs {expected}"
            )


# ===== HOG =====

def hog_length(window: Tuple[int, int], cell_size: int = 8, block_size: int = 2, bins: int = 9) -> int:
    w, h = window
    cells_x, cells_y = w // cell_size, h // cell_size
    return max(0, cells_x - block_size + 1) * max(0, cells_y - block_size + 1) * block_size * block_size * bins


def _gradients(gray: np.ndarray):
    """Centered [-1, 0, 1] differences (edge-replicated); unsigned angle in degrees."""
    padded = np.pad(gray, 1, mode="edge")
    gx = padded[1:-1, 2:] - padded[1:-1, :-2]
    gy = padded[2:, 1:-1] - padded[:-2, 1:-1]
    magnitude = np.hypot(gx, gy)
    angle = np.mod(np.degrees(np.arctan2(gy, gx)), 180.0)
    return magnitude, angle


def _cell_histograms(magnitude: np.ndarray, angle: np.ndarray, cell_size: int, bins: int) -> np.ndarray:
    """Per-cell orientation histograms, bilinear between bin centres at k * 180/bins."""
    cells_y, cells_x = magnitude.shape[0] // cell_size, magnitude.shape[1] // cell_size
    magnitude = magnitude[:cells_y * cell_size, :cells_x * cell_size]
    angle = angle[:cells_y * cell_size, :cells_x * cell_size]

    position = angle / (180.0 / bins)
    lower = np.floor(position)
    frac = position - lower
    lower = lower.astype(np.int64) % bins
    upper = (lower + 1) % bins

    votes = np.zeros(magnitude.shape + (bins,))
    rows, cols = np.indices(magnitude.shape)
    np.add.at(votes, (rows, cols, lower), magnitude * (1.0 - frac))
    np.add.at(votes, (rows, cols, upper), magnitude * frac)
    return votes.reshape(cells_y, cell_size, cells_x, cell_size, bins).sum(axis=(1, 3))


def _normalize_blocks(cells: np.ndarray) -> np.ndarray:
    # 2x2 blocks, stride one cell, L2 with stabiliser
    blocks = np.concatenate(
        [cells[:-1, :-1], cells[:-1, 1:], cells[1:, :-1], cells[1:, 1:]], axis=-1
    )
    norms = np.sqrt(np.sum(blocks ** 2, axis=-1, keepdims=True) + HOG_EPSILON ** 2)
    return (blocks / norms).ravel()


def hog_descriptor(gray: np.ndarray, window: Tuple[int, int, int, int],
                   cell_size: int = 8, bins: int = 9) -> HogDescriptor:
    """
    HOG of `window` = (x, y, width, height) inside the luminance raster `gray`.
    Gradients at the window edge use the neighbouring raster pixels.
    """
    x, y, w, h = window
    if w % cell_size or h % cell_size:
        raise ValueError(f"window {w}x{h} is not divisible by cell size {cell_size}")
    if w < 2 * cell_size or h < 2 * cell_size:
        raise ValueError(f"window {w}x{h} is smaller than one 2x2-cell block")
    if x < 0 or y < 0 or x + w > gray.shape[1] or y + h > gray.shape[0]:
        raise ValueError(f"window {window} falls outside the {gray.shape[1]}x{gray.shape[0]} raster")

    magnitude, angle = _gradients(np.asarray(gray, dtype=np.float64))
    cells = _cell_histograms(magnitude[y:y + h, x:x + w], angle[y:y + h, x:x + w], cell_size, bins)
    return HogDescriptor(values=_normalize_blocks(cells), cell_size=cell_size, bins=bins)


def _resize(gray: np.ndarray, width: int, height: int) -> np.ndarray:
    image = Image.fromarray(gray.astype(np.float32))
    return np.asarray(image.resize((width, height), Image.BILINEAR), dtype=np.float64)


def detect_face(frame: Frame, model: LinearFaceModel, scale_step: float = 1.25,
                stride: int = 8) -> Optional[FaceBox]:
    """
    Slide the model window over an image pyramid and return the best box
    above threshold, in frame coordinates.
    """
    if scale_step <= 1.0:
        raise ValueError(f"scale_step must be greater than 1, got {scale_step}")
    if stride < 1:
        raise ValueError(f"stride must be at least 1, got {stride}")
    win_w, win_h = model.window
    cell = model.cell_size
    gray = luminance(frame)
    best = None
    scale = 1.0

    while True:
        level_w = int(round(frame.width / scale))
        level_h = int(round(frame.height / scale))
        if level_w < win_w or level_h < win_h:
            break
        level = gray if scale == 1.0 else _resize(gray, level_w, level_h)
        magnitude, angle = _gradients(level)

        if stride % cell == 0:
            cells = _cell_histograms(magnitude, angle, cell, 9)
            step, span_x, span_y = stride // cell, win_w // cell, win_h // cell
            for cy in range(0, cells.shape[0] - span_y + 1, step):
                for cx in range(0, cells.shape[1] - span_x + 1, step):
                    values = _normalize_blocks(cells[cy:cy + span_y, cx:cx + span_x])
                    score = float(np.dot(model.weights, values) + model.bias)
                    if best is None or score > best[0]:
                        best = (score, cx * cell, cy * cell, scale)
        else:
            for y in range(0, level_h - win_h + 1, stride):
                for x in range(0, level_w - win_w + 1, stride):
                    cells = _cell_histograms(magnitude[y:y + win_h, x:x + win_w],
                                             angle[y:y + win_h, x:x + win_w], cell, 9)
                    score = float(np.dot(model.weights, _normalize_blocks(cells)) + model.bias)
                    if best is None or score > best[0]:
                        best = (score, x, y, scale)
        scale *= scale_step

    if best is None or best[0] <= model.threshold:
        return None

    score, x, y, scale = best
    box = FaceBox((
        int(round(x * scale)),
        int(round(y * scale)),
        int(round((x + win_w) * scale)) - 1,
        int(round((y + win_h) * scale)) - 1,
    ), score)
    return box.clipped(frame.width, frame.height)


def load_face_model(path, threshold: float = 0.0) -> LinearFaceModel:
    """
    Text model: `window <w> <h>`, then the bias, then one weight per line.
    """
    path = Path(path)
    lines = [(no, line.strip()) for no, line in enumerate(path.read_text().splitlines(), start=1)]
    lines = [(no, line) for no, line in lines if line and not line.startswith("#")]
    if not lines:
        raise ModelFormatError(path, 1, "empty face model file")

    no, header = lines[0]
    parts = header.split()
    if len(parts) != 3 or parts[0] != "window":
        raise ModelFormatError(path, no, f"expected 'window <w> <h>', got {header!r}")
    if len(lines) < 2:
        raise ModelFormatError(path, no + 1, "missing bias line")

    values = []
    for no, line in lines[1:]:
        try:
            values.append(float(line))
        except ValueError as e:
            raise ModelFormatError(path, no, f"bad number {line!r}") from e
    try:
        window = (int(parts[1]), int(parts[2]))
    except ValueError as e:
        raise ModelFormatError(path, lines[0][0], f"bad window size: {e}") from e
    bias, weights = values[0], np.array(values[1:])

    try:
        return LinearFaceModel(window=window, weights=weights, bias=bias, threshold=threshold)
    except ValueError as e:
        raise ModelFormatError(path, lines[-1][0], str(e)) from e


# ===== Face providers =====

class NoFaceProvider:
    """For streams without a demonstrator face."""

    name = "none"

    def __call__(self, frame_index: int, frame: Frame) -> Optional[FaceBox]:
        return None


class AnnotationFaceProvider:
    """Boxes read from a `<frame_index> <x_min> <y_min> <x_max> <y_max>` sidecar."""

    name = "annotation"

    def __init__(self, path):
        self.path = Path(path)
        self.boxes: Dict[int, FaceBox] = {}
        for line_no, raw in enumerate(self.path.read_text().splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 5:
                raise FaceAnnotationError(self.path, line_no, f"expected 5 fields, got {len(parts)}")
            try:
                index, x0, y0, x1, y1 = (int(p) for p in parts)
                self.boxes[index] = FaceBox((x0, y0, x1, y1), 1.0)
            except ValueError as e:
                raise FaceAnnotationError(self.path, line_no, str(e)) from e
        logger.info(f"Loaded {len(self.boxes)} face annotations from {self.path}")

    def __call__(self, frame_index: int, frame: Frame) -> Optional[FaceBox]:
        box = self.boxes.get(frame_index)
        if box is None:
            return None
        return box.clipped(frame.width, frame.height)


class HeuristicFaceProvider:
    """Topmost roughly square skin blob covering at least `min_area_fraction` of the frame."""

    name = "heuristic"

    def __init__(self, min_aspect: float = 0.6, max_aspect: float = 1.4, min_area_fraction: float = 0.02):
        self.min_aspect = min_aspect
        self.max_aspect = max_aspect
        self.min_area_fraction = min_area_fraction

    def __call__(self, frame_index: int, frame: Frame) -> Optional[FaceBox]:
        min_area = self.min_area_fraction * frame.width * frame.height
        candidates = [
            blob for blob in connected_components(segment_skin(frame))
            if blob.area >= min_area and self.min_aspect <= blob.width / blob.height <= self.max_aspect
        ]
        if not candidates:
            return None
        top = min(candidates, key=lambda blob: (blob.bbox[1], blob.bbox[0]))
        return FaceBox(top.bbox, top.area / (frame.width * frame.height))


class HogFaceProvider:
    name = "hog"

    def __init__(self, model: LinearFaceModel, scale_step: float = 1.25, stride: int = 8):
        self.model = model
        self.scale_step = scale_step
        self.stride = stride

    def __call__(self, frame_index: int, frame: Frame) -> Optional[FaceBox]:
        return detect_face(frame, self.model, self.scale_step, self.stride)


def build_face_provider(cfg):
    """Construct the provider named by `cfg.face_provider`."""
    if cfg.face_provider == "none":
        return NoFaceProvider()
    if cfg.face_provider == "annotation":
        if not cfg.face_annotations:
            raise ConfigError("face_provider=annotation needs face_annotations")
        return AnnotationFaceProvider(cfg.face_annotations)
    if cfg.face_provider == "heuristic":
        return HeuristicFaceProvider()
    if not cfg.face_model:
        raise ConfigError("face_provider=hog needs face_model")
    model = load_face_model(cfg.face_model, threshold=cfg.face_threshold)
    return HogFaceProvider(model, cfg.pyramid_scale, cfg.window_stride)


# ===== Elimination =====

def expand_face_region(box: FaceBox, width: int, height: int,
                       width_scale: float = 1.2, height_scale: float = 1.6) -> Tuple[int, int, int, int]:
    """
    Face-neck rectangle: width scaled about the centre, height extended
    downward from the top edge; rounded inward and clipped to the frame.
    """
    x0, y0, x1, y1 = box.bbox
    cx = (x0 + x1) / 2.0
    half = width_scale * (x1 - x0) / 2.0
    left = math.ceil(round(cx - half, 6))
    right = math.floor(round(cx + half, 6))
    bottom = math.floor(round(y0 + height_scale * (y1 - y0), 6))
    return max(0, left), max(0, y0), min(width - 1, right), min(height - 1, bottom)


def eliminate_face(frame: Frame, box: FaceBox, width_scale: float = 1.2,
                   height_scale: float = 1.6) -> Frame:
    x0, y0, x1, y1 = expand_face_region(box, frame.width, frame.height, width_scale, height_scale)
    pixels = frame.copy_pixels()
    if x0 <= x1 and y0 <= y1:
        pixels[y0:y1 + 1, x0:x1 + 1] = 0
    return Frame(pixels)
