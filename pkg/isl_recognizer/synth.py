"""
Deterministic synthetic data: parametric hand silhouettes for the pose
classifiers and scripted tuple streams (optionally rendered to frames) for
the gesture chains.
"""
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import ndimage

from .datasets import (DEFINITIONS_FILE, FRAME_PATTERN, GESTURES_DIR, GESTURES_TEST_DIR, INTERMEDIATE_DIR,
                       POSES_DIR, TUPLES_FILE, write_tuples)
from .gesture_hmm import (WRONG_GESTURE, FrameTuple, GestureDefinition, GestureDefinitions, SymbolTable, decode,
                          format_gesture_definitions)
from .hand_tracker import Direction
from .imaging import BinaryMask, Frame, write_ppm

logger = logging.getLogger(__name__)

SKIN_RGB = (180, 90, 60)
BASE_RADIUS = 16.0
POSE_CANVAS = 144
GESTURE_CANVAS = 240
FIRST_MOTION_STEP = 24.0
MOTION_STEP = 10.0
TRAILING_ABSENT = 3


@dataclass(frozen=True)
class Finger:
    """A bar leaving the palm; angle 0 points up, 90 right (image coordinates)."""

    angle: float
    length: float
    width: float = 0.4
    start: float = 0.6
    shift: float = 0.0


@dataclass(frozen=True)
class HandShape:
    name: str
    palm: Tuple[float, float] = (1.0, 1.0)
    fingers: Tuple[Finger, ...] = ()


SHAPES: Tuple[HandShape, ...] = (
    HandShape("Fist", (1.15, 1.0)),
    HandShape("Five", (1.0, 1.1), (Finger(-60, 1.1), Finger(-25, 1.6), Finger(-8, 1.8),
                                   Finger(10, 1.7), Finger(28, 1.4))),
    HandShape("L_Shape", (0.9, 1.0), (Finger(0, 1.9, shift=-0.3), Finger(-90, 1.5, shift=0.3))),
    HandShape("Point_Left", (1.0, 0.9), (Finger(-90, 2.0),)),
    HandShape("V_Down", (1.0, 1.0), (Finger(160, 1.8), Finger(200, 1.8))),
    HandShape("Thumbs_Up", (1.0, 0.9), (Finger(0, 1.4, width=0.5, shift=-0.45),)),
    HandShape("Sun_Up", (1.0, 1.0), (Finger(0, 1.7, width=1.6),)),
    HandShape("One", (0.9, 1.0), (Finger(0, 1.9),)),
    HandShape("Two", (0.9, 1.0), (Finger(-14, 1.9), Finger(14, 1.9))),
    HandShape("Y_Shape", (1.0, 1.0), (Finger(-65, 1.4), Finger(60, 1.4))),
    HandShape("Point_Right", (1.0, 0.9), (Finger(90, 2.0),)),
    HandShape("Three", (0.95, 1.0), (Finger(-22, 1.8), Finger(0, 1.9), Finger(22, 1.8))),
    HandShape("Four", (1.0, 1.0), (Finger(-27, 1.6), Finger(-9, 1.8), Finger(9, 1.8), Finger(27, 1.6))),
)
SHAPES_BY_NAME: Dict[str, HandShape] = {s.name: s for s in SHAPES}

INTERMEDIATE_POSES: Tuple[str, ...] = (
    "Thumbs_Up", "Sun_Up", "Fist", "One", "Two", "Five", "L_Shape", "Y_Shape", "Point_Right",
)


def _p(label: str) -> FrameTuple:
    return FrameTuple.still(label)


def _m(direction: str) -> FrameTuple:
    return FrameTuple.moving(Direction.parse(direction))


GESTURE_SCRIPTS: Dict[str, Tuple[FrameTuple, ...]] = {
    "Good Afternoon": (_p("Thumbs_Up"), _m("up"), _p("Sun_Up")),
    "Good Morning": (_p("Fist"), _m("up"), _p("Sun_Up")),
    "Good Night": (_p("Sun_Up"), _m("down"), _p("Fist")),
    "After": (_p("Five"), _m("right"), _p("Point_Right")),
    "All The Best": (_p("Thumbs_Up"), _m("right"), _p("Thumbs_Up")),
    "Apple": (_p("Y_Shape"), _m("down"), _p("Fist")),
    "I Am Sorry": (_p("Five"), _m("left"), _p("Fist")),
    "Leader": (_p("One"), _m("up"), _p("One")),
    "Please Give Me Your Pen": (_p("Five"), _m("down"), _p("Two"), _m("right"), _p("L_Shape")),
    "Strike": (_p("Fist"), _m("right"), _p("Five")),
    "That Is Good": (_p("Thumbs_Up"), _m("down"), _p("L_Shape")),
    "Towards": (_p("Point_Right"), _m("right"), _p("Point_Right")),
}


@dataclass(frozen=True)
class Jitter:
    translation: float = 10.0
    scale: float = 0.10
    boundary_noise: float = 0.15


NO_JITTER = Jitter(0.0, 0.0, 0.0)


# ===== Silhouettes =====

def render_shape(shape: HandShape, width: int, height: int, center: Tuple[float, float],
                 scale: float = 1.0) -> np.ndarray:
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    dx, dy = xx - center[0], yy - center[1]
    r = BASE_RADIUS * scale
    rx, ry = shape.palm
    bits = (dx / (rx * r)) ** 2 + (dy / (ry * r)) ** 2 <= 1.0
    for finger in shape.fingers:
        theta = math.radians(finger.angle)
        ux, uy = math.sin(theta), -math.cos(theta)
        along = dx * ux + dy * uy
        across = -dx * uy + dy * ux - finger.shift * r
        start = finger.start * r
        bits |= (along >= start) & (along <= start + finger.length * r) & (np.abs(across) <= finger.width * r / 2)
    return bits


def _centroid_offset(shape: HandShape, scale: float) -> Tuple[float, float]:
    size = int(8 * BASE_RADIUS * scale)
    bits = render_shape(shape, size, size, (size / 2, size / 2), scale)
    ys, xs = np.nonzero(bits)
    return float(xs.mean() - size / 2), float(ys.mean() - size / 2)


def _boundary_noise(bits: np.ndarray, rate: float, rng: np.random.Generator) -> np.ndarray:
    if rate <= 0:
        return bits
    inner = bits & ~ndimage.binary_erosion(bits)
    outer = ndimage.binary_dilation(bits) & ~bits
    flips = (inner | outer) & (rng.random(bits.shape) < rate)
    return bits ^ flips


def render_pose_sample(shape: HandShape, rng: np.random.Generator, jitter: Jitter = Jitter(),
                       canvas: int = POSE_CANVAS) -> BinaryMask:
    """One jittered silhouette; with NO_JITTER every call returns the same mask."""
    cx = cy = canvas / 2.0
    scale = 1.0
    if jitter.translation > 0:
        cx += rng.uniform(-jitter.translation, jitter.translation)
        cy += rng.uniform(-jitter.translation, jitter.translation)
    if jitter.scale > 0:
        scale += rng.uniform(-jitter.scale, jitter.scale)
    bits = render_shape(shape, canvas, canvas, (cx, cy), scale)
    return BinaryMask(_boundary_noise(bits, jitter.boundary_noise, rng))


def mask_to_frame(mask: BinaryMask, color=SKIN_RGB) -> Frame:
    pixels = np.zeros((mask.height, mask.width, 3), dtype=np.uint8)
    pixels[mask.bits] = color
    return Frame(pixels)


def _resolve_classes(classes: Union[int, Sequence[str]]) -> List[HandShape]:
    if isinstance(classes, int):
        if not 2 <= classes <= len(SHAPES):
            raise ValueError(f"classes must be between 2 and {len(SHAPES)}, got {classes}")
        return list(SHAPES[:classes])
    names = list(classes)
    if len(names) < 2:
        raise ValueError("at least two classes are needed")
    unknown = [n for n in names if n not in SHAPES_BY_NAME]
    if unknown:
        raise ValueError(f"unknown shapes: {unknown}")
    return [SHAPES_BY_NAME[n] for n in names]


def synth_pose_samples(seed: int, classes: Union[int, Sequence[str]] = 5, per_class: int = 200,
                       jitter: Jitter = Jitter(), canvas: int = POSE_CANVAS) -> List[Tuple[str, BinaryMask]]:
    rng = np.random.default_rng(seed)
    samples = []
    for shape in _resolve_classes(classes):
        for _ in range(per_class):
            samples.append((shape.name, render_pose_sample(shape, rng, jitter, canvas)))
    return samples


# ===== Gesture streams =====

def script_take(script: Sequence[FrameTuple], rng: np.random.Generator, run_length: int = 3,
                run_jitter: int = 1, substitution: float = 0.05,
                poses: Sequence[str] = INTERMEDIATE_POSES,
                trailing_absent: int = TRAILING_ABSENT) -> List[Optional[FrameTuple]]:
    """Expand a script into per-frame tuples with run-length jitter and pose substitution noise."""
    frames: List[Optional[FrameTuple]] = []
    for step in script:
        length = run_length
        if run_jitter > 0:
            length = max(1, run_length + int(rng.integers(-run_jitter, run_jitter + 1)))
        for _ in range(length):
            item = step
            if step.pose is not None and substitution > 0 and rng.random() < substitution:
                others = [p for p in poses if p != step.pose]
                item = FrameTuple.still(others[int(rng.integers(len(others)))])
            frames.append(item)
    frames.extend([None] * trailing_absent)
    return frames


def impostor_take(rng: np.random.Generator, table: SymbolTable, min_length: int = 9,
                  max_length: int = 15, trailing_absent: int = TRAILING_ABSENT) -> List[Optional[FrameTuple]]:
    length = int(rng.integers(min_length, max_length + 1))
    symbols = rng.integers(0, table.size, size=length).tolist()
    return decode(symbols, table) + [None] * trailing_absent


def gesture_definitions(names: Sequence[str], poses: Sequence[str] = INTERMEDIATE_POSES) -> GestureDefinitions:
    """One state per script step, each hinted towards the step's symbol."""
    gestures = []
    for name in names:
        script = GESTURE_SCRIPTS[name]
        hints = tuple((i, step.pose if step.pose is not None else step.motion.label)
                      for i, step in enumerate(script))
        gestures.append(GestureDefinition(name, len(script), hints))
    return GestureDefinitions(tuple(gestures), tuple(poses))


def render_take(tuples: Sequence[Optional[FrameTuple]], canvas: int = GESTURE_CANVAS) -> List[Frame]:
    """
    Frames for a tuple stream: still frames draw the pose with its centroid on
    the current hand position, motion frames move the last pose 24 px on the
    first frame of a run and 10 px afterwards, absent frames are black.
    """
    offsets = {Direction.UP: (0.0, -1.0), Direction.DOWN: (0.0, 1.0),
               Direction.LEFT: (-1.0, 0.0), Direction.RIGHT: (1.0, 0.0)}

    # walk once to centre the whole trajectory on the canvas
    path = []
    x = y = 0.0
    previous_motion = False
    for item in tuples:
        if item is not None and item.motion is not None:
            step = MOTION_STEP if previous_motion else FIRST_MOTION_STEP
            ox, oy = offsets[item.motion]
            x, y = x + ox * step, y + oy * step
            previous_motion = True
        else:
            previous_motion = False
        path.append((x, y))
    xs = [p[0] for p in path] or [0.0]
    ys = [p[1] for p in path] or [0.0]
    shift_x = canvas / 2.0 - (min(xs) + max(xs)) / 2.0
    shift_y = canvas / 2.0 - (min(ys) + max(ys)) / 2.0

    frames = []
    shape = SHAPES_BY_NAME["Fist"]
    for item, (px, py) in zip(tuples, path):
        if item is None:
            frames.append(Frame.blank(canvas, canvas))
            continue
        if item.pose is not None:
            shape = SHAPES_BY_NAME[item.pose]
        off_x, off_y = _centroid_offset(shape, 1.0)
        center = (px + shift_x - off_x, py + shift_y - off_y)
        frames.append(mask_to_frame(BinaryMask(render_shape(shape, canvas, canvas, center))))
    return frames


@dataclass
class SynthDataset:
    poses: List[Tuple[str, BinaryMask]]
    intermediate: List[Tuple[str, BinaryMask]]
    definitions: GestureDefinitions
    training_takes: Dict[str, List[List[Optional[FrameTuple]]]] = field(default_factory=dict)
    test_takes: Dict[str, List[List[Optional[FrameTuple]]]] = field(default_factory=dict)

    @property
    def symbols(self) -> SymbolTable:
        return self.definitions.symbol_table()


def synth_dataset(seed: int = 0, classes: Union[int, Sequence[str]] = 5, per_class: int = 200,
                  gestures: Optional[Sequence[str]] = None, takes_per_gesture: int = 15,
                  test_takes_per_gesture: int = 20, impostors: int = 20,
                  intermediate_per_class: int = 60, jitter: Jitter = Jitter(),
                  substitution: float = 0.05) -> SynthDataset:
    """Pose samples, intermediate-pose samples and scripted gesture takes, all from one seed."""
    gestures = list(gestures) if gestures is not None else list(GESTURE_SCRIPTS)
    unknown = [g for g in gestures if g not in GESTURE_SCRIPTS]
    if unknown:
        raise ValueError(f"unknown gestures: {unknown}")

    poses = synth_pose_samples(seed, classes, per_class, jitter)
    intermediate = synth_pose_samples(seed + 1, list(INTERMEDIATE_POSES), intermediate_per_class, jitter)
    definitions = gesture_definitions(gestures)
    table = definitions.symbol_table()

    rng = np.random.default_rng([seed, 2])
    training = {g: [script_take(GESTURE_SCRIPTS[g], rng, substitution=substitution)
                    for _ in range(takes_per_gesture)] for g in gestures}
    testing = {g: [script_take(GESTURE_SCRIPTS[g], rng, substitution=substitution)
                   for _ in range(test_takes_per_gesture)] for g in gestures}
    if impostors:
        testing[WRONG_GESTURE] = [impostor_take(rng, table) for _ in range(impostors)]
    logger.info(f"Synthesised {len(poses)} pose samples, {len(intermediate)} intermediate samples, "
                f"{len(gestures)} gestures")
    return SynthDataset(poses, intermediate, definitions, training, testing)


def write_synth_dataset(dataset: SynthDataset, root, render_frames: bool = False) -> Path:
    """Lay the dataset out on disk in the standard directory structure."""
    root = Path(root)

    def write_images(directory: Path, samples):
        counters: Dict[str, int] = {}
        for label, mask in samples:
            index = counters.get(label, 0)
            counters[label] = index + 1
            target = directory / label
            target.mkdir(parents=True, exist_ok=True)
            write_ppm(mask_to_frame(mask), target / f"{index:04d}.ppm")

    def write_takes(directory: Path, takes):
        for label, streams in takes.items():
            for i, tuples in enumerate(streams):
                take_dir = directory / label / f"take_{i:02d}"
                take_dir.mkdir(parents=True, exist_ok=True)
                write_tuples(tuples, take_dir / TUPLES_FILE)
                if render_frames:
                    for j, frame in enumerate(render_take(tuples)):
                        write_ppm(frame, take_dir / FRAME_PATTERN.format(j))

    write_images(root / POSES_DIR, dataset.poses)
    write_images(root / INTERMEDIATE_DIR, dataset.intermediate)
    write_takes(root / GESTURES_DIR, dataset.training_takes)
    write_takes(root / GESTURES_TEST_DIR, dataset.test_takes)
    (root / DEFINITIONS_FILE).write_text(format_gesture_definitions(dataset.definitions), encoding="utf-8")
    logger.info(f"Wrote synthetic dataset to {root}")
    return root
