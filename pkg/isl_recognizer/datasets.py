"""
Dataset directory layout.

    <root>/poses/<label>/*.ppm|*.pgm           static pose samples
    <root>/intermediate/<label>/*.ppm|*.pgm    intermediate poses (gesture symbols)
    <root>/gestures/<name>/<take>/             training takes
        frame_0000.ppm ...                     optional frames
        faces.txt                              optional face annotations
        tuples.txt                             optional scripted tuple stream
    <root>/gestures_test/<name>/<take>/        held-out takes; impostors under WRONG/
    <root>/gestures.txt                        gesture definitions
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Optional, Tuple, Union

from .errors import DatasetError
from .gesture_hmm import FrameTuple
from .hand_tracker import Direction
from .imaging import BinaryMask, Frame, read_pgm_mask, read_ppm

logger = logging.getLogger(__name__)

POSES_DIR = "poses"
INTERMEDIATE_DIR = "intermediate"
GESTURES_DIR = "gestures"
GESTURES_TEST_DIR = "gestures_test"
DEFINITIONS_FILE = "gestures.txt"
TUPLES_FILE = "tuples.txt"
FACES_FILE = "faces.txt"
FRAME_PATTERN = "frame_{:04d}.ppm"
IMAGE_SUFFIXES = (".ppm", ".pgm")


def load_image(path) -> Union[Frame, BinaryMask]:
    """PPM files are frames, PGM files are ready-made hand masks."""
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        return read_pgm_mask(path)
    return read_ppm(path)


def _sorted_dirs(path: Path) -> List[Path]:
    return sorted(p for p in path.iterdir() if p.is_dir()) if path.is_dir() else []


def list_labeled_images(directory) -> List[Tuple[str, Path]]:
    """(label, path) for every image under `directory/<label>/`, sorted by label then file name."""
    directory = Path(directory)
    if not directory.is_dir():
        raise DatasetError(f"image directory not found: {directory}")
    items = []
    for label_dir in _sorted_dirs(directory):
        for path in sorted(label_dir.iterdir()):
            if path.suffix.lower() in IMAGE_SUFFIXES:
                items.append((label_dir.name, path))
    return items


# ===== Tuple streams =====

def parse_tuple_line(text: str) -> Optional[FrameTuple]:
    parts = text.split()
    if parts == ["absent"]:
        return None
    if len(parts) == 2 and parts[0] == "pose":
        return FrameTuple.still(parts[1])
    if len(parts) == 2 and parts[0] == "motion":
        return FrameTuple.moving(Direction.parse(parts[1]))
    raise ValueError(f"expected `pose <label>`, `motion <dir>` or `absent`, got {text!r}")


def read_tuples(path) -> List[Optional[FrameTuple]]:
    """One entry per frame; None marks a hand-absent frame."""
    path = Path(path)
    out = []
    for line_no, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            out.append(parse_tuple_line(line))
        except ValueError as e:
            raise DatasetError(f"{path}:{line_no}: {e}") from e
    return out


def format_tuples(tuples: Iterable[Optional[FrameTuple]]) -> str:
    return "".join(("absent" if t is None else str(t)) + "\n" for t in tuples)


def write_tuples(tuples: Iterable[Optional[FrameTuple]], path) -> None:
    Path(path).write_text(format_tuples(tuples), encoding="utf-8")


# ===== Takes =====

@dataclass(frozen=True)
class GestureTake:
    label: str
    path: Path

    @property
    def name(self) -> str:
        return f"{self.label}/{self.path.name}"

    @property
    def frames(self) -> List[Path]:
        return sorted(self.path.glob("frame_*.ppm"))

    @property
    def tuples_path(self) -> Optional[Path]:
        path = self.path / TUPLES_FILE
        return path if path.exists() else None

    @property
    def faces_path(self) -> Optional[Path]:
        path = self.path / FACES_FILE
        return path if path.exists() else None

    def read_frames(self) -> Iterable[Frame]:
        for path in self.frames:
            yield read_ppm(path)

    def read_tuples(self) -> List[Optional[FrameTuple]]:
        if self.tuples_path is None:
            raise DatasetError(f"take {self.path} has no {TUPLES_FILE}")
        return read_tuples(self.tuples_path)


def list_takes(directory) -> List[GestureTake]:
    """Every `<directory>/<label>/<take>/` folder, sorted."""
    directory = Path(directory)
    if not directory.is_dir():
        raise DatasetError(f"gesture directory not found: {directory}")
    return [GestureTake(label_dir.name, take_dir)
            for label_dir in _sorted_dirs(directory)
            for take_dir in _sorted_dirs(label_dir)]


@dataclass(frozen=True)
class Dataset:
    root: Path

    def __post_init__(self):
        object.__setattr__(self, "root", Path(self.root))

    @property
    def poses_dir(self) -> Path:
        return self.root / POSES_DIR

    @property
    def intermediate_dir(self) -> Path:
        return self.root / INTERMEDIATE_DIR

    @property
    def definitions_path(self) -> Path:
        return self.root / DEFINITIONS_FILE

    def pose_images(self) -> List[Tuple[str, Path]]:
        return list_labeled_images(self.poses_dir)

    def intermediate_images(self) -> List[Tuple[str, Path]]:
        return list_labeled_images(self.intermediate_dir)

    def training_takes(self) -> List[GestureTake]:
        return list_takes(self.root / GESTURES_DIR)

    def test_takes(self) -> List[GestureTake]:
        return list_takes(self.root / GESTURES_TEST_DIR)
