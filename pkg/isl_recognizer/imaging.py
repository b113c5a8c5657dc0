"""
Raster primitives: RGB -> YUV conversion, skin segmentation, binary
morphology and 8-connected component analysis.

Frames are (height, width, 3) uint8 arrays, masks are (height, width) bool
arrays; both are wrapped read-only so they can be shared between threads.
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, NamedTuple, Tuple

import numpy as np
from PIL import Image, UnidentifiedImageError
from scipy import ndimage

from .errors import ImageFormatError

logger = logging.getLogger(__name__)

# YUV coefficients scaled by 1000 so conversion is exact integer arithmetic
_YUV_MATRIX = np.array([
    [299, 587, 114],
    [-147, -289, 436],
    [615, -515, -100],
], dtype=np.int64)
_YUV_OFFSET = np.array([0, 128_000, 128_000], dtype=np.int64)


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.ascontiguousarray(array)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class Frame:
    """An 8-bit RGB raster, row-major, origin top-left."""

    pixels: np.ndarray

    def __post_init__(self):
        pixels = np.asarray(self.pixels)
        if pixels.ndim != 3 or pixels.shape[2] != 3:
            raise ImageFormatError(f"frame must be (height, width, 3), got {pixels.shape}")
        if pixels.shape[0] < 1 or pixels.shape[1] < 1:
            raise ImageFormatError("frame must be at least 1x1")
        if pixels.dtype != np.uint8:
            if pixels.size and (pixels.min() < 0 or pixels.max() > 255):
                raise ImageFormatError("channel values must lie in [0, 255]")
            pixels = pixels.astype(np.uint8)
        object.__setattr__(self, "pixels", _frozen(pixels))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @classmethod
    def blank(cls, width: int, height: int, color=(0, 0, 0)) -> "Frame":
        pixels = np.empty((height, width, 3), dtype=np.uint8)
        pixels[:] = color
        return cls(pixels)

    def copy_pixels(self) -> np.ndarray:
        """Writable copy of the raster."""
        return np.array(self.pixels, copy=True)

    def __eq__(self, other):
        if not isinstance(other, Frame):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and np.array_equal(self.pixels, other.pixels)


@dataclass(frozen=True, eq=False)
class BinaryMask:
    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits)
        if bits.ndim != 2:
            raise ImageFormatError(f"mask must be 2-D, got shape {bits.shape}")
        object.__setattr__(self, "bits", _frozen(bits.astype(bool, copy=False)))

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    def count(self) -> int:
        return int(np.count_nonzero(self.bits))

    def __invert__(self) -> "BinaryMask":
        return BinaryMask(~self.bits)

    def __eq__(self, other):
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return self.bits.shape == other.bits.shape and np.array_equal(self.bits, other.bits)


class YuvPixel(NamedTuple):
    y: int
    u: int
    v: int


@dataclass(frozen=True)
class StructuringElement:
    radius: int = 1
    shape: str = "square"

    def __post_init__(self):
        if self.radius < 1:
            raise ValueError("structuring element radius must be >= 1")
        if self.shape != "square":
            raise ValueError(f"unsupported structuring element shape: {self.shape}")

    @property
    def side(self) -> int:
        return 2 * self.radius + 1

    @property
    def array(self) -> np.ndarray:
        return np.ones((self.side, self.side), dtype=bool)


@dataclass(frozen=True, eq=False)
class Blob:
    """
    One 8-connected component.

    `mask` is the component cropped to its inclusive bounding box, so
    `mask[y - y_min, x - x_min]` tells whether pixel (x, y) belongs to it.
    """

    area: int
    bbox: Tuple[int, int, int, int]
    centroid: Tuple[float, float]
    mask: np.ndarray

    @property
    def width(self) -> int:
        return self.bbox[2] - self.bbox[0] + 1

    @property
    def height(self) -> int:
        return self.bbox[3] - self.bbox[1] + 1

    def rasterize(self, width: int, height: int) -> BinaryMask:
        bits = np.zeros((height, width), dtype=bool)
        x0, y0, x1, y1 = self.bbox
        bits[y0:y1 + 1, x0:x1 + 1] = self.mask
        return BinaryMask(bits)


# ===== Colour conversion and skin rules =====

def _round_half_up_thousandths(scaled):
    # floor((x + 500) / 1000) on integers; // floors toward -inf for negatives too
    return (scaled + 500) // 1000


def rgb_to_yuv(p) -> YuvPixel:
    """YUV with U/V offset by 128, rounded half-up then clamped to [0, 255]."""
    r, g, b = (int(c) for c in p)
    y, u, v = (
        min(255, max(0, _round_half_up_thousandths(int(row[0]) * r + int(row[1]) * g + int(row[2]) * b + int(off))))
        for row, off in zip(_YUV_MATRIX, _YUV_OFFSET)
    )
    return YuvPixel(y, u, v)


def frame_to_yuv(frame: Frame) -> np.ndarray:
    """Vectorised rgb_to_yuv over a frame; returns an (H, W, 3) uint8 array."""
    rgb = frame.pixels.astype(np.int64)
    scaled = rgb @ _YUV_MATRIX.T + _YUV_OFFSET
    return np.clip(_round_half_up_thousandths(scaled), 0, 255).astype(np.uint8)


def luminance(frame: Frame) -> np.ndarray:
    """Y plane as float64."""
    return frame_to_yuv(frame)[..., 0].astype(np.float64)


def _skin_rule(r, g, b, u, v):
    # all bounds strict
    return (
        (u > 80) & (u < 130)
        & (v > 136) & (v < 200)
        & (v > u)
        & (r > 80) & (g > 30) & (b > 15)
        & (abs(r - g) > 15)
    )


def is_skin(p) -> bool:
    r, g, b = (int(c) for c in p)
    _, u, v = rgb_to_yuv((r, g, b))
    return bool(_skin_rule(r, g, b, u, v))


def segment_skin(frame: Frame) -> BinaryMask:
    yuv = frame_to_yuv(frame).astype(np.int32)
    rgb = frame.pixels.astype(np.int32)
    bits = _skin_rule(rgb[..., 0], rgb[..., 1], rgb[..., 2], yuv[..., 1], yuv[..., 2])
    return BinaryMask(bits)


# ===== Morphology =====

def erode(mask: BinaryMask, se: StructuringElement = StructuringElement()) -> BinaryMask:
    # out-of-bounds neighbours count as false
    return BinaryMask(ndimage.binary_erosion(mask.bits, structure=se.array, border_value=0))


def dilate(mask: BinaryMask, se: StructuringElement = StructuringElement()) -> BinaryMask:
    return BinaryMask(ndimage.binary_dilation(mask.bits, structure=se.array, border_value=0))


def morph_open(mask: BinaryMask, se: StructuringElement = StructuringElement()) -> BinaryMask:
    return dilate(erode(mask, se), se)


def morph_close(mask: BinaryMask, se: StructuringElement = StructuringElement()) -> BinaryMask:
    return erode(dilate(mask, se), se)


def clean_mask(mask: BinaryMask, se: StructuringElement = StructuringElement(),
               iterations: int = 1) -> BinaryMask:
    """Open (drops false-positive specks) then close (fills false-negative holes)."""
    for _ in range(iterations):
        mask = morph_open(mask, se)
    for _ in range(iterations):
        mask = morph_close(mask, se)
    return mask


# ===== Connected components =====

_EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


def connected_components(mask: BinaryMask) -> List[Blob]:
    """8-connected components in raster order of their first pixel."""
    labels, count = ndimage.label(mask.bits, structure=_EIGHT_CONNECTED)
    if count == 0:
        return []

    ys, xs = np.nonzero(labels)
    ids = labels[ys, xs]
    areas = np.bincount(ids, minlength=count + 1)
    sum_x = np.bincount(ids, weights=xs, minlength=count + 1)
    sum_y = np.bincount(ids, weights=ys, minlength=count + 1)

    blobs = []
    for label, slices in enumerate(ndimage.find_objects(labels), start=1):
        if slices is None:
            continue
        rows, cols = slices
        area = int(areas[label])
        blobs.append(Blob(
            area=area,
            bbox=(cols.start, rows.start, cols.stop - 1, rows.stop - 1),
            centroid=(float(sum_x[label] / area), float(sum_y[label] / area)),
            mask=_frozen(labels[rows, cols] == label),
        ))
    return blobs


def translate(frame: Frame, dx: int, dy: int) -> Frame:
    """Shift content by (dx, dy) pixels; revealed borders are black."""
    out = np.zeros_like(frame.pixels)
    h, w = frame.height, frame.width
    if abs(dx) >= w or abs(dy) >= h:
        return Frame(out)
    src_x = slice(max(0, -dx), min(w, w - dx))
    dst_x = slice(max(0, dx), min(w, w + dx))
    src_y = slice(max(0, -dy), min(h, h - dy))
    dst_y = slice(max(0, dy), min(h, h + dy))
    out[dst_y, dst_x] = frame.pixels[src_y, src_x]
    return Frame(out)


# ===== PPM / PGM =====

def read_ppm(path) -> Frame:
    path = Path(path)
    try:
        with Image.open(path) as image:
            return Frame(np.asarray(image.convert("RGB"), dtype=np.uint8))
    except (UnidentifiedImageError, OSError) as e:
        raise ImageFormatError(f"cannot read frame {path}: {e}") from e


def write_ppm(frame: Frame, path) -> None:
    Image.fromarray(np.ascontiguousarray(frame.pixels)).save(path, format="PPM")


def write_pgm_mask(mask: BinaryMask, path) -> None:
    """Binary P5 with 0/255 values."""
    Image.fromarray(mask.bits.astype(np.uint8) * 255).save(path, format="PPM")


def read_pgm_mask(path) -> BinaryMask:
    path = Path(path)
    try:
        with Image.open(path) as image:
            return BinaryMask(np.asarray(image.convert("L")) > 127)
    except (UnidentifiedImageError, OSError) as e:
        raise ImageFormatError(f"cannot read mask {path}: {e}") from e
