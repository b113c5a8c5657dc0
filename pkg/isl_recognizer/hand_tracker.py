"""
Hand extraction and centroid motion quantisation with a hysteresis circle.
"""
import logging
import math
from dataclasses import dataclass
from enum import Enum, IntEnum
from typing import Optional, Tuple

from .imaging import BinaryMask, Blob, connected_components

logger = logging.getLogger(__name__)

REST_RADIUS = 20.0
MOVING_RADIUS = 7.0


class Direction(IntEnum):
    """Motion directions; the values double as observation symbols."""

    UP = 0
    RIGHT = 1
    LEFT = 2
    DOWN = 3

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def parse(cls, text: str) -> "Direction":
        try:
            return cls[text.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown direction: {text!r}") from None


class MotionKind(Enum):
    NONE = "none"
    UP = "up"
    RIGHT = "right"
    LEFT = "left"
    DOWN = "down"
    HAND_ABSENT = "absent"

    @property
    def direction(self) -> Optional[Direction]:
        if self in (MotionKind.NONE, MotionKind.HAND_ABSENT):
            return None
        return Direction[self.name]

    @classmethod
    def from_direction(cls, direction: Direction) -> "MotionKind":
        return cls[direction.name]


@dataclass(frozen=True)
class MotionEvent:
    kind: MotionKind

    @property
    def is_motion(self) -> bool:
        return self.kind.direction is not None


@dataclass(frozen=True)
class TrackerState:
    anchor: Optional[Tuple[float, float]] = None
    radius: float = REST_RADIUS
    moving: bool = False


def extract_hand(mask: BinaryMask, min_area: float) -> Optional[Blob]:
    """Largest component if it reaches `min_area`; ties go to the earlier component."""
    best = None
    for blob in connected_components(mask):
        if best is None or blob.area > best.area:
            best = blob
    if best is None or best.area < min_area:
        return None
    return best


def quantize_motion(prev_anchor: Tuple[float, float], curr: Tuple[float, float]) -> Direction:
    dx = prev_anchor[0] - curr[0]
    dy = prev_anchor[1] - curr[1]
    if dx == 0 and dy == 0:
        raise ValueError("no displacement to quantise")
    # |dy| >= |dx| also covers dx == 0 and |slope| == 1
    if abs(dy) >= abs(dx):
        return Direction.UP if dy > 0 else Direction.DOWN
    return Direction.LEFT if dx > 0 else Direction.RIGHT


def track(state: TrackerState, hand: Optional[Blob], rest_radius: float = REST_RADIUS,
          moving_radius: float = MOVING_RADIUS) -> Tuple[TrackerState, MotionEvent]:
    if hand is None:
        return TrackerState(radius=rest_radius), MotionEvent(MotionKind.HAND_ABSENT)

    if state.anchor is None:
        # first sighting only fixes the anchor
        return TrackerState(anchor=hand.centroid, radius=rest_radius), MotionEvent(MotionKind.NONE)

    distance = math.dist(state.anchor, hand.centroid)
    if distance <= state.radius:
        # noise: anchor deliberately left where it was
        return TrackerState(anchor=state.anchor, radius=rest_radius, moving=False), MotionEvent(MotionKind.NONE)

    direction = quantize_motion(state.anchor, hand.centroid)
    logger.debug(f"Hand moved {direction.label}: {distance:.1f}px > {state.radius}px")
    new_state = TrackerState(anchor=hand.centroid, radius=moving_radius, moving=True)
    return new_state, MotionEvent(MotionKind.from_direction(direction))
