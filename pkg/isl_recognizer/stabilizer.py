import logging
import math
from dataclasses import dataclass, replace
from typing import Optional, Tuple

from .face import FaceBox
from .imaging import Frame, translate

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class StabilizerState:
    """
    Per-segment stabilisation reference.

    `reference_center` is fixed by the first frame of the segment that has a
    face; `disabled` is set when the segment starts without one.
    """

    reference_center: Optional[Tuple[float, float]] = None
    last_center: Optional[Tuple[float, float]] = None
    last_shift: Tuple[int, int] = (0, 0)
    disabled: bool = False
    started: bool = False

    def reset(self) -> "StabilizerState":
        return StabilizerState()


def _round_half_up(value: float) -> int:
    return int(math.floor(value + 0.5))


def stabilize(frame: Frame, current_face: Optional[FaceBox],
              state: StabilizerState) -> Tuple[Frame, StabilizerState]:
    """Translate the frame so the face stays at its reference position."""
    if not state.started:
        if current_face is None:
            logger.warning("No face on the first frame of the segment; stabilisation disabled")
            return frame, replace(state, started=True, disabled=True)
        center = current_face.center
        state = replace(state, started=True, reference_center=center, last_center=center, last_shift=(0, 0))
        return frame, state

    if state.disabled:
        return frame, state

    if current_face is None:
        # tracker lost the face: keep the previous shift
        dx, dy = state.last_shift
    else:
        cx, cy = current_face.center
        rx, ry = state.reference_center
        dx, dy = _round_half_up(rx - cx), _round_half_up(ry - cy)
        state = replace(state, last_center=(cx, cy), last_shift=(dx, dy))

    if dx == 0 and dy == 0:
        return frame, state
    return translate(frame, dx, dy), state
