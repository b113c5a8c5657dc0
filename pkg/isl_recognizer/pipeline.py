"""
Per-frame recognition pipeline.

    face -> stabilize -> eliminate -> segment -> morphology -> extract
         -> track -> (still: features -> classify) -> symbol -> segmentation

One RecognitionPipeline per video stream; models are shared read-only.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Union

import pandas as pd

from .config import PipelineConfig
from .errors import ConfigError, IslrError, PipelineStageError
from .face import FaceBox, build_face_provider, eliminate_face
from .gesture_hmm import (FrameTuple, GestureDecision, GestureSegmenter, SymbolTable, classify_gesture)
from .grid_features import FeatureVector, extract_features
from .hand_tracker import MotionKind, TrackerState, extract_hand, track
from .imaging import BinaryMask, Blob, Frame, StructuringElement, clean_mask, segment_skin
from .knn_classifier import KnnResult, classify
from .persistence import ModelSet
from .stabilizer import StabilizerState, stabilize
from .utils import StageTimer, log_critical_debug

logger = logging.getLogger(__name__)

STAGES = ("face", "stabilize", "eliminate", "segment", "morphology", "extract",
          "track", "features", "classify", "symbol", "segmentation")

FaceProvider = Callable[[int, Frame], Optional[FaceBox]]


# ===== Shared training / inference helpers =====

def min_hand_area(cfg: PipelineConfig, width: int, height: int) -> float:
    return cfg.min_area_fraction * width * height


def hand_from_mask(mask: BinaryMask, cfg: PipelineConfig) -> Optional[Blob]:
    """Open/close the raw skin mask and keep the largest sufficiently large blob."""
    cleaned = clean_mask(mask, StructuringElement(cfg.se_radius), cfg.morph_iterations)
    return extract_hand(cleaned, min_hand_area(cfg, mask.width, mask.height))


def hand_from_frame(frame: Frame, cfg: PipelineConfig) -> Optional[Blob]:
    return hand_from_mask(segment_skin(frame), cfg)


def hand_from_image(image: Union[Frame, BinaryMask], cfg: PipelineConfig) -> Optional[Blob]:
    if isinstance(image, BinaryMask):
        return hand_from_mask(image, cfg)
    return hand_from_frame(image, cfg)


def features_from_image(image: Union[Frame, BinaryMask], cfg: PipelineConfig) -> Optional[FeatureVector]:
    """Grid features of the hand in a frame or a ready-made mask; None when no hand is found."""
    hand = hand_from_image(image, cfg)
    if hand is None:
        return None
    return extract_features(hand, cfg.grid_spec)


def features_from_frame(frame: Frame, cfg: PipelineConfig) -> Optional[FeatureVector]:
    return features_from_image(frame, cfg)


# ===== Results =====

@dataclass(frozen=True)
class FrameResult:
    frame_index: int
    motion: MotionKind
    pose: Optional[str] = None
    votes: int = 0
    symbol: Optional[int] = None
    frame_tuple: Optional[FrameTuple] = None
    gesture: Optional[GestureDecision] = None
    face: Optional[FaceBox] = None
    timings: Dict[str, float] = field(default_factory=dict)
    total_ms: float = 0.0

    @property
    def hand_present(self) -> bool:
        return self.motion is not MotionKind.HAND_ABSENT

    def result_line(self) -> str:
        """`POSE <label> <votes>`, `MOTION <dir>` or `NONE`."""
        if self.motion.direction is not None:
            return f"MOTION {self.motion.direction.label}"
        if self.pose is not None:
            return f"POSE {self.pose} {self.votes}"
        return "NONE"


def gesture_line(decision: GestureDecision) -> str:
    return f"GESTURE {decision.label} {decision.avg_loglik:.6f}"


# ===== Pipeline =====

class RecognitionPipeline:
    """Owns the per-stream state: stabiliser reference, tracker anchor and open gesture segment."""

    def __init__(self, cfg: PipelineConfig, models: ModelSet, face_provider: Optional[FaceProvider] = None):
        self.cfg = cfg
        self.models = models
        self.symbol_model = models.intermediate_model or models.pose_model
        if self.symbol_model is None:
            raise ConfigError("the pipeline needs a pose or intermediate-pose model")
        if models.bank is not None:
            self.symbols = models.bank.symbols
        else:
            self.symbols = SymbolTable(tuple(self.symbol_model.labels))
        self.face_provider = face_provider or build_face_provider(cfg)
        self.reset()

    def reset(self) -> None:
        self.frame_index = 0
        self._stabilizer = StabilizerState()
        self._tracker = TrackerState(radius=self.cfg.rest_radius)
        self._segmenter: GestureSegmenter[int] = GestureSegmenter(self.cfg.debounce)

    def _stage(self, timer: StageTimer, name: str, fn, *args):
        with timer.stage(name):
            try:
                return fn(*args)
            except IslrError as e:
                raise PipelineStageError(name, self.frame_index, e) from e
            except (ValueError, ArithmeticError, IndexError) as e:
                raise PipelineStageError(name, self.frame_index, e) from e

    def _classify_segment(self, segment: Sequence[int]) -> Optional[GestureDecision]:
        self._stabilizer = self._stabilizer.reset()
        if self.models.bank is None:
            logger.info(f"Segment of {len(segment)} frames closed; no gesture bank loaded")
            return None
        decision = classify_gesture(self.models.bank, segment)
        logger.info(f"Gesture segment of {len(segment)} frames -> {decision.label} (avg {decision.avg_loglik:.4f})")
        return decision

    def process_frame(self, frame: Frame) -> FrameResult:
        cfg = self.cfg
        timer = StageTimer()

        face = self._stage(timer, "face", self.face_provider, self.frame_index, frame)
        stabilized, self._stabilizer = self._stage(timer, "stabilize", stabilize, frame, face, self._stabilizer)

        def eliminate():
            if face is None:
                return stabilized
            dx, dy = (0, 0) if self._stabilizer.disabled else self._stabilizer.last_shift
            box = face.translated(dx, dy).clipped(stabilized.width, stabilized.height)
            if box is None:
                return stabilized
            return eliminate_face(stabilized, box, cfg.face_width_scale, cfg.face_height_scale)

        cleared = self._stage(timer, "eliminate", eliminate)
        raw_mask = self._stage(timer, "segment", segment_skin, cleared)
        mask = self._stage(timer, "morphology", clean_mask, raw_mask,
                           StructuringElement(cfg.se_radius), cfg.morph_iterations)
        hand = self._stage(timer, "extract", extract_hand, mask, min_hand_area(cfg, frame.width, frame.height))
        self._tracker, event = self._stage(timer, "track", track, self._tracker, hand,
                                           cfg.rest_radius, cfg.moving_radius)

        pose_result: Optional[KnnResult] = None
        symbol_result: Optional[KnnResult] = None
        if hand is not None and not event.is_motion:
            pose_model = self.models.pose_model or self.symbol_model

            def grid_features():
                # each model is queried at the grid it was trained with
                grids = {self.symbol_model.grid, pose_model.grid}
                return {grid: extract_features(hand, grid) for grid in grids}

            features = self._stage(timer, "features", grid_features)

            def classify_still():
                symbol_res = classify(self.symbol_model, features[self.symbol_model.grid])
                if pose_model is self.symbol_model:
                    return symbol_res, symbol_res
                return classify(pose_model, features[pose_model.grid]), symbol_res

            pose_result, symbol_result = self._stage(timer, "classify", classify_still)

        def emit_symbol():
            if hand is None:
                return None, None
            if event.is_motion:
                item = FrameTuple.moving(event.kind.direction)
                return self.symbols.motion_symbol(item.motion), item
            item = FrameTuple.still(symbol_result.label)
            return self.symbols.pose_symbol(item.pose), item

        symbol, frame_tuple = self._stage(timer, "symbol", emit_symbol)

        def bookkeeping():
            segment = self._segmenter.push(symbol)
            return self._classify_segment(segment) if segment else None

        gesture = self._stage(timer, "segmentation", bookkeeping)

        result = FrameResult(
            frame_index=self.frame_index,
            motion=event.kind,
            pose=pose_result.label if pose_result else None,
            votes=pose_result.votes if pose_result else 0,
            symbol=symbol,
            frame_tuple=frame_tuple,
            gesture=gesture,
            face=face,
            timings=dict(timer.timings),
            total_ms=timer.total_ms,
        )
        log_critical_debug(f"frame {self.frame_index}: {result.result_line()} symbol={symbol} "
                           f"total={result.total_ms:.2f}ms")
        self.frame_index += 1
        return result

    def finish(self) -> Optional[GestureDecision]:
        """Close the open segment (end of stream) and classify it."""
        segment = self._segmenter.flush()
        if not segment:
            return None
        return self._classify_segment(segment)

    def run(self, frames: Iterable[Frame]) -> List[FrameResult]:
        return [self.process_frame(f) for f in frames]


def classify_tuples(models: ModelSet, tuples: Iterable[Optional[FrameTuple]],
                    debounce: int = 3) -> List[GestureDecision]:
    """Classifier-independent path: segment a scripted tuple stream and score every segment."""
    if models.bank is None:
        raise ConfigError("classifying tuple streams needs a gesture bank")
    table = models.bank.symbols
    segmenter: GestureSegmenter[int] = GestureSegmenter(debounce)
    decisions = []
    for item in tuples:
        symbol = None if item is None else (
            table.motion_symbol(item.motion) if item.motion is not None else table.pose_symbol(item.pose))
        segment = segmenter.push(symbol)
        if segment:
            decisions.append(classify_gesture(models.bank, segment))
    tail = segmenter.flush()
    if tail:
        decisions.append(classify_gesture(models.bank, tail))
    return decisions


def timing_summary(results: Sequence[FrameResult]) -> pd.DataFrame:
    """Mean milliseconds per stage over `results`, in stage order, plus the frame total."""
    rows = []
    for stage in STAGES:
        values = [r.timings[stage] for r in results if stage in r.timings]
        if values:
            rows.append({"stage": stage, "frames": len(values), "mean_ms": sum(values) / len(values)})
    if results:
        rows.append({"stage": "total", "frames": len(results),
                     "mean_ms": sum(r.total_ms for r in results) / len(results)})
    return pd.DataFrame(rows, columns=["stage", "frames", "mean_ms"])
