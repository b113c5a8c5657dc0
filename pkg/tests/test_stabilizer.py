import numpy as np

from isl_recognizer.config import PipelineConfig
from isl_recognizer.face import FaceBox
from isl_recognizer.grid_features import extract_features
from isl_recognizer.hand_tracker import MotionKind
from isl_recognizer.imaging import Frame
from isl_recognizer.knn_classifier import LabeledSample, fit
from isl_recognizer.persistence import ModelSet
from isl_recognizer.pipeline import RecognitionPipeline, hand_from_frame
from isl_recognizer.stabilizer import StabilizerState, stabilize

SKIN = (180, 90, 60)


def _face_at(cx, cy, half=10):
    return FaceBox((cx - half, cy - half, cx + half, cy + half))


def test_shifts_follow_the_face_center():
    frame = Frame.blank(200, 200)
    state = StabilizerState()
    shifts = []
    for cx in (100, 110, 100):
        _, state = stabilize(frame, _face_at(cx, 100), state)
        shifts.append(state.last_shift)
    assert shifts == [(0, 0), (-10, 0), (0, 0)]
    assert state.reference_center == (100.0, 100.0)


def test_translation_moves_content_back():
    pixels = np.zeros((50, 50, 3), dtype=np.uint8)
    pixels[20, 30] = SKIN
    state = StabilizerState()
    _, state = stabilize(Frame(pixels), _face_at(25, 25), state)

    moved = np.zeros_like(pixels)
    moved[23, 34] = SKIN
    out, state = stabilize(Frame(moved), _face_at(29, 28), state)
    assert state.last_shift == (-4, -3)
    assert tuple(out.pixels[20, 30]) == SKIN


def test_missing_first_face_disables_the_segment():
    frame = Frame.blank(20, 20)
    _, state = stabilize(frame, None, StabilizerState())
    assert state.disabled
    out, state = stabilize(frame, _face_at(5, 5, 2), state)
    assert out is frame
    assert state.disabled
    assert not state.reset().disabled


def test_lost_face_keeps_the_previous_shift():
    frame = Frame.blank(40, 40)
    state = StabilizerState()
    _, state = stabilize(frame, _face_at(20, 20), state)
    _, state = stabilize(frame, _face_at(22, 20), state)
    _, state = stabilize(frame, None, state)
    assert state.last_shift == (-2, 0)
    assert state.last_center == (22.0, 20.0)


def _jittered_scene(dx, dy, size=240):
    pixels = np.zeros((size, size, 3), dtype=np.uint8)
    pixels[20 + dy:50 + dy, 40 + dx:70 + dx] = SKIN
    yy, xx = np.mgrid[0:size, 0:size]
    pixels[(xx - 150 - dx) ** 2 + (yy - 150 - dy) ** 2 <= 20 ** 2] = SKIN
    return Frame(pixels), FaceBox((40 + dx, 20 + dy, 69 + dx, 49 + dy))


def test_camera_jitter_produces_no_motion(rng):
    cfg = PipelineConfig()
    still, _ = _jittered_scene(0, 0)
    features = extract_features(hand_from_frame(still, cfg), cfg.grid_spec)
    model = fit([LabeledSample("Fist", features)], k=1)

    scenes = [_jittered_scene(*rng.integers(-15, 16, size=2)) for _ in range(50)]
    faces = [face for _, face in scenes]
    pipeline = RecognitionPipeline(cfg, ModelSet(pose_model=model), lambda index, frame: faces[index])
    results = pipeline.run(frame for frame, _ in scenes)

    assert [r.motion for r in results] == [MotionKind.NONE] * 50
    assert all(r.pose == "Fist" for r in results)
