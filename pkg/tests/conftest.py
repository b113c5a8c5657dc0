import numpy as np
import pytest

from isl_recognizer.config import PipelineConfig
from isl_recognizer.gesture_hmm import FrameTuple, encode, segment_stream, train_bank
from isl_recognizer.knn_classifier import LabeledSample, fit
from isl_recognizer.persistence import ModelSet
from isl_recognizer.pipeline import features_from_frame
from isl_recognizer.synth import (GESTURE_SCRIPTS, INTERMEDIATE_POSES, gesture_definitions, render_take,
                                  script_take)

GESTURES = ("Good Afternoon", "Good Night", "After")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def cfg():
    return PipelineConfig()


@pytest.fixture(scope="session")
def pose_frames():
    """One rendered still frame per intermediate pose, on the gesture canvas."""
    return {pose: render_take([FrameTuple.still(pose)])[0] for pose in INTERMEDIATE_POSES}


@pytest.fixture(scope="session")
def intermediate_model(pose_frames):
    cfg = PipelineConfig()
    samples = [LabeledSample(pose, features_from_frame(frame, cfg)) for pose, frame in pose_frames.items()]
    return fit(samples, k=1, backend="kd_tree")


@pytest.fixture(scope="session")
def definitions():
    return gesture_definitions(GESTURES)


@pytest.fixture(scope="session")
def trained_bank(definitions):
    table = definitions.symbol_table()
    rng = np.random.default_rng(7)
    sequences = {}
    for name in GESTURES:
        for _ in range(15):
            take = script_take(GESTURE_SCRIPTS[name], rng)
            for segment in segment_stream(take):
                sequences.setdefault(name, []).append(encode(segment, table))
    return train_bank(definitions, sequences, table)


@pytest.fixture(scope="session")
def models(intermediate_model, trained_bank):
    return ModelSet(intermediate_model=intermediate_model, bank=trained_bank)
