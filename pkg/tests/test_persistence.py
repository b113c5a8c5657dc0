import math

import numpy as np
import pytest

from isl_recognizer.errors import HmmError, ModelFormatError, ModelVersionError
from isl_recognizer.gesture_hmm import GestureBank, HmmChain, SymbolTable, classify_gesture, forward_log_likelihood
from isl_recognizer.grid_features import FeatureVector, GridSpec
from isl_recognizer.knn_classifier import LabeledSample, classify, fit
from isl_recognizer.persistence import (BANK_FILE, POSE_MODEL_FILE, ModelSet, load_bank, load_knn, load_models,
                                        save_bank, save_knn, save_models)


@pytest.fixture
def knn_model(rng):
    grid = GridSpec(2, 2)
    samples = [LabeledSample(label, FeatureVector(rng.random(4), grid))
               for label in ["Fist", "Five", "L_Shape"] * 4]
    return fit(samples, k=3, backend="brute")


def test_knn_file_preserves_classification(tmp_path, knn_model, rng):
    path = tmp_path / "pose.knn"
    save_knn(knn_model, path)
    assert path.read_text().splitlines()[0] == "KNN v1 k=3 grid=2x2 backend=brute samples=12"
    loaded = load_knn(path)
    assert (loaded.k, loaded.grid, loaded.backend, len(loaded)) == (3, GridSpec(2, 2), "brute", 12)
    for _ in range(20):
        q = FeatureVector(rng.random(4), GridSpec(2, 2))
        assert classify(loaded, q).label == classify(knn_model, q).label


def test_truncated_knn_file_is_detected(tmp_path, knn_model):
    path = tmp_path / "pose.knn"
    save_knn(knn_model, path)
    lines = path.read_text().splitlines()
    path.write_text("\n".join(lines[:-2]) + "\n")
    with pytest.raises(ModelFormatError, match="unexpected end of file"):
        load_knn(path)


def test_malformed_knn_row_reports_its_line(tmp_path, knn_model):
    path = tmp_path / "pose.knn"
    save_knn(knn_model, path)
    lines = path.read_text().splitlines()
    lines[4] = "Fist 0.1 0.2 oops 0.4"
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(ModelFormatError) as err:
        load_knn(path)
    assert err.value.line_no == 5


def test_knn_version_is_checked(tmp_path):
    path = tmp_path / "pose.knn"
    path.write_text("KNN v2 k=1 grid=1x1\nFist 1\n")
    with pytest.raises(ModelVersionError):
        load_knn(path)
    path.write_text("HMMBANK v1 S=4\n")
    with pytest.raises(ModelFormatError):
        load_knn(path)


def test_knn_header_without_sample_count(tmp_path):
    path = tmp_path / "pose.knn"
    path.write_text("KNN v1 k=1 grid=1x2\nFist 1 0\nFive 0 1\n")
    model = load_knn(path)
    assert model.backend == "kd_tree"
    assert classify(model, FeatureVector([0.9, 0.2], GridSpec(1, 2))).label == "Fist"


def test_bank_file_preserves_scores(tmp_path, trained_bank):
    path = tmp_path / "gestures.hmm"
    save_bank(trained_bank, path)
    loaded = load_bank(path)
    assert loaded.names == trained_bank.names
    assert loaded.symbols == trained_bank.symbols
    assert loaded.reject_threshold == pytest.approx(trained_bank.reject_threshold, abs=1e-9)
    obs = [4, 4, 0, 0, 0, 5, 5]
    for name in trained_bank.names:
        before = forward_log_likelihood(trained_bank.chain(name), obs)
        after = forward_log_likelihood(loaded.chain(name), obs)
        assert after == pytest.approx(before, abs=1e-6)
    assert classify_gesture(loaded, obs).label == classify_gesture(trained_bank, obs).label


def test_bank_with_wrong_symbol_count_is_rejected(tmp_path, trained_bank):
    path = tmp_path / "gestures.hmm"
    save_bank(trained_bank, path)
    text = path.read_text().replace("S=13", "S=12", 1)
    path.write_text(text)
    with pytest.raises(ModelFormatError):
        load_bank(path)


@pytest.mark.parametrize("pose", ["Thumbs,Up", "Thumbs Up"])
def test_bank_with_unstorable_pose_labels_is_refused(tmp_path, pose):
    table = SymbolTable(("Fist", pose))
    chain = HmmChain("g", [1.0], [[1.0]], [np.full(table.size, 1.0 / table.size)])
    path = tmp_path / "gestures.hmm"
    with pytest.raises(HmmError, match="commas or whitespace"):
        save_bank(GestureBank((chain,), table), path)
    assert not path.exists()


def test_truncated_bank_is_detected(tmp_path, trained_bank):
    path = tmp_path / "gestures.hmm"
    save_bank(trained_bank, path)
    lines = path.read_text().splitlines()
    path.write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(ModelFormatError, match="unexpected end of file"):
        load_bank(path)


def test_model_directory(tmp_path, knn_model, trained_bank):
    save_models(ModelSet(pose_model=knn_model, bank=trained_bank), tmp_path / "models")
    assert (tmp_path / "models" / POSE_MODEL_FILE).exists()
    assert (tmp_path / "models" / BANK_FILE).exists()
    models = load_models(tmp_path / "models")
    assert models.intermediate_model is None
    assert len(models.pose_model) == 12
    assert math.isfinite(models.bank.reject_threshold)


def test_missing_model_directory(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_models(tmp_path / "nowhere")
    (tmp_path / "empty").mkdir()
    with pytest.raises(FileNotFoundError):
        load_models(tmp_path / "empty")


def test_saved_values_are_parseable_numbers(tmp_path, knn_model):
    path = tmp_path / "pose.knn"
    save_knn(knn_model, path)
    rows = [line.split()[1:] for line in path.read_text().splitlines()[1:]]
    values = np.array(rows, dtype=float)
    assert np.allclose(values, knn_model.matrix, atol=1e-8)
