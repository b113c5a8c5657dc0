import socket

import pandas as pd
import pytest

from isl_recognizer.cli import main
from isl_recognizer.persistence import load_models


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("dataset")
    code = main(["synth", "--output", str(root), "--seed", "2", "--classes", "2", "--per-class", "5",
                 "--gestures", "Good Afternoon,After", "--takes", "3", "--test-takes", "2", "--impostors", "2"])
    assert code == 0
    return root


@pytest.fixture(scope="module")
def model_dir(dataset, tmp_path_factory):
    models = tmp_path_factory.mktemp("models")
    assert main(["train-pose", "--dataset", str(dataset), "--models", str(models), "--k", "3"]) == 0
    assert main(["train-gestures", "--dataset", str(dataset), "--models", str(models), "--tuples"]) == 0
    return models


def test_synth_layout(dataset):
    assert sorted(p.name for p in (dataset / "poses").iterdir()) == ["Fist", "Five"]
    assert len(list((dataset / "gestures" / "After").iterdir())) == 3
    assert (dataset / "gestures_test" / "WRONG").is_dir()
    assert (dataset / "gestures.txt").exists()


def test_training_writes_all_models(model_dir):
    models = load_models(model_dir)
    assert models.pose_model.labels == ["Fist", "Five"]
    assert models.pose_model.k == 3
    assert models.intermediate_model is not None
    assert [chain.name for chain in models.bank.chains] == ["Good Afternoon", "After"]


def test_classify_take_from_tuples(dataset, model_dir, capsys):
    take = dataset / "gestures_test" / "After" / "take_00"
    assert main(["classify-take", str(take), "--models", str(model_dir), "--tuples"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines
    assert all(line.startswith("GESTURE ") or line == "NONE" for line in lines)


def test_evaluate_gestures_csv(dataset, model_dir, tmp_path):
    out = tmp_path / "gestures.csv"
    assert main(["evaluate-gestures", "--dataset", str(dataset), "--models", str(model_dir), "--tuples",
                 "--csv", str(out)]) == 0
    confusion = pd.read_csv(out, index_col=0)
    assert "WRONG" in confusion.columns
    assert confusion.to_numpy().sum() == 2 * 2 + 2


def test_evaluate_poses_and_sweep(dataset, tmp_path, capsys):
    out = tmp_path / "poses.csv"
    assert main(["evaluate-poses", "--dataset", str(dataset), "--k", "1", "--seed", "0", "--csv", str(out)]) == 0
    assert "accuracy:" in capsys.readouterr().out
    assert (tmp_path / "poses_classes.csv").exists()

    sweep = tmp_path / "sweep.csv"
    assert main(["sweep-grid", "--dataset", str(dataset), "--grids", "5x5,10x10", "--k", "1",
                 "--csv", str(sweep)]) == 0
    assert pd.read_csv(sweep)["grid"].tolist() == ["5x5", "10x10"]


def test_export_features(dataset, tmp_path):
    out = tmp_path / "features.csv"
    assert main(["export-features", "--dataset", str(dataset), "--output", str(out), "--grid", "5x5"]) == 0
    frame = pd.read_csv(out)
    assert len(frame) == 10
    assert frame.shape[1] == 1 + 25


def test_classify_image(dataset, model_dir, capsys):
    image = sorted((dataset / "poses" / "Five").iterdir())[0]
    assert main(["classify-image", str(image), "--models", str(model_dir)]) == 0
    out = capsys.readouterr().out.strip()
    assert out.startswith("POSE ")


def test_missing_models_fail(dataset, tmp_path):
    assert main(["evaluate-gestures", "--dataset", str(dataset), "--models", str(tmp_path / "none")]) == 1


def test_unknown_flag_exits():
    with pytest.raises(SystemExit):
        main(["train-pose", "--bogus"])


def test_serve_on_a_busy_port_fails_cleanly(model_dir):
    with socket.socket() as busy:
        busy.bind(("127.0.0.1", 0))
        busy.listen()
        port = busy.getsockname()[1]
        assert main(["serve", "--models", str(model_dir), "--host", "127.0.0.1", "--port", str(port)]) == 1
