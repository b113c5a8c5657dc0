import pytest

from isl_recognizer.config import PipelineConfig, load_config
from isl_recognizer.errors import ConfigError
from isl_recognizer.grid_features import GridSpec


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    for name in PipelineConfig.model_fields:
        monkeypatch.delenv(f"ISLR_{name.upper()}", raising=False)


def test_defaults():
    cfg = load_config()
    assert cfg == PipelineConfig()
    assert cfg.grid_spec == GridSpec(10, 10)
    assert (cfg.k, cfg.knn_backend, cfg.debounce) == (5, "kd_tree", 3)
    assert (cfg.rest_radius, cfg.moving_radius) == (20.0, 7.0)
    assert cfg.emission_floor == 1e-6


def test_file_then_env_then_overrides(tmp_path, monkeypatch):
    path = tmp_path / "islr.cfg"
    path.write_text("# tuned on the synthetic set\ngrid = 10X15\nk = 3\ndebounce = 4\n")
    cfg = load_config(path)
    assert (cfg.grid, cfg.k, cfg.debounce) == ("10x15", 3, 4)

    monkeypatch.setenv("ISLR_K", "7")
    assert load_config(path).k == 7
    assert load_config(path, k=9, grid=None).k == 9
    assert load_config(path, k=9, grid=None).grid == "10x15"


@pytest.mark.parametrize("overrides", [
    {"grid": "10"},
    {"grid": "0x5"},
    {"k": 0},
    {"knn_backend": "ball_tree"},
    {"emission_floor": 0.5},
    {"face_provider": "camera"},
])
def test_invalid_values(overrides):
    with pytest.raises(ConfigError):
        load_config(**overrides)


def test_unknown_keys_and_missing_files(tmp_path):
    path = tmp_path / "islr.cfg"
    path.write_text("grid = 5x5\nneighbours = 3\n")
    with pytest.raises(ConfigError, match="neighbours"):
        load_config(path)
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "missing.cfg")


def test_config_is_frozen():
    cfg = PipelineConfig()
    with pytest.raises(Exception):
        cfg.k = 3
    assert cfg.model_copy(update={"grid": "5x5"}).grid_spec == GridSpec(5, 5)
