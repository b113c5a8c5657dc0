import logging
import os
from pathlib import Path
from typing import Literal, Optional

from dotenv import dotenv_values, load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .errors import ConfigError

logger = logging.getLogger(__name__)

# Load environment variables from .env in the working directory
load_dotenv(override=False)

ENV_PREFIX = "ISLR_"

# Streaming service defaults
HOST = os.getenv("ISLR_HOST", "0.0.0.0")
PORT = int(os.getenv("ISLR_PORT", "7010"))

DEFAULT_GRID_SWEEP = ("5x5", "10x10", "10x15", "15x15", "15x20", "20x20")


class PipelineConfig(BaseModel):
    """Every tunable of the recognition pipeline, with its owning module's bounds."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    # grid_features
    grid: str = "10x10"
    # knn_classifier
    k: int = Field(5, ge=1)
    knn_backend: Literal["brute", "kd_tree"] = "kd_tree"
    # imaging
    se_radius: int = Field(1, ge=1)
    morph_iterations: int = Field(1, ge=0)
    # hand_tracker
    min_area_fraction: float = Field(0.005, ge=0.0, le=1.0)
    rest_radius: float = Field(20.0, gt=0.0)
    moving_radius: float = Field(7.0, gt=0.0)
    # gesture_hmm
    debounce: int = Field(3, ge=1)
    reject_margin: float = Field(2.0, ge=0.0)
    hmm_max_iter: int = Field(200, ge=1)
    hmm_tol: float = Field(1e-6, gt=0.0)
    emission_floor: float = Field(1e-6, gt=0.0, lt=0.01)
    # face
    face_provider: Literal["none", "annotation", "heuristic", "hog"] = "none"
    face_annotations: Optional[str] = None
    face_model: Optional[str] = None
    face_threshold: float = 0.0
    face_width_scale: float = Field(1.2, gt=0.0)
    face_height_scale: float = Field(1.6, gt=0.0)
    pyramid_scale: float = Field(1.25, gt=1.0)
    window_stride: int = Field(8, ge=1)
    # evaluation
    test_fraction: float = Field(0.3, gt=0.0, lt=1.0)
    seed: int = 0

    @field_validator("grid")
    @classmethod
    def _check_grid(cls, value: str) -> str:
        parts = value.lower().split("x")
        if len(parts) != 2 or not all(p.strip().isdigit() and int(p) >= 1 for p in parts):
            raise ValueError(f"grid must look like MxN with M,N >= 1, got {value!r}")
        return f"{int(parts[0])}x{int(parts[1])}"

    @property
    def grid_spec(self):
        from .grid_features import GridSpec
        return GridSpec.parse(self.grid)


def _env_overrides() -> dict:
    overrides = {}
    for name in PipelineConfig.model_fields:
        value = os.getenv(f"{ENV_PREFIX}{name.upper()}")
        if value is not None:
            overrides[name] = value.strip()
    return overrides


def load_config(path=None, **overrides) -> PipelineConfig:
    """
    Build a PipelineConfig from defaults, an optional flat `key = value` file,
    ISLR_* environment variables and explicit overrides (in that order).
    """
    values = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        file_values = dotenv_values(path)
        unknown = set(file_values) - set(PipelineConfig.model_fields)
        if unknown:
            raise ConfigError(f"{path}: unknown config keys: {', '.join(sorted(unknown))}")
        values.update({k: v for k, v in file_values.items() if v is not None and v != ""})
        logger.info(f"Loaded {len(file_values)} config values from {path}")

    values.update(_env_overrides())
    values.update({k: v for k, v in overrides.items() if v is not None})

    try:
        return PipelineConfig(**values)
    except ValidationError as e:
        raise ConfigError(f"invalid pipeline configuration: {e}") from e
