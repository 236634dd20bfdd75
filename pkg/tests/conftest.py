from pathlib import Path

import numpy as np
import pytest

from app.config_file import dump_config
from app.services.artifacts import write_run
from app.services.harness import run_stage
from app.services.presets import StageConfig, stage_preset


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_config() -> StageConfig:
    """A few-second run: small nets, small data, a handful of epochs."""
    return stage_preset(
        4,
        n_samples=96,
        batch_size=32,
        epochs=3,
        actor_hidden=(16, 8),
        critic_hidden=(16, 8),
        pe_dim=4,
        eval_points=61,
        buffer_capacity=256,
        seed=7,
    )


@pytest.fixture
def tiny_config_file(tmp_path: Path, tiny_config: StageConfig) -> Path:
    path = tmp_path / "tiny.txt"
    path.write_text(dump_config(tiny_config), encoding="utf-8")
    return path


@pytest.fixture
def run_dir(tmp_path: Path, tiny_config: StageConfig) -> Path:
    """A finished tiny run written to disk."""
    out = tmp_path / "run"
    write_run(run_stage(tiny_config), out)
    return out
