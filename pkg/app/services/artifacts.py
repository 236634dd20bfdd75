import logging
from dataclasses import asdict
from pathlib import Path

import pandas as pd

from app.config_file import dump_config, parse_config
from app.env import save_dataset_csv
from app.errors import ContractViolation
from app.services.harness import METRIC_COLUMNS, PREDICTION_COLUMNS, EvaluationTable, RunArtifacts
from app.services.presets import StageConfig

logger = logging.getLogger(__name__)

METRICS_FILE = "metrics.csv"
PREDICTIONS_FILE = "predictions.csv"
CONFIG_FILE = "config.txt"
DATASET_FILE = "dataset.csv"
ACTOR_FILE = "actor.npz"


def evaluation_frame(table: EvaluationTable) -> pd.DataFrame:
    return pd.DataFrame({col: getattr(table, col) for col in PREDICTION_COLUMNS})


def write_run(artifacts: RunArtifacts, out_dir: Path) -> Path:
    """Write a self-describing run directory: config snapshot, metrics, predictions, data, actor."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    (out_dir / CONFIG_FILE).write_text(dump_config(artifacts.config), encoding="utf-8")
    metrics = pd.DataFrame([asdict(row) for row in artifacts.metrics], columns=list(METRIC_COLUMNS))
    metrics.to_csv(out_dir / METRICS_FILE, index=False)
    evaluation_frame(artifacts.evaluation).to_csv(out_dir / PREDICTIONS_FILE, index=False)
    save_dataset_csv(artifacts.dataset, out_dir / DATASET_FILE)
    if artifacts.agent is not None:
        artifacts.agent.save(out_dir / ACTOR_FILE)

    logger.info("Wrote run artifacts to %s", out_dir)
    return out_dir


def _read_csv(path: Path, columns) -> pd.DataFrame:
    if not path.is_file():
        raise ContractViolation(f"Missing run artifact: {path}")
    frame = pd.read_csv(path, float_precision="round_trip")
    if list(frame.columns) != list(columns):
        raise ContractViolation(f"{path}: expected columns {','.join(columns)}, got {','.join(frame.columns)}")
    return frame


def load_metrics(run_dir: Path) -> pd.DataFrame:
    return _read_csv(Path(run_dir) / METRICS_FILE, METRIC_COLUMNS)


def load_predictions(run_dir: Path) -> pd.DataFrame:
    return _read_csv(Path(run_dir) / PREDICTIONS_FILE, PREDICTION_COLUMNS)


def load_run_config(run_dir: Path) -> StageConfig:
    path = Path(run_dir) / CONFIG_FILE
    if not path.is_file():
        raise ContractViolation(f"Missing run artifact: {path}")
    return parse_config(path)
