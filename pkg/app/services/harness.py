import logging
import math
import time
from dataclasses import dataclass, field
from typing import List, Optional, Protocol

import numpy as np

from app.agents.actor_critic import ActorCritic, UpdateReport
from app.config import settings
from app.env import Dataset, Featurizer, RewardKernel, featurize_batch, gaussian_reward, sample_dataset
from app.errors import ContractViolation, NumericalError
from app.replay import ReplayBuffer
from app.services.presets import StageConfig

logger = logging.getLogger(__name__)

METRIC_COLUMNS = ("epoch", "critic_loss", "actor_loss", "mean_reward", "train_mse", "eval_mse")
PREDICTION_COLUMNS = ("x", "y_true", "y_pred", "abs_err", "reward")


class Predictor(Protocol):
    def act_batch(self, states: np.ndarray) -> np.ndarray: ...


@dataclass
class MetricRow:
    epoch: int
    critic_loss: float
    actor_loss: float
    mean_reward: float
    train_mse: float
    eval_mse: float


@dataclass
class EvaluationTable:
    x: np.ndarray
    y_true: np.ndarray
    y_pred: np.ndarray
    abs_err: np.ndarray
    reward: np.ndarray

    @property
    def mse(self) -> float:
        return float(np.mean((self.y_pred - self.y_true) ** 2))

    def mse_between(self, lo: float, hi: float) -> float:
        """MSE restricted to grid points with lo <= x <= hi."""
        mask = (self.x >= lo) & (self.x <= hi)
        if not mask.any():
            raise ContractViolation(f"No grid points inside [{lo}, {hi}].")
        return float(np.mean((self.y_pred[mask] - self.y_true[mask]) ** 2))


@dataclass
class RunArtifacts:
    config: StageConfig
    metrics: List[MetricRow]
    evaluation: EvaluationTable
    wall_clock_s: float
    dataset: Dataset
    agent: Optional[ActorCritic] = field(default=None, repr=False)

    @property
    def final_eval_mse(self) -> float:
        return self.evaluation.mse


def make_grid(lo: float, hi: float, points: int) -> np.ndarray:
    if points < 2:
        raise ContractViolation(f"A grid needs at least 2 points, got {points}.")
    if not lo < hi:
        raise ContractViolation(f"Grid bounds must satisfy lo < hi, got [{lo}, {hi}].")
    return np.linspace(lo, hi, points)


def evaluate(
    agent: Predictor,
    featurizer: Featurizer,
    grid: np.ndarray,
    kernel: Optional[RewardKernel] = None,
) -> EvaluationTable:
    """Deterministic predictions on the grid, scored against noiseless sin(x)."""
    grid = np.asarray(grid, dtype=np.float64)
    if grid.size == 0:
        raise ContractViolation("Evaluation grid is empty.")
    y_true = np.sin(grid)
    y_pred = np.asarray(agent.act_batch(featurize_batch(featurizer, grid)), dtype=np.float64)
    reward = gaussian_reward(kernel or RewardKernel(), y_pred, y_true)
    return EvaluationTable(grid, y_true, y_pred, np.abs(y_pred - y_true), np.atleast_1d(reward))


def build_agent(config: StageConfig, seed: int) -> ActorCritic:
    return ActorCritic(
        state_dim=config.feature_spec.dim,
        actor_hidden=config.actor_hidden,
        critic_hidden=config.critic_hidden,
        actor_lr=config.actor_lr,
        critic_lr=config.critic_lr,
        exploration_noise_std=config.exploration_noise_std,
        seed=seed,
    )


def _mean(reports: List[UpdateReport], attr: str) -> float:
    return float(np.mean([getattr(r, attr) for r in reports])) if reports else float("nan")


def run_stage(config: StageConfig, dataset: Optional[Dataset] = None) -> RunArtifacts:
    """
    Train one actor-critic per ``config``. Each epoch is one shuffled pass over
    the dataset in minibatches of ``batch_size``, one train_step per minibatch;
    the replay buffer persists across epochs. The whole run is a function of
    ``config`` (and the dataset, when one is supplied).
    """
    started = time.perf_counter()
    data_seq, agent_seq, train_seq = np.random.SeedSequence(config.seed).spawn(3)
    if dataset is None:
        dataset = sample_dataset(
            config.train_lo,
            config.train_hi,
            config.n_samples,
            config.noise_std,
            seed=int(data_seq.generate_state(1)[0]),
        )
    featurizer = config.feature_spec
    kernel = config.reward_kernel
    per = config.per
    agent = build_agent(config, seed=int(agent_seq.generate_state(1)[0]))
    buffer = ReplayBuffer(per)
    rng = np.random.default_rng(train_seq)

    grid = make_grid(config.eval_lo, config.eval_hi, config.eval_points)
    train_states = featurize_batch(featurizer, dataset.xs)
    n = len(dataset)

    logger.info(
        "Starting stage %s run (seed=%d, %d samples, %d epochs, features=%s, PER=%s)",
        config.stage_id, config.seed, n, config.epochs, featurizer.mode.value, config.per_enabled,
    )

    metrics: List[MetricRow] = []
    for epoch in range(config.epochs):
        beta = per.beta_at(epoch, config.epochs)
        order = rng.permutation(n)
        reports: List[UpdateReport] = []
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            reports.append(
                agent.train_step(
                    buffer,
                    kernel,
                    dataset.xs[idx],
                    dataset.ys[idx],
                    featurizer,
                    per_enabled=config.per_enabled,
                    beta=beta,
                    rng=rng,
                    batch_size=config.batch_size,
                    updates_per_step=config.updates_per_step,
                    is_weighted_critic=config.is_weighted_critic,
                )
            )

        train_mse = float(np.mean((agent.act_batch(train_states) - dataset.ys) ** 2))
        row = MetricRow(
            epoch=epoch,
            critic_loss=_mean(reports, "critic_loss"),
            actor_loss=_mean(reports, "actor_loss"),
            mean_reward=_mean(reports, "mean_batch_reward"),
            train_mse=train_mse,
            eval_mse=evaluate(agent, featurizer, grid, kernel).mse,
        )
        if not all(math.isfinite(v) for v in (row.critic_loss, row.actor_loss, row.train_mse, row.eval_mse)):
            raise NumericalError(f"Non-finite metrics at epoch {epoch}: {row}")
        metrics.append(row)

        if (epoch + 1) % max(settings.log_every, 1) == 0 or epoch == config.epochs - 1:
            logger.info(
                "epoch %d/%d critic=%.5f actor=%.5f reward=%.4f eval_mse=%.5f beta=%.3f",
                epoch + 1, config.epochs, row.critic_loss, row.actor_loss, row.mean_reward, row.eval_mse, beta,
            )

    evaluation = evaluate(agent, featurizer, grid, kernel)
    wall = time.perf_counter() - started
    logger.info("Finished stage %s run in %.1fs, eval MSE %.5f", config.stage_id, wall, evaluation.mse)
    return RunArtifacts(config, metrics, evaluation, wall, dataset, agent)


def error_at_extrema(table: EvaluationTable, lo: float, hi: float, tol: float = 0.05) -> float:
    """Largest |error| at grid points within ``tol`` of a sine peak or trough inside [lo, hi]."""
    offset = (table.x - math.pi / 2) / math.pi
    distance = np.abs(offset - np.round(offset)) * math.pi
    mask = (distance <= tol) & (table.x >= lo) & (table.x <= hi)
    if not mask.any():
        raise ContractViolation(f"No sine extrema on the grid inside [{lo}, {hi}].")
    return float(table.abs_err[mask].max())


def worst_cell_ratio(table: EvaluationTable, lo: float, hi: float, width: float = math.pi / 2) -> float:
    """Highest per-cell mean |error| over the global mean |error|, cells of ``width`` from ``lo``."""
    mask = (table.x >= lo) & (table.x <= hi)
    if not mask.any():
        raise ContractViolation(f"No grid points inside [{lo}, {hi}].")
    x, err = table.x[mask], table.abs_err[mask]
    cells = np.minimum(np.floor((x - lo) / width).astype(int), int(math.ceil((hi - lo) / width)) - 1)
    global_mean = float(err.mean())
    if global_mean == 0.0:
        return 1.0
    return max(float(err[cells == c].mean()) for c in np.unique(cells)) / global_mean
