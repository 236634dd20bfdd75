"""
The regression-as-bandit environment: noisy sine data, state features and the reward.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import pandas as pd

from app.errors import ContractViolation

logger = logging.getLogger(__name__)

_REWARD_FLOOR = np.finfo(np.float64).tiny


@dataclass(frozen=True, eq=False)
class Dataset:
    xs: np.ndarray
    ys: np.ndarray
    range_lo: float
    range_hi: float
    noise_std: float
    seed: Optional[int]

    def __post_init__(self) -> None:
        if self.xs.shape != self.ys.shape or self.xs.ndim != 1:
            raise ContractViolation(f"xs {self.xs.shape} and ys {self.ys.shape} must be equal-length vectors.")

    def __len__(self) -> int:
        return int(self.xs.shape[0])


def sample_dataset(
    range_lo: float,
    range_hi: float,
    n: int,
    noise_std: float,
    seed: int,
    target: Callable[[np.ndarray], np.ndarray] = np.sin,
) -> Dataset:
    if n <= 0:
        raise ContractViolation(f"Dataset size must be positive, got {n}.")
    if not range_lo < range_hi:
        raise ContractViolation(f"Inverted range [{range_lo}, {range_hi}].")
    if noise_std < 0:
        raise ContractViolation(f"noise_std must be >= 0, got {noise_std}.")

    rng = np.random.default_rng(seed)
    xs = rng.uniform(range_lo, range_hi, size=n)
    ys = target(xs) + rng.normal(0.0, noise_std, size=n)
    return Dataset(xs, ys, float(range_lo), float(range_hi), float(noise_std), seed)


def save_dataset_csv(dataset: Dataset, path: Path) -> None:
    pd.DataFrame({"x": dataset.xs, "y": dataset.ys}).to_csv(path, index=False)


def load_dataset_csv(path: Path) -> Dataset:
    """Load an ``x,y`` CSV. The declared range is the observed span of x."""
    frame = pd.read_csv(path, dtype="float64", float_precision="round_trip")
    if list(frame.columns) != ["x", "y"]:
        raise ContractViolation(f"{path}: expected header 'x,y', got {','.join(frame.columns)}.")
    if frame.empty:
        raise ContractViolation(f"{path}: no rows.")
    xs = frame["x"].to_numpy()
    ys = frame["y"].to_numpy()
    logger.info("Loaded %d samples from %s", len(xs), path)
    return Dataset(xs, ys, float(xs.min()), float(xs.max()), float("nan"), None)


class FeatureMode(str, enum.Enum):
    RAW = "raw"
    POSITIONAL = "pe"


@dataclass(frozen=True)
class Featurizer:
    """
    ``input_scale`` divides x in raw mode, so a training range of [-L, L] reaches
    the networks as [-1, 1]. Positional encoding ignores it.
    """

    mode: FeatureMode = FeatureMode.RAW
    pe_dim: int = 16
    input_scale: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", FeatureMode(self.mode))
        if self.mode is FeatureMode.POSITIONAL:
            _check_pe_dim(self.pe_dim)
        if not (np.isfinite(self.input_scale) and self.input_scale > 0):
            raise ContractViolation(f"input_scale must be positive and finite, got {self.input_scale}.")

    @property
    def dim(self) -> int:
        return self.pe_dim if self.mode is FeatureMode.POSITIONAL else 1


def _check_pe_dim(pe_dim: int) -> None:
    if pe_dim < 2 or pe_dim % 2:
        raise ContractViolation(f"Positional encoding size must be even and >= 2, got {pe_dim}.")


def positional_encode(x: float | np.ndarray, pe_dim: int) -> np.ndarray:
    """
    sin/cos pairs at frequencies 1, 2, 4, ... : component 2k is sin(2^k x) and
    component 2k+1 is cos(2^k x). Accepts a scalar (returns shape (pe_dim,))
    or an array of inputs (returns shape (..., pe_dim)).
    """
    _check_pe_dim(pe_dim)
    x = np.asarray(x, dtype=np.float64)
    angles = x[..., None] * 2.0 ** np.arange(pe_dim // 2)
    out = np.empty(x.shape + (pe_dim,))
    out[..., 0::2] = np.sin(angles)
    out[..., 1::2] = np.cos(angles)
    return out


def featurize(f: Featurizer, x: float) -> np.ndarray:
    return featurize_batch(f, np.asarray([x], dtype=np.float64))[0]


def featurize_batch(f: Featurizer, xs: np.ndarray) -> np.ndarray:
    xs = np.asarray(xs, dtype=np.float64).reshape(-1)
    if f.mode is FeatureMode.POSITIONAL:
        return positional_encode(xs, f.pe_dim)
    return (xs / f.input_scale).reshape(-1, 1)


@dataclass(frozen=True)
class RewardKernel:
    """
    Gaussian kernel on the prediction error. ``sigma_over``, when set, is the
    length-scale used for over-estimates (y_hat > y), so the two error
    directions can be tolerated differently.
    """

    sigma: float = 0.2
    sigma_over: Optional[float] = None

    def __post_init__(self) -> None:
        if not self.sigma > 0 or (self.sigma_over is not None and not self.sigma_over > 0):
            raise ContractViolation(f"Reward length-scales must be positive, got {self.sigma}/{self.sigma_over}.")


def gaussian_reward(k: RewardKernel, y_hat: float | np.ndarray, y: float | np.ndarray) -> float | np.ndarray:
    err = np.asarray(y, dtype=np.float64) - np.asarray(y_hat, dtype=np.float64)
    sigma = k.sigma if k.sigma_over is None else np.where(err < 0.0, k.sigma_over, k.sigma)
    # keep strictly positive under underflow
    reward = np.maximum(np.exp(-(err**2) / (2.0 * sigma**2)), _REWARD_FLOOR)
    return float(reward) if reward.ndim == 0 else reward
