import math
from typing import Any, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt, field_validator, model_validator

from app.env import FeatureMode, Featurizer, RewardKernel
from app.errors import ConfigError
from app.replay import PerConfig

PI = math.pi
STAGE_IDS = ("1", "2", "3", "4", "custom")


class StageConfig(BaseModel):
    """Complete, flat hyperparameter bundle for one experiment run."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    stage_id: str = Field("custom", description="Preset this config came from: 1..4 or 'custom'.")
    train_lo: float = -5 * PI
    train_hi: float = 5 * PI
    eval_lo: float = -6 * PI
    eval_hi: float = 6 * PI
    n_samples: PositiveInt = 1000
    noise_std: float = Field(0.1, ge=0.0)
    featurizer: Literal["raw", "pe"] = "pe"
    pe_dim: PositiveInt = 16
    raw_input_scale: Optional[PositiveFloat] = Field(
        None, description="Divisor for x in raw mode; empty means max(|train_lo|, |train_hi|)."
    )
    actor_hidden: Tuple[PositiveInt, ...] = (256, 128, 64)
    critic_hidden: Tuple[PositiveInt, ...] = (256, 128, 64)
    actor_lr: PositiveFloat = 1e-4
    critic_lr: PositiveFloat = 1e-3
    batch_size: PositiveInt = 64
    epochs: int = Field(500, ge=0)
    sigma_reward: PositiveFloat = 0.2
    sigma_reward_over: Optional[PositiveFloat] = Field(
        None, description="Length-scale for over-estimates; empty means symmetric."
    )
    exploration_noise_std: float = Field(0.1, ge=0.0)
    per_enabled: bool = True
    per_alpha: float = Field(0.6, ge=0.0)
    per_beta_start: float = Field(0.4, ge=0.0, le=1.0)
    per_beta_end: float = Field(1.0, ge=0.0, le=1.0)
    per_epsilon: PositiveFloat = 1e-3
    buffer_capacity: PositiveInt = 10_000
    is_weighted_critic: bool = True
    updates_per_step: PositiveInt = 1
    eval_points: int = Field(1201, ge=2)
    seed: int = 0

    @field_validator("stage_id", mode="before")
    @classmethod
    def _stage_id_text(cls, value: Any) -> str:
        text = str(value).strip().lower()
        if text not in STAGE_IDS:
            raise ValueError(f"must be one of {', '.join(STAGE_IDS)}")
        return text

    @field_validator("actor_hidden", "critic_hidden", mode="before")
    @classmethod
    def _comma_list(cls, value: Any) -> Any:
        if isinstance(value, str):
            parts = [p.strip() for p in value.split(",") if p.strip()]
            if not parts:
                raise ValueError("needs at least one hidden layer size")
            return tuple(parts)
        return value

    @field_validator("sigma_reward_over", "raw_input_scale", mode="before")
    @classmethod
    def _blank_is_none(cls, value: Any) -> Any:
        if isinstance(value, str) and not value.strip():
            return None
        return value

    @model_validator(mode="after")
    def _cross_field_checks(self) -> "StageConfig":
        if not self.train_lo < self.train_hi:
            raise ValueError("train_lo must be < train_hi")
        if not self.eval_lo < self.eval_hi:
            raise ValueError("eval_lo must be < eval_hi")
        if self.per_beta_start > self.per_beta_end:
            raise ValueError("per_beta_start must be <= per_beta_end")
        if self.featurizer == "pe" and self.pe_dim % 2:
            raise ValueError("pe_dim must be even")
        if not self.actor_hidden or not self.critic_hidden:
            raise ValueError("hidden layer lists must be non-empty")
        return self

    @property
    def feature_spec(self) -> Featurizer:
        mode = FeatureMode(self.featurizer)
        if mode is FeatureMode.POSITIONAL:
            return Featurizer(mode, self.pe_dim)
        scale = self.raw_input_scale or max(abs(self.train_lo), abs(self.train_hi))
        return Featurizer(mode, self.pe_dim, scale)

    @property
    def reward_kernel(self) -> RewardKernel:
        return RewardKernel(self.sigma_reward, self.sigma_reward_over)

    @property
    def per(self) -> PerConfig:
        return PerConfig(
            alpha=self.per_alpha,
            beta_start=self.per_beta_start,
            beta_end=self.per_beta_end,
            epsilon_priority=self.per_epsilon,
            capacity=self.buffer_capacity,
        )


_PRESETS = {
    1: dict(
        train_lo=-PI, train_hi=PI, eval_lo=-2 * PI, eval_hi=2 * PI,
        actor_hidden=(128, 64), critic_hidden=(128, 64), per_enabled=False, featurizer="raw",
    ),
    2: dict(actor_hidden=(128, 64), critic_hidden=(128, 64), per_enabled=True, featurizer="raw"),
    3: dict(actor_hidden=(256, 128, 64), critic_hidden=(256, 128, 64), per_enabled=True, featurizer="raw"),
    4: dict(actor_hidden=(256, 128, 64), critic_hidden=(256, 128, 64), per_enabled=True, featurizer="pe", pe_dim=16),
}


def stage_preset(stage_id: int, **overrides: Any) -> StageConfig:
    """
    The four stage presets. Shared values (1000 samples, batch 64, 500
    epochs, lr 1e-4 / 1e-3, sigma 0.2, exploration 0.1) are the StageConfig
    defaults; stages 2-4 train on [-5pi, 5pi] and evaluate on [-6pi, 6pi].
    Raw stages divide x by the training half-width unless raw_input_scale
    is given.
    """
    try:
        preset = _PRESETS[int(stage_id)]
    except (KeyError, ValueError, TypeError):
        raise ConfigError(f"Unknown stage {stage_id!r}; expected one of 1, 2, 3, 4.") from None
    return StageConfig(stage_id=str(int(stage_id)), **{**preset, **overrides})
