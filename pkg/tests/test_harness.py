import math

import numpy as np
import pytest

from app.agents.actor_critic import ActorCritic, UpdateReport
from app.env import FeatureMode, Featurizer, RewardKernel, featurize_batch, sample_dataset
from app.errors import ConfigError, ContractViolation, NumericalError
from app.services.harness import (
    METRIC_COLUMNS,
    EvaluationTable,
    build_agent,
    error_at_extrema,
    evaluate,
    make_grid,
    run_stage,
    worst_cell_ratio,
)
from app.services.presets import StageConfig, stage_preset

PI = math.pi


class SinePredictor:
    def act_batch(self, states):
        return np.sin(states[:, 0])


class ZeroPredictor:
    def act_batch(self, states):
        return np.zeros(states.shape[0])


def test_stage_one_preset():
    cfg = stage_preset(1)
    assert cfg.stage_id == "1"
    assert (cfg.train_lo, cfg.train_hi) == (-PI, PI)
    assert (cfg.eval_lo, cfg.eval_hi) == (-2 * PI, 2 * PI)
    assert cfg.actor_hidden == (128, 64) and cfg.critic_hidden == (128, 64)
    assert cfg.per_enabled is False and cfg.featurizer == "raw"
    assert (cfg.n_samples, cfg.batch_size, cfg.epochs) == (1000, 64, 500)
    assert (cfg.actor_lr, cfg.critic_lr) == (1e-4, 1e-3)
    assert (cfg.sigma_reward, cfg.exploration_noise_std, cfg.noise_std) == (0.2, 0.1, 0.1)


@pytest.mark.parametrize(
    "stage,hidden,featurizer",
    [(2, (128, 64), "raw"), (3, (256, 128, 64), "raw"), (4, (256, 128, 64), "pe")],
)
def test_wide_range_presets(stage, hidden, featurizer):
    cfg = stage_preset(stage)
    assert (cfg.train_lo, cfg.train_hi) == (-5 * PI, 5 * PI)
    assert (cfg.eval_lo, cfg.eval_hi) == (-6 * PI, 6 * PI)
    assert cfg.actor_hidden == hidden and cfg.critic_hidden == hidden
    assert cfg.per_enabled is True and cfg.featurizer == featurizer
    assert (cfg.per_alpha, cfg.per_beta_start, cfg.per_beta_end) == (0.6, 0.4, 1.0)


def test_stage_four_features():
    cfg = stage_preset(4)
    assert cfg.feature_spec == Featurizer(FeatureMode.POSITIONAL, 16)
    assert cfg.feature_spec.dim == 16
    assert cfg.reward_kernel == RewardKernel(0.2)


def test_unknown_stage_is_a_config_error():
    with pytest.raises(ConfigError):
        stage_preset(5)
    with pytest.raises(ConfigError):
        stage_preset("x")


def test_preset_overrides_are_validated():
    assert stage_preset(2, seed=9).seed == 9
    with pytest.raises(ValueError):
        stage_preset(4, pe_dim=5)
    with pytest.raises(ValueError):
        stage_preset(1, train_lo=1.0, train_hi=0.0)
    with pytest.raises(ValueError):
        StageConfig(unknown_knob=1)


def test_raw_presets_scale_x_by_training_half_width():
    assert stage_preset(1).feature_spec == Featurizer(FeatureMode.RAW, 16, PI)
    assert stage_preset(2).feature_spec.input_scale == 5 * PI
    assert stage_preset(3, raw_input_scale=1.0).feature_spec.input_scale == 1.0
    states = featurize_batch(stage_preset(2).feature_spec, np.array([-5 * PI, 0.0, 5 * PI]))
    assert np.allclose(states[:, 0], [-1.0, 0.0, 1.0])


def saturated_fraction(cfg: StageConfig, seeds=range(10)) -> float:
    grid = make_grid(cfg.train_lo, cfg.train_hi, 401)
    states = featurize_batch(cfg.feature_spec, grid)
    return float(np.mean([np.mean(np.abs(build_agent(cfg, s).act_batch(states)) > 0.99) for s in seeds]))


@pytest.mark.parametrize("stage", [1, 2, 3])
def test_untrained_raw_actor_is_not_saturated_on_the_training_range(stage):
    assert saturated_fraction(stage_preset(stage)) < 0.05


def test_unscaled_wide_range_saturates_the_untrained_actor():
    assert saturated_fraction(stage_preset(2, raw_input_scale=1.0)) > 0.2


def test_make_grid():
    grid = make_grid(-6 * PI, 6 * PI, 1201)
    assert grid.shape == (1201,)
    assert grid[0] == -6 * PI and grid[-1] == 6 * PI
    assert np.ptp(np.diff(grid)) < 1e-12
    with pytest.raises(ContractViolation):
        make_grid(0.0, 1.0, 1)
    with pytest.raises(ContractViolation):
        make_grid(1.0, 1.0, 10)


def test_oracle_predictor_scores_perfectly():
    table = evaluate(SinePredictor(), Featurizer(), make_grid(-2 * PI, 2 * PI, 401))
    assert table.mse == pytest.approx(0.0, abs=1e-24)
    assert np.all(table.reward == 1.0)


def test_zero_predictor_scores_half():
    table = evaluate(ZeroPredictor(), Featurizer(), make_grid(-2 * PI, 2 * PI, 1201))
    assert table.mse == pytest.approx(0.5, abs=1e-3)
    assert np.array_equal(table.abs_err, np.abs(np.sin(table.x)))


def test_evaluation_has_one_row_per_grid_point():
    agent = ActorCritic(state_dim=16, actor_hidden=(8,), critic_hidden=(8,))
    table = evaluate(agent, Featurizer(FeatureMode.POSITIONAL, 16), make_grid(-6 * PI, 6 * PI, 1201))
    assert all(len(getattr(table, c)) == 1201 for c in ("x", "y_true", "y_pred", "abs_err", "reward"))
    assert np.all(np.abs(table.y_pred) < 1.0)


def test_mse_between_restricts_to_range():
    x = make_grid(-2.0, 2.0, 5)
    table = EvaluationTable(x, np.zeros(5), np.array([1.0, 1.0, 0.0, 0.0, 0.0]), np.array([1.0, 1.0, 0, 0, 0]), np.ones(5))
    assert table.mse_between(-2.0, -1.0) == 1.0
    assert table.mse_between(0.0, 2.0) == 0.0
    with pytest.raises(ContractViolation):
        table.mse_between(5.0, 6.0)


def test_error_at_extrema():
    x = make_grid(-2 * PI, 2 * PI, 1201)
    y = np.sin(x)
    table = EvaluationTable(x, y, np.zeros_like(x), np.abs(y), np.ones_like(x))
    assert error_at_extrema(table, -2 * PI, 2 * PI) == pytest.approx(1.0, abs=1e-6)


def test_worst_cell_ratio():
    x = make_grid(0.0, 2 * PI, 401)
    err = (x < PI / 2).astype(float)
    table = EvaluationTable(x, np.zeros_like(x), err, err, np.ones_like(x))
    assert worst_cell_ratio(table, 0.0, 2 * PI) == pytest.approx(401 / err.sum())
    flat = EvaluationTable(x, np.zeros_like(x), np.full_like(x, 0.3), np.full_like(x, 0.3), np.ones_like(x))
    assert worst_cell_ratio(flat, 0.0, 2 * PI) == pytest.approx(1.0)


def test_run_stage_produces_metrics_and_predictions(tiny_config):
    run = run_stage(tiny_config)
    assert [m.epoch for m in run.metrics] == [0, 1, 2]
    assert len(run.evaluation.x) == tiny_config.eval_points
    assert run.final_eval_mse == run.metrics[-1].eval_mse
    assert len(run.dataset) == tiny_config.n_samples
    assert run.wall_clock_s > 0
    for row in run.metrics:
        values = [getattr(row, c) for c in METRIC_COLUMNS]
        assert all(math.isfinite(v) for v in values)


def test_run_stage_is_deterministic(tiny_config):
    a, b = run_stage(tiny_config), run_stage(tiny_config)
    assert a.metrics == b.metrics
    assert np.array_equal(a.evaluation.y_pred, b.evaluation.y_pred)
    assert np.array_equal(a.dataset.xs, b.dataset.xs)
    c = run_stage(tiny_config.model_copy(update={"seed": 8}))
    assert not np.array_equal(a.evaluation.y_pred, c.evaluation.y_pred)


def test_zero_epochs_still_evaluates(tiny_config):
    run = run_stage(tiny_config.model_copy(update={"epochs": 0}))
    assert run.metrics == []
    assert len(run.evaluation.x) == tiny_config.eval_points


def test_run_stage_uses_supplied_dataset(tiny_config):
    data = sample_dataset(-1.0, 1.0, 40, 0.0, seed=0)
    run = run_stage(tiny_config, dataset=data)
    assert run.dataset is data


def test_one_epoch_is_ceil_n_over_batch_train_steps(monkeypatch):
    calls = []

    def fake_step(self, buffer, kernel, xs, ys, *args, **kwargs):
        calls.append(len(xs))
        return UpdateReport(0.0, 0.0, 0.5, 0.0)

    monkeypatch.setattr(ActorCritic, "train_step", fake_step)
    run_stage(stage_preset(1, epochs=1, actor_hidden=(8,), critic_hidden=(8,), eval_points=11))
    assert len(calls) == 16
    assert sum(calls) == 1000 and calls[-1] == 1000 - 15 * 64


def test_non_finite_metrics_abort_the_run(monkeypatch, tiny_config):
    def nan_step(self, *args, **kwargs):
        return UpdateReport(float("nan"), 0.0, 0.5, 0.0)

    monkeypatch.setattr(ActorCritic, "train_step", nan_step)
    with pytest.raises(NumericalError):
        run_stage(tiny_config)


def record_train_steps(monkeypatch):
    seen = []

    def spy_step(self, buffer, kernel, xs, ys, featurizer, **kwargs):
        seen.append(kwargs)
        return UpdateReport(0.0, 0.0, 0.5, 0.0)

    monkeypatch.setattr(ActorCritic, "train_step", spy_step)
    return seen


def test_run_stage_anneals_beta_per_epoch_and_forwards_flags(monkeypatch):
    seen = record_train_steps(monkeypatch)
    cfg = stage_preset(
        2, n_samples=64, batch_size=32, epochs=5, actor_hidden=(8,), critic_hidden=(8,), eval_points=11,
        per_beta_start=0.2, per_beta_end=0.6, is_weighted_critic=False, updates_per_step=2,
    )
    run_stage(cfg)
    assert len(seen) == 10
    first_of_epoch = [kw["beta"] for kw in seen[::2]]
    assert first_of_epoch == pytest.approx([0.2, 0.3, 0.4, 0.5, 0.6])
    assert [kw["beta"] for kw in seen[1::2]] == first_of_epoch
    for kw in seen:
        assert kw["per_enabled"] is True
        assert kw["is_weighted_critic"] is False
        assert kw["updates_per_step"] == 2
        assert kw["batch_size"] == 32


def test_run_stage_forwards_uniform_replay_for_stage_one(monkeypatch):
    seen = record_train_steps(monkeypatch)
    run_stage(stage_preset(1, epochs=2, n_samples=64, actor_hidden=(8,), critic_hidden=(8,), eval_points=11))
    assert len(seen) == 2
    assert all(kw["per_enabled"] is False and kw["updates_per_step"] == 1 for kw in seen)
    assert [kw["beta"] for kw in seen] == pytest.approx([0.4, 1.0])
