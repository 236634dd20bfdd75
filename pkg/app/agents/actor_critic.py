from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from app.env import Featurizer, RewardKernel, featurize_batch, gaussian_reward
from app.errors import ContractViolation, NumericalError
from app.nn_core import (
    AdamState,
    MlpParams,
    MlpSpec,
    OutputActivation,
    adam_step,
    backward,
    concat_columns,
    forward,
    init_params,
)
from app.replay import ReplayBuffer, TransitionBatch

logger = logging.getLogger(__name__)


@dataclass
class CriticReport:
    loss: float
    residuals: np.ndarray  # |Q(s, a) - r| per sample, before the step


@dataclass
class ActorReport:
    loss: float


@dataclass
class UpdateReport:
    critic_loss: float
    actor_loss: float
    mean_batch_reward: float
    mean_abs_critic_residual: float


class ActorCritic:
    """
    Deterministic actor pi(s) in (-1, 1) and critic Q(s, a) trained as a
    one-step contextual bandit: the critic regresses the immediate reward
    (no bootstrapping, no target networks) and the actor ascends the critic.
    """

    def __init__(
        self,
        state_dim: int,
        actor_hidden: Sequence[int] = (128, 64),
        critic_hidden: Sequence[int] = (128, 64),
        actor_lr: float = 1e-4,
        critic_lr: float = 1e-3,
        exploration_noise_std: float = 0.1,
        seed: int = 0,
    ):
        if exploration_noise_std < 0:
            raise ContractViolation(f"exploration_noise_std must be >= 0, got {exploration_noise_std}.")
        actor_seed, critic_seed = (
            int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(2)
        )
        self.actor_spec = MlpSpec(state_dim, tuple(actor_hidden), 1, OutputActivation.TANH)
        self.critic_spec = MlpSpec(state_dim + 1, tuple(critic_hidden), 1, OutputActivation.LINEAR)
        self.actor = init_params(self.actor_spec, actor_seed)
        self.critic = init_params(self.critic_spec, critic_seed)
        self.actor_opt = AdamState.for_params(self.actor, lr=actor_lr)
        self.critic_opt = AdamState.for_params(self.critic, lr=critic_lr)
        self.exploration_noise_std = float(exploration_noise_std)

    @property
    def state_dim(self) -> int:
        return self.actor_spec.input_dim

    def act_batch(self, states: np.ndarray) -> np.ndarray:
        out, _ = forward(self.actor_spec, self.actor, states)
        return out[:, 0]

    def act(self, state: np.ndarray) -> float:
        state = np.asarray(state, dtype=np.float64)
        if state.shape != (self.state_dim,):
            raise ContractViolation(f"Expected a state of length {self.state_dim}, got shape {state.shape}.")
        return float(self.act_batch(state.reshape(1, -1))[0])

    def act_explore_batch(self, states: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        actions = self.act_batch(states)
        if self.exploration_noise_std > 0:
            actions = actions + rng.normal(0.0, self.exploration_noise_std, size=actions.shape)
        # stored actions stay inside the actor's codomain
        return np.clip(actions, -1.0, 1.0)

    def act_explore(self, state: np.ndarray, rng: np.random.Generator) -> float:
        base = self.act(state)
        if self.exploration_noise_std > 0:
            base += rng.normal(0.0, self.exploration_noise_std)
        return float(np.clip(base, -1.0, 1.0))

    def q_values(self, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        out, _ = forward(self.critic_spec, self.critic, concat_columns(states, actions))
        return out[:, 0]

    def critic_gradients(
        self,
        states: np.ndarray,
        actions: np.ndarray,
        rewards: np.ndarray,
        weights: np.ndarray,
    ) -> tuple[float, np.ndarray, MlpParams]:
        """Loss mean_i w_i (Q(s_i, a_i) - r_i)^2, signed residuals and its parameter gradients."""
        q, trace = forward(self.critic_spec, self.critic, concat_columns(states, actions))
        residual = q[:, 0] - rewards
        batch = trace.batch_size
        loss = float(np.mean(weights * residual**2))
        grads, _ = backward(
            self.critic_spec, self.critic, trace, (2.0 / batch * weights * residual).reshape(-1, 1)
        )
        return loss, residual, grads

    def critic_update(
        self,
        states: np.ndarray,
        actions: np.ndarray,
        rewards: np.ndarray,
        weights: Optional[np.ndarray] = None,
    ) -> CriticReport:
        states = np.asarray(states, dtype=np.float64)
        actions = np.asarray(actions, dtype=np.float64).reshape(-1)
        rewards = np.asarray(rewards, dtype=np.float64).reshape(-1)
        weights = np.ones_like(rewards) if weights is None else np.asarray(weights, dtype=np.float64).reshape(-1)
        if rewards.size == 0:
            raise ContractViolation("critic_update needs a non-empty batch.")
        if not (states.shape[0] == actions.size == rewards.size == weights.size):
            raise ContractViolation("states, actions, rewards and weights must have the same length.")
        for name, arr in (("states", states), ("actions", actions), ("rewards", rewards), ("weights", weights)):
            if not np.isfinite(arr).all():
                raise NumericalError(f"Non-finite {name} passed to critic_update.")

        loss, residual, grads = self.critic_gradients(states, actions, rewards, weights)
        if not np.isfinite(loss):
            raise NumericalError(f"Critic loss is not finite ({loss}).")
        adam_step(self.critic, grads, self.critic_opt)
        return CriticReport(loss=loss, residuals=np.abs(residual))

    def actor_gradients(self, states: np.ndarray) -> tuple[float, MlpParams]:
        """Loss -mean_i Q(s_i, pi(s_i)), differentiated through the critic's action input."""
        actions, actor_trace = forward(self.actor_spec, self.actor, states)
        q, critic_trace = forward(self.critic_spec, self.critic, concat_columns(states, actions))
        batch = critic_trace.batch_size
        loss = -float(np.mean(q))
        _, critic_input_grads = backward(
            self.critic_spec, self.critic, critic_trace, np.full_like(q, -1.0 / batch)
        )
        grads, _ = backward(self.actor_spec, self.actor, actor_trace, critic_input_grads[:, -1:])
        return loss, grads

    def actor_update(self, states: np.ndarray) -> ActorReport:
        states = np.asarray(states, dtype=np.float64)
        if states.ndim != 2 or states.shape[0] == 0:
            raise ContractViolation("actor_update needs a non-empty (batch, state_dim) matrix.")
        loss, grads = self.actor_gradients(states)
        if not np.isfinite(loss):
            raise NumericalError(f"Actor loss is not finite ({loss}).")
        adam_step(self.actor, grads, self.actor_opt)
        return ActorReport(loss=loss)

    def train_step(
        self,
        buffer: ReplayBuffer,
        kernel: RewardKernel,
        xs: np.ndarray,
        ys: np.ndarray,
        featurizer: Featurizer,
        per_enabled: bool,
        beta: float,
        rng: np.random.Generator,
        batch_size: int = 64,
        updates_per_step: int = 1,
        is_weighted_critic: bool = True,
    ) -> UpdateReport:
        """
        Interact on one minibatch of dataset points (explore, reward, store),
        then run ``updates_per_step`` critic-then-actor updates on batches
        drawn from the buffer.
        """
        xs = np.asarray(xs, dtype=np.float64).reshape(-1)
        ys = np.asarray(ys, dtype=np.float64).reshape(-1)
        states = featurize_batch(featurizer, xs)
        actions = self.act_explore_batch(states, rng)
        rewards = gaussian_reward(kernel, actions, ys)
        buffer.push_batch(TransitionBatch(states, xs, actions, np.atleast_1d(rewards), ys))

        critic_losses, actor_losses, residual_means = [], [], []
        for _ in range(updates_per_step):
            if per_enabled:
                indices, batch, weights = buffer.sample(batch_size, beta, rng)
                if not is_weighted_critic:
                    weights = np.ones_like(weights)
            else:
                indices, batch, weights = buffer.sample_uniform(batch_size, rng)

            critic = self.critic_update(batch.states, batch.actions, batch.rewards, weights)
            if per_enabled:
                buffer.update_priorities(indices, critic.residuals)
            actor = self.actor_update(batch.states)

            critic_losses.append(critic.loss)
            actor_losses.append(actor.loss)
            residual_means.append(float(critic.residuals.mean()))

        return UpdateReport(
            critic_loss=float(np.mean(critic_losses)),
            actor_loss=float(np.mean(actor_losses)),
            mean_batch_reward=float(np.mean(rewards)),
            mean_abs_critic_residual=float(np.mean(residual_means)),
        )

    def save(self, path) -> None:
        """Write the actor parameters (enough to reproduce predictions) to an .npz file."""
        arrays = {f"w{i}": w for i, w in enumerate(self.actor.weights)}
        arrays.update({f"b{i}": b for i, b in enumerate(self.actor.biases)})
        np.savez(path, **arrays)

    def load_actor(self, path) -> None:
        depth = self.actor_spec.depth
        with np.load(path) as data:
            try:
                params = MlpParams(
                    [data[f"w{i}"].astype(np.float64) for i in range(depth)],
                    [data[f"b{i}"].astype(np.float64) for i in range(depth)],
                )
            except KeyError as exc:
                raise ContractViolation(f"{path}: missing actor array {exc}.") from exc
        params.check_shapes(self.actor_spec)
        self.actor = params
