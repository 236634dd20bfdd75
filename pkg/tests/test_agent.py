import numpy as np
import pytest

from app.agents.actor_critic import ActorCritic
from app.env import FeatureMode, Featurizer, RewardKernel
from app.errors import ContractViolation, NumericalError
from app.nn_core import MlpParams
from app.replay import PerConfig, ReplayBuffer


def snapshot(params: MlpParams):
    return [a.copy() for a in params.arrays()]


def bitwise_equal(params: MlpParams, saved) -> bool:
    return all(np.array_equal(a, b) for a, b in zip(params.arrays(), saved))


def identity_critic() -> MlpParams:
    # Q(s, a) = relu(a + 10) - 10 = a on the actor's codomain
    return MlpParams(
        [np.array([[0.0], [1.0]]), np.array([[1.0]])],
        [np.array([10.0]), np.array([-10.0])],
    )


def test_hand_set_actor_matches_tanh_of_hand_network():
    agent = ActorCritic(state_dim=1, actor_hidden=(1,), critic_hidden=(1,))
    agent.actor = MlpParams([np.array([[2.0]]), np.array([[3.0]])], [np.array([-1.0]), np.array([0.5])])
    assert agent.act(np.array([1.0])) == pytest.approx(0.998178, abs=1e-6)
    assert agent.act(np.array([1.0])) == agent.act(np.array([1.0]))


def test_act_checks_state_dimension():
    agent = ActorCritic(state_dim=4, actor_hidden=(8,), critic_hidden=(8,))
    with pytest.raises(ContractViolation):
        agent.act(np.zeros(3))


def test_actions_are_bounded(rng):
    agent = ActorCritic(state_dim=2, actor_hidden=(16, 8), critic_hidden=(8,), seed=3)
    actions = agent.act_batch(rng.normal(scale=100.0, size=(500, 2)))
    assert np.all(np.abs(actions) < 1.0)


def test_exploration_without_noise_is_the_policy(rng):
    agent = ActorCritic(state_dim=1, actor_hidden=(8,), critic_hidden=(8,), exploration_noise_std=0.0)
    state = np.array([0.7])
    assert agent.act_explore(state, rng) == agent.act(state)


def test_exploration_noise_law():
    agent = ActorCritic(state_dim=1, actor_hidden=(8,), critic_hidden=(8,), exploration_noise_std=0.1)
    agent.actor = agent.actor.zeros_like()
    states = np.full((100_000, 1), 0.3)
    noise = agent.act_explore_batch(states, np.random.default_rng(17)) - agent.act_batch(states)
    assert -0.002 < noise.mean() < 0.002
    assert 0.095 < noise.std() < 0.105


def test_exploration_is_clipped_near_the_bound(rng):
    agent = ActorCritic(state_dim=1, actor_hidden=(4,), critic_hidden=(4,), exploration_noise_std=0.1)
    agent.actor = agent.actor.zeros_like()
    agent.actor.biases[-1][:] = np.arctanh(0.99)
    explored = agent.act_explore_batch(np.zeros((10_000, 1)), rng)
    assert np.all((explored >= -1.0) & (explored <= 1.0))
    assert explored.max() == 1.0
    single = [agent.act_explore(np.zeros(1), rng) for _ in range(200)]
    assert max(single) <= 1.0


def test_critic_loss_on_a_single_sample():
    agent = ActorCritic(state_dim=1, actor_hidden=(4,), critic_hidden=(4,))
    agent.critic = agent.critic.zeros_like()
    report = agent.critic_update(np.array([[0.2]]), np.array([0.1]), np.array([0.5]), np.array([1.0]))
    assert report.loss == pytest.approx(0.25)
    assert np.allclose(report.residuals, [0.5])


def test_critic_converges_on_a_fixed_sample():
    agent = ActorCritic(state_dim=1, actor_hidden=(4,), critic_hidden=(16, 16), critic_lr=1e-3, seed=1)
    s, a, r = np.array([[0.3]]), np.array([0.2]), np.array([0.7])
    for _ in range(5000):
        agent.critic_update(s, a, r)
    assert abs(agent.q_values(s, a)[0] - 0.7) < 1e-3


def test_critic_gradients_match_finite_differences(rng):
    agent = ActorCritic(state_dim=3, actor_hidden=(4,), critic_hidden=(6, 5), seed=2)
    states = rng.normal(size=(5, 3))
    actions = rng.uniform(-1, 1, size=5)
    rewards = rng.uniform(0, 1, size=5)
    weights = rng.uniform(0.2, 1.0, size=5)
    _, _, grads = agent.critic_gradients(states, actions, rewards, weights)

    h = 1e-5
    for analytic, arr in zip(grads.arrays(), agent.critic.arrays()):
        for idx in np.ndindex(arr.shape):
            orig = arr[idx]
            arr[idx] = orig + h
            up = agent.critic_gradients(states, actions, rewards, weights)[0]
            arr[idx] = orig - h
            down = agent.critic_gradients(states, actions, rewards, weights)[0]
            arr[idx] = orig
            fd = (up - down) / (2 * h)
            assert abs(analytic[idx] - fd) / max(1.0, abs(analytic[idx])) < 1e-5


def test_critic_rejects_non_finite_inputs_without_updating():
    agent = ActorCritic(state_dim=1, actor_hidden=(4,), critic_hidden=(4,))
    before = snapshot(agent.critic)
    with pytest.raises(NumericalError):
        agent.critic_update(np.array([[0.1]]), np.array([0.0]), np.array([np.nan]))
    assert bitwise_equal(agent.critic, before)
    assert agent.critic_opt.t == 0
    with pytest.raises(ContractViolation):
        agent.critic_update(np.zeros((2, 1)), np.zeros(2), np.zeros(2), np.ones(3))


def test_actor_loss_is_negative_mean_critic_value(rng):
    agent = ActorCritic(state_dim=2, actor_hidden=(8,), critic_hidden=(8,), seed=4)
    states = rng.normal(size=(10, 2))
    expected = -np.mean(agent.q_values(states, agent.act_batch(states)))
    assert agent.actor_update(states).loss == pytest.approx(expected, abs=1e-12)


def test_actor_is_unchanged_when_critic_ignores_the_action(rng):
    agent = ActorCritic(state_dim=2, actor_hidden=(8,), critic_hidden=(8,), seed=5)
    agent.critic.weights[0][-1, :] = 0.0
    before = snapshot(agent.actor)
    agent.actor_update(rng.normal(size=(16, 2)))
    assert bitwise_equal(agent.actor, before)


def test_actor_step_climbs_an_identity_critic(rng):
    agent = ActorCritic(state_dim=1, actor_hidden=(16, 8), critic_hidden=(1,), actor_lr=1e-3, seed=6)
    agent.critic = identity_critic()
    states = rng.uniform(-1, 1, size=(32, 1))
    assert np.allclose(agent.q_values(states, np.full(32, 0.25)), 0.25)
    before = agent.act_batch(states).mean()
    agent.actor_update(states)
    assert agent.act_batch(states).mean() > before


def test_updates_never_touch_the_other_network(rng):
    agent = ActorCritic(state_dim=2, actor_hidden=(8,), critic_hidden=(8,), seed=8)
    states = rng.normal(size=(12, 2))
    actor_before = snapshot(agent.actor)
    agent.critic_update(states, rng.uniform(-1, 1, 12), rng.uniform(0, 1, 12))
    assert bitwise_equal(agent.actor, actor_before)

    critic_before = snapshot(agent.critic)
    agent.actor_update(states)
    assert bitwise_equal(agent.critic, critic_before)


def test_train_step_without_per_uses_unit_weights(rng, monkeypatch):
    agent = ActorCritic(state_dim=1, actor_hidden=(8,), critic_hidden=(8,))
    seen = []
    original = agent.critic_update

    def spy(states, actions, rewards, weights=None):
        seen.append(np.array(weights))
        return original(states, actions, rewards, weights)

    monkeypatch.setattr(agent, "critic_update", spy)
    buffer = ReplayBuffer(PerConfig(capacity=64))
    xs = rng.uniform(-3, 3, size=16)
    agent.train_step(buffer, RewardKernel(), xs, np.sin(xs), Featurizer(), per_enabled=False, beta=0.4, rng=rng, batch_size=8)
    assert len(seen) == 1 and np.array_equal(seen[0], np.ones(8))
    assert np.all(buffer.tree.leaves()[:16] == 1.0)


def test_train_step_with_per_refreshes_priorities(rng):
    agent = ActorCritic(state_dim=4, actor_hidden=(8,), critic_hidden=(8,))
    buffer = ReplayBuffer(PerConfig(capacity=64))
    xs = rng.uniform(-3, 3, size=16)
    featurizer = Featurizer(FeatureMode.POSITIONAL, 4)
    report = agent.train_step(buffer, RewardKernel(), xs, np.sin(xs), featurizer, per_enabled=True, beta=0.4, rng=rng, batch_size=8)
    assert np.any(buffer.tree.leaves()[:16] != 1.0)
    assert np.isfinite([report.critic_loss, report.actor_loss, report.mean_batch_reward]).all()
    assert 0.0 < report.mean_batch_reward <= 1.0


def test_train_step_grows_buffer_until_capacity(rng):
    agent = ActorCritic(state_dim=1, actor_hidden=(8,), critic_hidden=(8,))
    buffer = ReplayBuffer(PerConfig(capacity=100))
    sizes = []
    for _ in range(4):
        xs = rng.uniform(-3, 3, size=32)
        agent.train_step(buffer, RewardKernel(), xs, np.sin(xs), Featurizer(), per_enabled=True, beta=0.4, rng=rng, batch_size=16)
        sizes.append(len(buffer))
    assert sizes == [32, 64, 96, 100]


def test_updates_per_step_runs_several_updates(rng):
    agent = ActorCritic(state_dim=1, actor_hidden=(8,), critic_hidden=(8,))
    buffer = ReplayBuffer(PerConfig(capacity=64))
    xs = rng.uniform(-3, 3, size=8)
    agent.train_step(
        buffer, RewardKernel(), xs, np.sin(xs), Featurizer(),
        per_enabled=False, beta=0.4, rng=rng, batch_size=8, updates_per_step=3,
    )
    assert agent.critic_opt.t == 3 and agent.actor_opt.t == 3


def test_actor_save_and_load(tmp_path, rng):
    agent = ActorCritic(state_dim=2, actor_hidden=(8, 4), critic_hidden=(8,), seed=1)
    path = tmp_path / "actor.npz"
    agent.save(path)

    other = ActorCritic(state_dim=2, actor_hidden=(8, 4), critic_hidden=(8,), seed=2)
    other.load_actor(path)
    states = rng.normal(size=(6, 2))
    assert np.array_equal(other.act_batch(states), agent.act_batch(states))

    with pytest.raises(ContractViolation):
        ActorCritic(state_dim=2, actor_hidden=(5, 4), critic_hidden=(8,)).load_actor(path)
    with pytest.raises(ContractViolation):
        ActorCritic(state_dim=2, actor_hidden=(8, 4, 2), critic_hidden=(8,)).load_actor(path)
