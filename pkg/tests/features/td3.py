"""Tests for the replay buffer, exploration noise, the TD3 agent and training."""

# pylint: disable=missing-docstring
import csv
import math
import os
import tempfile
from pathlib import Path

import numpy as np
import torch

from dwrfoil._config import RLConfig
from dwrfoil._env import AirfoilEnv
from dwrfoil._geometry import DeformAction
from dwrfoil._td3 import (
    TRACE_COLUMNS,
    X_MARGIN,
    Batch,
    OUNoise,
    ReplayBuffer,
    TD3Agent,
    Transition,
    opposite_retry,
    ou_noise_step,
    save_trace,
    save_training,
    select_action,
    td3_update,
    train,
)
from dwrfoil.exceptions import SamplingError
from tests.utils import assert_raises, surrogate_config

N_CONTROL = 4
STATE_DIM = 4 * N_CONTROL
MAX_STEP = 0.005


def _transition(reward: float, seed: int = 0, done: bool = False) -> Transition:
    rng = np.random.default_rng(seed)
    return Transition(
        rng.standard_normal(STATE_DIM),
        np.ones(1),
        np.array([0.5, 0.001, -0.001]),
        reward,
        rng.standard_normal(STATE_DIM),
        done,
    )


def _filled_buffer(rewards, capacity: int = 64) -> ReplayBuffer:
    buffer = ReplayBuffer(capacity, STATE_DIM, rng=np.random.default_rng(0))
    for i, reward in enumerate(rewards):
        buffer.push(_transition(reward, seed=i))
    return buffer


def _agent(**overrides) -> TD3Agent:
    torch.manual_seed(0)
    config = RLConfig(**overrides)
    return TD3Agent(N_CONTROL, MAX_STEP, config, rng=np.random.default_rng(1))


def _tensors_equal(first, second) -> bool:
    return all(torch.equal(a, b) for a, b in zip(first.parameters(), second.parameters()))


class TD3TestCase:
    def test_buffer_fifo_eviction(self):
        buffer = _filled_buffer([0.1, 0.2, 0.3, 0.4, 0.5], capacity=3)
        assert len(buffer) == 3
        assert sorted(buffer.live_rewards().tolist()) == [0.3, 0.4, 0.5]

    def test_buffer_tracks_best_after_eviction(self):
        buffer = _filled_buffer([5.0, 1.0, 2.0], capacity=3)
        assert buffer.best == 0
        buffer.push(_transition(0.5, seed=9))
        assert buffer.best == 2

    def test_sample_too_large(self):
        buffer = _filled_buffer([0.1, 0.2, 0.3])
        with assert_raises(SamplingError, "cannot sample 8 transitions from a buffer of 3"):
            buffer.sample(8)

    def test_sample_whole_buffer(self):
        buffer = _filled_buffer(np.linspace(-1.0, 1.0, 8))
        batch = buffer.sample(8)
        assert sorted(batch.indices.tolist()) == list(range(8))

    def test_sample_pools(self):
        rewards = np.random.default_rng(2).uniform(-1.0, 1.0, 40)
        rewards[7] = 5.0
        buffer = _filled_buffer(rewards)
        batch = buffer.sample(8)
        indices = batch.indices.tolist()
        assert len(set(indices)) == 8
        assert indices[:2] == [39, 38]
        assert indices[2] == 7
        assert np.array_equal(batch.rewards, buffer.rewards[batch.indices])

    def test_sample_keeps_one_best_for_small_batches(self):
        rewards = np.zeros(10)
        rewards[3] = 1.0
        buffer = ReplayBuffer(10, STATE_DIM, best_fraction=0.0, rng=np.random.default_rng(0))
        for i, reward in enumerate(rewards):
            buffer.push(_transition(reward, seed=i))
        assert 3 in buffer.sample(2).indices.tolist()

    def test_buffer_save_load(self):
        buffer = _filled_buffer([0.1, -0.2, 0.3, 0.05])
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "buffer.npz")
            buffer.save(path)
            loaded = ReplayBuffer.load(path)
        assert len(loaded) == 4
        assert loaded.best == buffer.best
        assert np.array_equal(loaded.states[:4], buffer.states[:4])
        assert np.array_equal(loaded.live_rewards(), buffer.live_rewards())

    def test_ou_step_without_diffusion(self):
        x = ou_noise_step(np.ones(3), 0.0, 0.15, 0.0, 1.0, np.random.default_rng(0))
        assert np.allclose(x, 0.85)
        still = ou_noise_step(np.zeros(3), 0.0, 0.15, 0.0, 1.0, np.random.default_rng(0))
        assert np.array_equal(still, np.zeros(3))

    def test_ou_stationary_variance(self):
        rng = np.random.default_rng(4)
        theta, sigma, dt = 0.5, 0.3, 0.1
        x = np.zeros(4)
        samples = np.empty((100_000, 4))
        for i in range(len(samples)):
            x = ou_noise_step(x, 0.0, theta, sigma, dt, rng)
            samples[i] = x
        expected = sigma**2 / (2.0 * theta)
        assert abs(np.var(samples[1000:]) - expected) <= 0.1 * expected

    def test_ou_noise_decays_to_mean(self):
        noise = OUNoise(3, np.random.default_rng(0), mu=0.2, theta=0.5, sigma=0.0)
        noise.state[:] = 1.0
        for _ in range(60):
            sample = noise.sample()
        assert np.allclose(sample, 0.2, atol=1e-12)
        noise.state[:] = 3.0
        noise.reset()
        assert np.array_equal(noise.state, np.full(3, 0.2))

    def test_random_action_bounds(self):
        agent = _agent()
        for _ in range(50):
            action, vector = select_action(agent, np.zeros(STATE_DIM), 1.0, 1.0)
            assert X_MARGIN <= action.x_target <= 1.0 - X_MARGIN
            assert abs(action.y_upper_change) <= MAX_STEP
            assert abs(action.y_lower_change) <= MAX_STEP
            assert vector[3:].sum() == 1.0

    def test_random_actions_ignore_actor(self):
        agents = []
        for seed in (0, 1):
            torch.manual_seed(seed)
            agents.append(TD3Agent(N_CONTROL, MAX_STEP, RLConfig(), rng=np.random.default_rng(5)))
        assert not _tensors_equal(agents[0].actor, agents[1].actor)
        state = np.random.default_rng(6).standard_normal(STATE_DIM)
        draws = [
            np.array([select_action(agent, state, 1.0, 1.0)[1] for _ in range(10_000)]) for agent in agents
        ]
        assert np.array_equal(draws[0], draws[1])
        assert abs(draws[0][:, 0].mean() - 0.5) < 0.015
        assert abs(draws[0][:, 1].mean()) < 0.03 * MAX_STEP

    def test_greedy_action_without_noise(self):
        agent = _agent()
        state = np.random.default_rng(3).standard_normal(STATE_DIM)
        _, vector = agent.select_action(state, 0.0, 0.0)
        assert np.allclose(vector, agent.clip(agent.policy(state)))

    def test_noisy_action_is_clipped(self):
        agent = _agent()
        for _ in range(20):
            action, _ = agent.select_action(np.zeros(STATE_DIM), 0.0, 100.0)
            action.validate(MAX_STEP)
            assert X_MARGIN <= action.x_target <= 1.0 - X_MARGIN

    def test_similar_action_keeps_position(self):
        agent = _agent()
        vector = np.array([0.4, 0.004, -0.002, 1.0])
        action, perturbed = agent.similar_action(vector)
        assert perturbed[0] == 0.4
        assert perturbed[3] == 1.0
        assert not np.array_equal(perturbed[1:3], vector[1:3])
        assert abs(action.y_upper_change) <= MAX_STEP

    def test_critic_targets_without_discount(self):
        agent = _agent()
        agent.discount = 0.0
        batch = _filled_buffer([0.1, -0.4, 0.7, 0.2]).sample(4)
        targets = agent.compute_critic_targets(batch)
        assert torch.allclose(targets[:, 0], torch.as_tensor(batch.rewards, dtype=targets.dtype))

    def test_critic_targets_at_episode_end(self):
        agent = _agent()
        buffer = ReplayBuffer(8, STATE_DIM, rng=np.random.default_rng(0))
        for i, reward in enumerate([0.3, -0.1, 0.25, 0.0]):
            buffer.push(_transition(reward, seed=i, done=True))
        batch = buffer.sample(4)
        targets = agent.compute_critic_targets(batch)
        assert torch.allclose(targets[:, 0], torch.as_tensor(batch.rewards, dtype=targets.dtype))

    def test_delayed_policy_update(self):
        agent = _agent(policy_delay=2)
        buffer = _filled_buffer(np.linspace(-0.5, 0.5, 16))
        actor_before = [p.detach().clone() for p in agent.actor.parameters()]
        first = td3_update(agent, buffer.sample(8))
        assert math.isnan(first.actor)
        assert all(torch.equal(a, b) for a, b in zip(agent.actor.parameters(), actor_before))
        assert _tensors_equal(agent.actor_target, agent.actor)
        second = td3_update(agent, buffer.sample(8))
        assert math.isfinite(second.actor)
        assert math.isfinite(second.critic1) and math.isfinite(second.critic2)
        assert not _tensors_equal(agent.actor_target, agent.actor)

    def test_twin_critics_stay_identical(self):
        agent = _agent()
        agent.critic2.load_state_dict(agent.critic1.state_dict())
        buffer = _filled_buffer(np.linspace(-0.5, 0.5, 16))
        for _ in range(3):
            losses = td3_update(agent, buffer.sample(8))
            assert losses.critic1 == losses.critic2
        assert _tensors_equal(agent.critic1, agent.critic2)

    def test_agent_save_load(self):
        agent = _agent()
        other = _agent()
        td3_update(agent, _filled_buffer(np.linspace(-0.5, 0.5, 16)).sample(8))
        with tempfile.TemporaryDirectory() as tmp:
            agent.save(tmp)
            assert sorted(os.listdir(tmp)) == ["actor.pt", "critics.pt", "targets.pt"]
            other.load(tmp)
        assert _tensors_equal(other.critic1, agent.critic1)
        assert _tensors_equal(other.actor_target, agent.actor_target)

    def test_batch_fields(self):
        batch = _filled_buffer([0.1, 0.2, 0.3, 0.4]).sample(4)
        assert isinstance(batch, Batch)
        assert batch.states.shape == (4, STATE_DIM)
        assert batch.params.shape == (4, 3)
        assert batch.actions.shape == (4, 1)

    def test_opposite_retry_switches_to_better_action(self):
        env = AirfoilEnv(surrogate_config())
        env.reset()
        buffer = ReplayBuffer(16, 4 * env.n_control)
        cached = env.snapshot()
        away = DeformAction(0.3, -0.004, 0.004, 0.4)
        vector = np.array([0.3, -0.004, 0.004, 1.0])
        first = env.step(away)
        assert first.reward < 0.0
        outcome = opposite_retry(env, cached, away, vector, first, buffer)
        assert outcome.switched
        assert outcome.result.reward > 0.0
        assert np.array_equal(outcome.vector, [0.3, 0.004, -0.004, 1.0])
        assert env.state is outcome.result.state
        assert len(buffer) == 1

    def test_opposite_retry_keeps_better_first(self):
        env = AirfoilEnv(surrogate_config())
        env.reset()
        buffer = ReplayBuffer(16, 4 * env.n_control)
        cached = env.snapshot()
        toward = DeformAction(0.3, 0.004, -0.004, 0.4)
        vector = np.array([0.3, 0.004, -0.004, 1.0])
        first = env.step(toward)
        outcome = opposite_retry(env, cached, toward, vector, first, buffer)
        assert not outcome.switched
        assert outcome.result is first
        assert outcome.opposite.reward < first.reward
        assert env.state is first.state

    def test_opposite_retry_both_infeasible(self):
        env = AirfoilEnv(surrogate_config())
        env.reset()
        buffer = ReplayBuffer(16, 4 * env.n_control)
        cached = env.snapshot()
        oversized = DeformAction(0.5, 0.01, -0.01, 0.4)
        vector = np.array([0.5, 0.01, -0.01, 1.0])
        first = env.step(oversized)
        buffer.push(Transition(cached.reduced, vector[3:], vector[:3], first.reward, first.state.reduced, first.done))
        outcome = opposite_retry(env, cached, oversized, vector, first, buffer)
        penalty = env.config.reward.penalty
        assert first.info["infeasible"] and outcome.opposite.info["infeasible"]
        assert not outcome.switched
        assert env.state.shape is cached.shape
        assert env.state.objective == cached.objective
        assert len(buffer) == 2
        assert buffer.live_rewards().tolist() == [penalty, penalty]

    def test_train_trace(self):
        config = surrogate_config()
        result = train(config)
        rl = config.rl
        executed = [row for row in result.trace if not row["retry_flag"]]
        warmup = rl.warmup_episodes * rl.warmup_steps
        assert len(executed) == warmup + rl.epochs * rl.steps_per_epoch
        assert all(row["epoch"] == 0 for row in executed[:8])
        assert set(result.trace[0]) == set(TRACE_COLUMNS)
        assert math.isclose(result.initial_objective, 1.0, rel_tol=1e-12)
        assert result.best_objective <= result.initial_objective
        assert len(result.buffer) == len(result.trace)

    def test_train_noise_decays(self):
        config = surrogate_config()
        trace = train(config).trace
        noise = {row["epoch"]: row["noise_coeff"] for row in trace if row["epoch"] >= 1}
        for epoch, value in noise.items():
            assert math.isclose(value, config.rl.noise_coeff * config.rl.decay ** (epoch - 1), rel_tol=1e-12)

    def test_train_is_deterministic(self):
        with tempfile.TemporaryDirectory() as tmp:
            paths = []
            for name in ("first.csv", "second.csv"):
                path = os.path.join(tmp, name)
                save_trace(train(surrogate_config()).trace, path)
                paths.append(path)
            texts = [Path(path).read_text(encoding="utf-8") for path in paths]
        assert texts[0] == texts[1]

    def test_save_training(self):
        config = surrogate_config(epochs=1)
        result = train(config)
        with tempfile.TemporaryDirectory() as tmp:
            save_training(result, config, tmp)
            save_trace(result.trace, os.path.join(tmp, "trace.csv"))
            names = sorted(os.listdir(tmp))
            with open(os.path.join(tmp, "trace.csv"), newline="", encoding="utf-8") as handle:
                header = next(csv.reader(handle))
        assert names == [
            "actor.pt",
            "buffer.npz",
            "config.txt",
            "critics.pt",
            "targets.pt",
            "trace.csv",
        ]
        assert tuple(header) == TRACE_COLUMNS
