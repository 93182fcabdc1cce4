"""TD3 agent, replay buffer, exploration noise and the training loop."""

import copy
import csv
import logging
import math
import threading
from pathlib import Path
from typing import Any, Dict, List, NamedTuple, Optional, Tuple, Union

import numpy as np
import torch

from dwrfoil._config import RLConfig, RunConfig
from dwrfoil._env import AirfoilEnv, EnvState, StepResult
from dwrfoil._geometry import AirfoilShape, DeformAction
from dwrfoil._nn import (
    DTYPE,
    N_PARAMS,
    Actor,
    Critic,
    backward,
    load_checkpoint,
    make_optimizer,
    optimizer_step,
    save_checkpoint,
    soft_update,
    state_width,
)
from dwrfoil.exceptions import SamplingError

logger = logging.getLogger(__name__)

X_MARGIN = 1e-3
TRACE_COLUMNS = (
    "episode",
    "epoch",
    "step",
    "t",
    "D",
    "reward",
    "cumreward",
    "noise_coeff",
    "epsilon",
    "critic1_loss",
    "critic2_loss",
    "actor_loss",
    "retry_flag",
    "infeasible_flag",
)

PathLike = Union[str, Path]


class Transition(NamedTuple):
    state: np.ndarray
    action: np.ndarray
    params: np.ndarray
    reward: float
    next_state: np.ndarray
    done: bool


class Batch(NamedTuple):
    states: np.ndarray
    actions: np.ndarray
    params: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    dones: np.ndarray
    indices: np.ndarray


class ReplayBuffer:
    """Bounded FIFO of transitions, sampled from recent, best and random pools.

    Push and sample hold an internal lock.
    """

    def __init__(
        self,
        capacity: int,
        state_dim: int,
        n_types: int = 1,
        recent_fraction: float = 0.25,
        best_fraction: float = 0.25,
        rng: Optional[np.random.Generator] = None,
    ) -> None:
        self.capacity = capacity
        self.recent_fraction = recent_fraction
        self.best_fraction = best_fraction
        self.rng = rng if rng is not None else np.random.default_rng()
        self.states = np.zeros((capacity, state_dim))
        self.actions = np.zeros((capacity, n_types))
        self.params = np.zeros((capacity, N_PARAMS))
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros((capacity, state_dim))
        self.dones = np.zeros(capacity, dtype=bool)
        self.stamps = np.zeros(capacity, dtype=np.int64)
        self.size = 0
        self.pushed = 0
        self.best = -1
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return self.size

    def push(self, transition: Transition) -> None:
        with self._lock:
            slot = self.pushed % self.capacity
            evicting_best = self.size == self.capacity and slot == self.best
            self.states[slot] = transition.state
            self.actions[slot] = transition.action
            self.params[slot] = transition.params
            self.rewards[slot] = transition.reward
            self.next_states[slot] = transition.next_state
            self.dones[slot] = transition.done
            self.stamps[slot] = self.pushed
            self.pushed += 1
            self.size = min(self.size + 1, self.capacity)
            if evicting_best:
                self.best = int(np.argmax(self.rewards[: self.size]))
            elif self.best < 0 or transition.reward > self.rewards[self.best]:
                self.best = slot

    def sample(self, batch_size: int) -> Batch:
        """Mix ``floor(recent * B)`` newest, at least one best and uniform random transitions.

        The pools never overlap, so a buffer holding exactly ``B`` transitions
        returns all of them.

        Raises:
            SamplingError: Fewer than ``batch_size`` transitions stored.
        """
        with self._lock:
            if batch_size < 1 or self.size < batch_size:
                raise SamplingError(f"cannot sample {batch_size} transitions from a buffer of {self.size}")
            n_recent = int(math.floor(self.recent_fraction * batch_size))
            n_best = min(max(1, int(math.floor(self.best_fraction * batch_size))), batch_size - n_recent)
            live = np.arange(self.size)
            recent = live[np.argsort(-self.stamps[: self.size], kind="stable")[:n_recent]]
            taken = np.zeros(self.size, dtype=bool)
            taken[recent] = True
            by_reward = np.argsort(-self.rewards[: self.size], kind="stable")
            by_reward = np.concatenate([[self.best], by_reward[by_reward != self.best]])
            best = by_reward[~taken[by_reward]][:n_best]
            taken[best] = True
            remaining = live[~taken]
            extra = self.rng.choice(remaining, batch_size - len(recent) - len(best), replace=False)
            idx = np.concatenate([recent, best, extra]).astype(int)
            return Batch(
                self.states[idx],
                self.actions[idx],
                self.params[idx],
                self.rewards[idx],
                self.next_states[idx],
                self.dones[idx],
                idx,
            )

    def live_rewards(self) -> np.ndarray:
        return self.rewards[: self.size].copy()

    def save(self, path: PathLike) -> None:
        with self._lock:
            np.savez(
                path,
                states=self.states[: self.size],
                actions=self.actions[: self.size],
                params=self.params[: self.size],
                rewards=self.rewards[: self.size],
                next_states=self.next_states[: self.size],
                dones=self.dones[: self.size],
                stamps=self.stamps[: self.size],
                meta=np.array([self.capacity, self.pushed, self.best]),
                fractions=np.array([self.recent_fraction, self.best_fraction]),
            )

    @classmethod
    def load(cls, path: PathLike, rng: Optional[np.random.Generator] = None) -> "ReplayBuffer":
        with np.load(path) as data:
            capacity, pushed, best = (int(v) for v in data["meta"])
            recent_fraction, best_fraction = (float(v) for v in data["fractions"])
            buffer = cls(
                capacity,
                data["states"].shape[1],
                data["actions"].shape[1],
                recent_fraction,
                best_fraction,
                rng,
            )
            size = len(data["rewards"])
            for name in ("states", "actions", "params", "rewards", "next_states", "dones", "stamps"):
                getattr(buffer, name)[:size] = data[name]
        buffer.size, buffer.pushed, buffer.best = size, pushed, best
        return buffer


def ou_noise_step(
    x: np.ndarray,
    mu: float,
    theta: float,
    sigma: float,
    dt: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """``x + theta (mu - x) dt + sigma sqrt(dt) N(0, 1)``."""
    x = np.asarray(x, dtype=float)
    return x + theta * (mu - x) * dt + sigma * math.sqrt(dt) * rng.standard_normal(x.shape)


class OUNoise:
    def __init__(
        self,
        size: int,
        rng: np.random.Generator,
        mu: float = 0.0,
        theta: float = 0.15,
        sigma: float = 0.2,
        dt: float = 1.0,
    ) -> None:
        self.mu = mu
        self.theta = theta
        self.sigma = sigma
        self.dt = dt
        self.rng = rng
        self.state = np.full(size, mu, dtype=float)

    def reset(self) -> None:
        self.state = np.full_like(self.state, self.mu)

    def sample(self) -> np.ndarray:
        self.state = ou_noise_step(self.state, self.mu, self.theta, self.sigma, self.dt, self.rng)
        return self.state.copy()


class Losses(NamedTuple):
    critic1: float
    critic2: float
    actor: float


class TD3Agent:
    """Actor, twin critics, their targets and optimizers.

    Action vectors are ``[x_target, dy_upper, dy_lower, type probabilities...]``.
    The critics see the displacements divided by ``max_step``.
    """

    def __init__(
        self,
        n_control: int,
        max_step: float,
        config: RLConfig,
        discount: float = 0.99,
        delta: float = 0.4,
        rng: Optional[np.random.Generator] = None,
    ) -> None:
        self.n_control = n_control
        self.max_step = max_step
        self.config = config
        self.discount = discount
        self.delta = delta
        self.rng = rng if rng is not None else np.random.default_rng()
        self.actor = Actor(n_control, max_step, n_types=config.n_types)
        self.critic1 = Critic(n_control, config.n_types)
        self.critic2 = Critic(n_control, config.n_types)
        self.actor_target = copy.deepcopy(self.actor)
        self.critic1_target = copy.deepcopy(self.critic1)
        self.critic2_target = copy.deepcopy(self.critic2)
        self.actor_optimizer = make_optimizer(self.actor, config.actor_lr)
        self.critic1_optimizer = make_optimizer(self.critic1, config.critic_lr)
        self.critic2_optimizer = make_optimizer(self.critic2, config.critic_lr)
        self.noise = OUNoise(N_PARAMS, self.rng, 0.0, config.ou_theta, config.ou_sigma, config.ou_dt)
        self.updates = 0
        self._scale = torch.tensor([1.0, 1.0 / max_step, 1.0 / max_step] + [1.0] * config.n_types, dtype=DTYPE)

    @property
    def state_dim(self) -> int:
        return state_width(self.n_control)

    @property
    def action_dim(self) -> int:
        return N_PARAMS + self.config.n_types

    def normalize(self, actions: torch.Tensor) -> torch.Tensor:
        return actions * self._scale

    def policy(self, state: np.ndarray) -> np.ndarray:
        with torch.no_grad():
            output = self.actor(torch.as_tensor(state, dtype=DTYPE)[None, :])
        return output[0].numpy()

    def clip(self, vector: np.ndarray) -> np.ndarray:
        clipped = np.array(vector, dtype=float)
        clipped[0] = np.clip(clipped[0], X_MARGIN, 1.0 - X_MARGIN)
        clipped[1:N_PARAMS] = np.clip(clipped[1:N_PARAMS], -self.max_step, self.max_step)
        return clipped

    def to_action(self, vector: np.ndarray) -> DeformAction:
        return DeformAction(float(vector[0]), float(vector[1]), float(vector[2]), self.delta)

    def random_action(self) -> Tuple[DeformAction, np.ndarray]:
        vector = np.zeros(self.action_dim)
        vector[0] = self.rng.uniform(X_MARGIN, 1.0 - X_MARGIN)
        vector[1:N_PARAMS] = self.rng.uniform(-self.max_step, self.max_step, size=2)
        vector[N_PARAMS + int(self.rng.integers(self.config.n_types))] = 1.0
        return self.to_action(vector), vector

    def select_action(
        self, state: np.ndarray, epsilon: float, noise_coeff: float
    ) -> Tuple[DeformAction, np.ndarray]:
        """Epsilon-greedy choice between a uniform random action and the noisy policy action.

        OU noise is added in normalized units (x_target as is, displacements over
        ``max_step``) and scaled by ``noise_coeff``.
        """
        if self.rng.random() < epsilon:
            return self.random_action()
        vector = self.policy(state)
        if noise_coeff > 0.0:
            noise = noise_coeff * self.noise.sample()
            vector[0] += noise[0]
            vector[1:N_PARAMS] += self.max_step * noise[1:]
        vector = self.clip(vector)
        return self.to_action(vector), vector

    def similar_action(self, vector: np.ndarray) -> Tuple[DeformAction, np.ndarray]:
        """The same action with ``N(0, similar_noise * max_step)`` added to the displacements."""
        perturbed = np.array(vector, dtype=float)
        perturbed[1:N_PARAMS] += self.rng.normal(0.0, self.config.similar_noise * self.max_step, size=2)
        perturbed = self.clip(perturbed)
        return self.to_action(perturbed), perturbed

    def _tensors(self, batch: Batch) -> Tuple[torch.Tensor, ...]:
        return (
            torch.as_tensor(batch.states, dtype=DTYPE),
            torch.as_tensor(np.hstack([batch.params, batch.actions]), dtype=DTYPE),
            torch.as_tensor(batch.rewards, dtype=DTYPE)[:, None],
            torch.as_tensor(batch.next_states, dtype=DTYPE),
            torch.as_tensor(batch.dones, dtype=DTYPE)[:, None],
        )

    def compute_critic_targets(self, batch: Batch) -> torch.Tensor:
        """``r + discount (1 - done) min(Q1', Q2')(s', smoothed target policy(s'))``."""
        _, _, rewards, next_states, dones = self._tensors(batch)
        with torch.no_grad():
            next_actions = self.actor_target(next_states)
            if self.config.target_noise > 0.0:
                noise = torch.randn(len(next_actions), N_PARAMS, dtype=DTYPE) * self.config.target_noise
                noise = noise.clamp(-self.config.target_noise_clip, self.config.target_noise_clip)
                noise[:, 1:] *= self.max_step
                params = next_actions[:, :N_PARAMS] + noise
                params[:, 0] = params[:, 0].clamp(X_MARGIN, 1.0 - X_MARGIN)
                params[:, 1:] = params[:, 1:].clamp(-self.max_step, self.max_step)
                next_actions = torch.cat([params, next_actions[:, N_PARAMS:]], dim=1)
            normalized = self.normalize(next_actions)
            q_next = torch.min(
                self.critic1_target(next_states, normalized), self.critic2_target(next_states, normalized)
            )
            return rewards + self.discount * (1.0 - dones) * q_next

    def _critic_step(
        self,
        critic: Critic,
        optimizer: torch.optim.Optimizer,
        states: torch.Tensor,
        actions: torch.Tensor,
        targets: torch.Tensor,
    ) -> float:
        q = critic(states, actions)
        error = q - targets
        loss = float(torch.mean(error**2))
        gradients = backward(critic, (2.0 / len(q)) * error.detach())
        optimizer.zero_grad()
        optimizer_step(critic, optimizer, gradients.parameters)
        return loss

    def _actor_step(self, states: torch.Tensor) -> float:
        output = self.actor(states)
        normalized = self.normalize(output)
        q = self.critic1(states, normalized)
        through_critic = backward(self.critic1, torch.full_like(q, -1.0 / len(q)))
        action_gradient = through_critic.inputs[1]
        assert action_gradient is not None
        gradients = backward(self.actor, action_gradient * self._scale)
        self.actor_optimizer.zero_grad()
        optimizer_step(self.actor, self.actor_optimizer, gradients.parameters)
        return -float(q.mean())

    def update(self, batch: Batch) -> Losses:
        """One TD3 step: both critics regress to the clipped double-Q target; every
        ``policy_delay`` updates the actor ascends Q1 and all targets track softly."""
        states, actions, _, _, _ = self._tensors(batch)
        targets = self.compute_critic_targets(batch)
        normalized = self.normalize(actions)
        loss1 = self._critic_step(self.critic1, self.critic1_optimizer, states, normalized, targets)
        loss2 = self._critic_step(self.critic2, self.critic2_optimizer, states, normalized, targets)
        self.updates += 1
        actor_loss = math.nan
        if self.updates % self.config.policy_delay == 0:
            actor_loss = self._actor_step(states)
            tau = self.config.tau
            soft_update(self.actor_target, self.actor, tau)
            soft_update(self.critic1_target, self.critic1, tau)
            soft_update(self.critic2_target, self.critic2, tau)
        return Losses(loss1, loss2, actor_loss)

    def save(self, directory: PathLike) -> None:
        root = Path(directory)
        root.mkdir(parents=True, exist_ok=True)
        save_checkpoint(root / "actor.pt", {"actor": self.actor}, {"actor": self.actor_optimizer})
        save_checkpoint(
            root / "critics.pt",
            {"critic1": self.critic1, "critic2": self.critic2},
            {"critic1": self.critic1_optimizer, "critic2": self.critic2_optimizer},
        )
        save_checkpoint(
            root / "targets.pt",
            {"actor": self.actor_target, "critic1": self.critic1_target, "critic2": self.critic2_target},
        )

    def load(self, directory: PathLike) -> None:
        root = Path(directory)
        load_checkpoint(root / "actor.pt", {"actor": self.actor}, {"actor": self.actor_optimizer})
        load_checkpoint(
            root / "critics.pt",
            {"critic1": self.critic1, "critic2": self.critic2},
            {"critic1": self.critic1_optimizer, "critic2": self.critic2_optimizer},
        )
        load_checkpoint(
            root / "targets.pt",
            {"actor": self.actor_target, "critic1": self.critic1_target, "critic2": self.critic2_target},
        )


def td3_update(agent: TD3Agent, batch: Batch) -> Losses:
    return agent.update(batch)


def select_action(
    agent: TD3Agent, state: np.ndarray, epsilon: float, noise_coeff: float
) -> Tuple[DeformAction, np.ndarray]:
    return agent.select_action(state, epsilon, noise_coeff)


def _transition(before: EnvState, vector: np.ndarray, result: StepResult) -> Transition:
    return Transition(
        before.reduced,
        vector[N_PARAMS:],
        vector[:N_PARAMS],
        result.reward,
        result.state.reduced,
        result.done,
    )


class RetryOutcome(NamedTuple):
    result: StepResult
    vector: np.ndarray
    opposite: StepResult
    switched: bool


def opposite_retry(
    env: AirfoilEnv,
    cached: EnvState,
    action: DeformAction,
    vector: np.ndarray,
    first: StepResult,
    buffer: ReplayBuffer,
) -> RetryOutcome:
    """Retry the sign-negated action from the pre-action state and keep the better outcome.

    The caller has stored the first transition; the opposite one is stored here.
    """
    after = env.snapshot()
    env.restore(cached)
    opposite_vector = np.array(vector, dtype=float)
    opposite_vector[1:N_PARAMS] *= -1.0
    second = env.step(action.opposite())
    buffer.push(_transition(cached, opposite_vector, second))
    if second.reward > first.reward:
        logger.debug("opposite action kept: %.4g > %.4g", second.reward, first.reward)
        return RetryOutcome(second, opposite_vector, second, True)
    env.restore(after)
    return RetryOutcome(first, vector, second, False)


class TrainingResult(NamedTuple):
    agent: TD3Agent
    trace: List[Dict[str, Any]]
    best_state: EnvState
    initial_objective: float
    buffer: ReplayBuffer

    @property
    def best_shape(self) -> AirfoilShape:
        return self.best_state.shape

    @property
    def best_objective(self) -> float:
        return self.best_state.objective


def _row(
    episode: int,
    epoch: int,
    step: int,
    result: StepResult,
    cumulative: float,
    noise_coeff: float,
    epsilon: float,
    losses: Losses,
    retry: bool,
) -> Dict[str, Any]:
    return {
        "episode": episode,
        "epoch": epoch,
        "step": step,
        "t": result.state.t,
        "D": result.state.objective,
        "reward": result.reward,
        "cumreward": cumulative,
        "noise_coeff": noise_coeff,
        "epsilon": epsilon,
        "critic1_loss": losses.critic1,
        "critic2_loss": losses.critic2,
        "actor_loss": losses.actor,
        "retry_flag": int(retry),
        "infeasible_flag": int(bool(result.info.get("infeasible") or result.info.get("tangled"))),
    }


def train(config: RunConfig, env: Optional[AirfoilEnv] = None) -> TrainingResult:
    """Warm-up with random actions, then epochs of policy steps with TD3 updates.

    ``rl.warmup_episodes`` episodes of ``rl.warmup_steps`` random actions fill the
    buffer. Each of ``rl.epochs`` epochs then takes ``rl.steps_per_epoch`` steps
    without resetting, retrying the opposite action when the reward is below
    ``rl.min_reward`` and resetting the episode when the cumulative reward drops
    below ``rl.early_stop``. Epsilon and the noise coefficient decay every
    ``rl.decay_every`` epochs.
    """
    rl = config.rl
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    env = env if env is not None else AirfoilEnv(config)
    agent = TD3Agent(env.n_control, config.geometry.max_step, rl, config.reward.discount, config.geometry.delta, rng)
    buffer = ReplayBuffer(
        rl.buffer_capacity, agent.state_dim, rl.n_types, rl.recent_fraction, rl.best_fraction, rng
    )
    trace: List[Dict[str, Any]] = []
    no_update = Losses(math.nan, math.nan, math.nan)

    state = env.reset()
    best = state
    episode = 0
    for _ in range(rl.warmup_episodes):
        state = env.reset()
        cumulative = 0.0
        agent.noise.reset()
        for step in range(rl.warmup_steps):
            action, vector = agent.random_action()
            result = env.step(action)
            buffer.push(_transition(state, vector, result))
            cumulative += result.reward
            trace.append(_row(episode, 0, step, result, cumulative, 1.0, 1.0, no_update, False))
            state = result.state
            if state.objective < best.objective:
                best = state
        episode += 1

    state = env.reset()
    cumulative = 0.0
    epsilon, noise_coeff = rl.epsilon, rl.noise_coeff
    pending: Optional[np.ndarray] = None
    for epoch in range(1, rl.epochs + 1):
        for step in range(rl.steps_per_epoch):
            if pending is not None:
                action, vector = agent.similar_action(pending)
                pending = None
            else:
                action, vector = agent.select_action(state.reduced, epsilon, noise_coeff)
            cached = env.snapshot()
            result = env.step(action)
            buffer.push(_transition(cached, vector, result))
            retry_result: Optional[StepResult] = None
            if result.reward < rl.min_reward:
                outcome = opposite_retry(env, cached, action, vector, result, buffer)
                retry_result = outcome.opposite
                result, vector = outcome.result, outcome.vector
            cumulative += result.reward
            state = result.state

            rewards = buffer.live_rewards()
            if result.reward > 0.0 and result.reward >= np.quantile(rewards, rl.good_quantile):
                pending = vector

            losses = no_update
            batch_size = rl.initial_batch_size if len(buffer) < rl.batch_switch else rl.batch_size
            if len(buffer) >= batch_size:
                for _ in range(rl.updates_per_step):
                    losses = agent.update(buffer.sample(batch_size))

            trace.append(_row(episode, epoch, step, result, cumulative, noise_coeff, epsilon, losses, False))
            if retry_result is not None:
                trace.append(
                    _row(episode, epoch, step, retry_result, cumulative, noise_coeff, epsilon, losses, True)
                )
            if state.objective < best.objective:
                best = state
            if cumulative < rl.early_stop:
                logger.info("early stop in epoch %d: cumulative reward %.4g", epoch, cumulative)
                state = env.reset()
                cumulative = 0.0
                episode += 1
                agent.noise.reset()
        if epoch % rl.decay_every == 0:
            epsilon *= rl.decay
            noise_coeff *= rl.decay
        logger.info(
            "epoch %d: D=%.6g best=%.6g epsilon=%.3f noise=%.3f",
            epoch,
            state.objective,
            best.objective,
            epsilon,
            noise_coeff,
        )
    return TrainingResult(agent, trace, best, env.d0, buffer)


def save_trace(trace: List[Dict[str, Any]], path: PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=list(TRACE_COLUMNS))
        writer.writeheader()
        for row in trace:
            writer.writerow({key: row[key] for key in TRACE_COLUMNS})


def save_training(result: TrainingResult, config: RunConfig, directory: PathLike) -> None:
    """Checkpoint directory: network files, buffer snapshot and config echo."""
    root = Path(directory)
    result.agent.save(root)
    result.buffer.save(root / "buffer.npz")
    (root / "config.txt").write_text(config.dump(), encoding="utf-8")
