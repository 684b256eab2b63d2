"""The learner: budgeted epsilon-greedy selection, replay memory and double-Q training."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import nn
from .baselines import anti_entropy_action, greedy_minmax_action
from .env import SyncEnv
from .errors import InsufficientReplay


@dataclass
class AgentConfig:
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_anneal_fraction: float = 0.4
    batch_size: int = 32
    capacity: int = 10_000
    target_sync: int = 20
    offset_unit: float = 0.1
    learning_rate: float = 1e-4
    gamma: float = 0.99
    hidden: tuple[int, int, int] = nn.DEFAULT_HIDDEN
    # staleness multiplier at the network input; None means 1 / training horizon
    input_scale: float | None = 0.1

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        for name in ("eps_start", "eps_end"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")
        if not 0 < self.eps_anneal_fraction <= 1:
            raise ValueError("eps_anneal_fraction must lie in (0, 1]")
        if self.target_sync < 1:
            raise ValueError("target_sync must be >= 1")
        if self.offset_unit < 0:
            raise ValueError("offset_unit must be >= 0")
        if self.batch_size < 1 or self.capacity < 1:
            raise ValueError("batch_size and capacity must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if not 0 <= self.gamma < 1:
            raise ValueError("gamma must lie in [0, 1)")

    def epsilon(self, slot: int, horizon: int) -> float:
        span = max(1.0, self.eps_anneal_fraction * horizon)
        frac = min(1.0, slot / span)
        return self.eps_start + (self.eps_end - self.eps_start) * frac


class ReplayMemory:
    """Fixed-size FIFO store of (s, a, r, s', done); r already carries the offset."""

    def __init__(self, capacity: int, n: int):
        self.capacity = capacity
        self.n = n
        self.states = np.zeros((capacity, n), dtype=np.int64)
        self.actions = np.zeros((capacity, n), dtype=np.int8)
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros((capacity, n), dtype=np.int64)
        self.dones = np.zeros(capacity, dtype=bool)
        self.cursor = 0
        self.size = 0

    def __len__(self) -> int:
        return self.size

    def add(self, s, a, r: float, s_next, done: bool = False) -> None:
        k = self.cursor
        self.states[k] = s
        self.actions[k] = a
        self.rewards[k] = r
        self.next_states[k] = s_next
        self.dones[k] = done
        self.cursor = (k + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def order(self) -> np.ndarray:
        """Buffer slots from oldest to newest."""
        if self.size < self.capacity:
            return np.arange(self.size)
        return (np.arange(self.capacity) + self.cursor) % self.capacity

    def transitions(self) -> list[tuple]:
        return [(self.states[k].copy(), self.actions[k].copy(), float(self.rewards[k]),
                 self.next_states[k].copy(), bool(self.dones[k])) for k in self.order()]

    def sample(self, batch_size: int, rng: np.random.Generator):
        if self.size < 1:
            raise InsufficientReplay("replay memory is empty")
        idx = rng.integers(self.size, size=batch_size)
        return (self.states[idx], self.actions[idx].astype(np.int64), self.rewards[idx],
                self.next_states[idx], self.dones[idx])


def store_transition(replay: ReplayMemory, s, a, reward: float, s_next, offset_unit: float,
                     done: bool = False) -> float:
    """Store with the per-broadcast offset; returns the stored reward."""
    rho = int(np.sum(a))
    r = reward - rho * offset_unit
    replay.add(s, a, r, s_next, done)
    return r


def select_action(output: nn.ForwardOutput, budget: int, epsilon: float,
                  rng: np.random.Generator) -> np.ndarray:
    """Budget-feasible action from one forward pass.

    Exploration draws a subset of uniform size in [0, budget]. Otherwise
    each arm takes its higher-Q sub-action; when more arms want to
    broadcast than the budget allows, the largest broadcast Q-values win.
    """
    if budget < 0:
        raise ValueError("budget must be >= 0")
    q = output.q_values[0] if output.q_values.ndim == 3 else output.q_values
    n = q.shape[0]
    action = np.zeros(n, dtype=np.int64)
    if budget == 0:
        return action
    if rng.random() < epsilon:
        k = min(int(rng.integers(budget + 1)), n)
        if k:
            action[rng.choice(n, size=k, replace=False)] = 1
        return action
    wants = np.flatnonzero(q[:, 1] > q[:, 0])
    if len(wants) > budget:
        # stable sort keeps the lower arm index first among equal Q-values
        order = np.argsort(-q[wants, 1], kind="stable")
        wants = wants[order[:budget]]
    action[wants] = 1
    return action


def compute_target(rewards, next_states, dones, online: nn.BranchingNetParams,
                   delayed: nn.BranchingNetParams, gamma: float) -> np.ndarray:
    """Per-arm double-Q targets, shape (B, n).

    The online net picks each arm's next sub-action, the delayed net
    values it; terminal transitions do not bootstrap.
    """
    rewards = np.atleast_1d(np.asarray(rewards, dtype=float))
    dones = np.atleast_1d(np.asarray(dones, dtype=bool))
    q_online = nn.forward(online, next_states).q_values
    q_delayed = nn.forward(delayed, next_states).q_values
    best = np.argmax(q_online, axis=2)  # ties -> sub-action 0
    boot = np.take_along_axis(q_delayed, best[:, :, None], axis=2)[:, :, 0]
    boot = np.where(dones[:, None], 0.0, boot)
    return rewards[:, None] + gamma * boot


def train_step(replay: ReplayMemory, online: nn.BranchingNetParams, delayed: nn.BranchingNetParams,
               config: AgentConfig, rng: np.random.Generator) -> float:
    if len(replay) < config.batch_size:
        raise InsufficientReplay(f"replay holds {len(replay)} < batch size {config.batch_size}")
    s, a, r, s_next, done = replay.sample(config.batch_size, rng)
    y = compute_target(r, s_next, done, online, delayed, config.gamma)
    loss, grad = nn.loss_and_grad(online, s, a, y)
    nn.adam_step(online, grad, config.learning_rate)
    return loss


def sync_target(online: nn.BranchingNetParams, delayed: nn.BranchingNetParams, step: int, C: int) -> bool:
    if C < 1:
        raise ValueError("C must be >= 1")
    if step % C == 0:
        nn.copy_into(online, delayed)
        return True
    return False


@dataclass
class Agent:
    online: nn.BranchingNetParams
    delayed: nn.BranchingNetParams
    replay: ReplayMemory
    config: AgentConfig
    rng: np.random.Generator
    updates: int = 0
    target_copies: int = 0

    @classmethod
    def create(cls, n: int, config: AgentConfig, seed, input_scale: float | None = None) -> "Agent":
        """``seed`` may be an int or a SeedSequence; weights and sampling use separate streams.

        ``input_scale`` falls back to the config value, then to 1.
        """
        if input_scale is None:
            input_scale = config.input_scale if config.input_scale is not None else 1.0
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        init_ss, sample_ss = ss.spawn(2)
        online = nn.init_params(n, np.random.default_rng(init_ss), config.hidden, input_scale)
        delayed = nn.clone_params(online)
        return cls(online, delayed, ReplayMemory(config.capacity, n), config,
                   np.random.default_rng(sample_ss))

    def update(self) -> float:
        loss = train_step(self.replay, self.online, self.delayed, self.config, self.rng)
        self.updates += 1
        if sync_target(self.online, self.delayed, self.updates, self.config.target_sync):
            self.target_copies += 1
        return loss

    def act(self, state, budget: int, epsilon: float = 0.0) -> np.ndarray:
        return select_action(nn.forward(self.online, state), budget, epsilon, self.rng)


def pretrain(agent: Agent, steps: int) -> list[float]:
    if steps > 0 and len(agent.replay) == 0:
        raise InsufficientReplay("pretraining needs a non-empty replay memory")
    return [agent.update() for _ in range(steps)]


def generate_history(env: SyncEnv, replay: ReplayMemory, transitions: int, offset_unit: float,
                     policy: str = "greedy", rng: np.random.Generator | None = None,
                     env_seq: np.random.SeedSequence | None = None) -> None:
    """Fill ``replay`` with transitions produced by a baseline policy on ``env``.

    Episodes restart from fresh children of ``env_seq`` when the horizon is hit.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    env_seq = env_seq if env_seq is not None else np.random.SeedSequence(env.config.seed)
    episodes = iter(env_seq.spawn(transitions // env.config.horizon + 1))
    s = env.reset(env_seq=next(episodes))
    for _ in range(transitions):
        if env.done:
            s = env.reset(env_seq=next(episodes))
        budget = env.current_budget()
        if policy == "greedy":
            a = greedy_minmax_action(s, budget)
        elif policy == "anti_entropy":
            a = anti_entropy_action(env.n, budget, rng)
        else:
            raise ValueError(f"unknown history policy {policy!r}")
        out = env.step(a)
        store_transition(replay, s, a, out.reward, out.next_state, offset_unit, out.done)
        s = out.next_state


@dataclass
class SlotMetrics:
    slot: int
    budget: int
    reward: float
    offset_reward: float
    loss: float
    epsilon: float


def run_training(env: SyncEnv, agent: Agent, horizon: int | None = None,
                 env_seq: np.random.SeedSequence | None = None) -> list[SlotMetrics]:
    """Interact for ``horizon`` slots, storing each transition and taking one update per slot."""
    horizon = horizon if horizon is not None else env.config.horizon
    if agent.online.n != env.n:
        raise ValueError(f"network has {agent.online.n} arms but the environment has {env.n} BISes")
    cfg = agent.config
    s = env.reset(env_seq=env_seq)
    metrics = []
    for t in range(horizon):
        budget = env.current_budget()
        eps = cfg.epsilon(t, horizon)
        a = agent.act(s, budget, eps)
        out = env.step(a)
        r = store_transition(agent.replay, s, a, out.reward, out.next_state, cfg.offset_unit,
                             out.done or t == horizon - 1)
        loss = agent.update() if len(agent.replay) >= cfg.batch_size else math.nan
        metrics.append(SlotMetrics(t, budget, out.reward, r, loss, eps))
        s = out.next_state
    return metrics
