"""DQN, DDQN and their dueling variants for picking a frontier centroid.

The state is a fixed 36-vector::

    [0:2]   robot position (x, y), normalised to [0, 1]
    [2:6]   orientation quaternion (qx, qy, qz, qw)
    [6:26]  ten centroid pairs (x, y), normalised, zero-padded
    [26:36] ten information gains aligned with the centroid slots

An action is a slot index 0..9.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .frontier import N_SLOTS, CentroidRecord
from .gridworld import RobotPose
from .neural import (STATE_DIM, DivergenceError, NetworkParams, backward_and_step, clone,
                     forward, mse_loss)

log = logging.getLogger(__name__)

POS = slice(0, 2)
QUAT = slice(2, 6)
CENTROIDS = slice(6, 26)
GAINS = slice(26, 36)


@dataclass(frozen=True)
class AlgoVariant:
    name: str
    topology: str
    double: bool


VARIANTS = {
    "dqn": AlgoVariant("dqn", "standard", False),
    "ddqn": AlgoVariant("ddqn", "standard", True),
    "dueling_dqn": AlgoVariant("dueling_dqn", "dueling", False),
    "dueling_ddqn": AlgoVariant("dueling_ddqn", "dueling", True),
}


def get_variant(name) -> AlgoVariant:
    if isinstance(name, AlgoVariant):
        return name
    try:
        return VARIANTS[name]
    except KeyError:
        raise ValueError(f"unknown algorithm {name!r}; choose from {', '.join(VARIANTS)}") from None


@dataclass
class TrainConfig:
    gamma: float = 0.9
    learning_rate: float = 0.001
    epsilon: float = 1.0
    epsilon_min: float = 0.1
    epsilon_decay: float = 0.995
    epochs: int = 100
    save_interval: int = 10
    batch_size: int = 32
    penalty: float = 10.0
    seed: int = 0
    # step size inside the DQN target; 1.0 gives the plain Bellman target
    target_alpha: float = 1.0
    buffer_capacity: int = 10000

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must be in (0, 1]")
        if self.learning_rate <= 0 or self.target_alpha <= 0:
            raise ValueError("learning rates must be positive")
        for name in ("epsilon", "epsilon_min", "epsilon_decay"):
            if not 0.0 < getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be in (0, 1]")
        if self.epsilon_min > self.epsilon:
            raise ValueError("epsilon_min must not exceed epsilon")
        if self.epochs < 0 or self.save_interval < 1 or self.batch_size < 1:
            raise ValueError("epochs >= 0, save_interval >= 1 and batch_size >= 1 required")
        if self.penalty < 0:
            raise ValueError("penalty must be >= 0")


class Transition(NamedTuple):
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    done: int


def prepare_input(pose: RobotPose, record: CentroidRecord, width: int, height: int) -> np.ndarray:
    s = np.zeros(STATE_DIM)
    s[0] = pose.x / max(width - 1, 1)
    s[1] = pose.y / max(height - 1, 1)
    s[QUAT] = pose.orientation
    s[CENTROIDS] = record.centroids.ravel()
    s[GAINS] = record.gains
    return s


def record_from_state(state) -> CentroidRecord:
    state = np.asarray(state, dtype=float)
    return CentroidRecord(state[CENTROIDS].reshape(N_SLOTS, 2).copy(), state[GAINS].copy())


def padded_slots(states) -> np.ndarray:
    """Zero-centroid mask for one state (10,) or a batch (B, 10)."""
    states = np.asarray(states, dtype=float)
    c = states[..., CENTROIDS].reshape(states.shape[:-1] + (N_SLOTS, 2))
    return np.all(c == 0.0, axis=-1)


def masked_q(q, mask, penalty: float) -> np.ndarray:
    q = np.array(q, dtype=float)
    q[mask] = -penalty
    return q


def select_action(q_net: NetworkParams, state, record: CentroidRecord, epsilon: float,
                  rng: np.random.Generator, penalty: float = 10.0) -> int:
    """Epsilon-greedy slot choice.

    The random branch draws uniformly from all ten slots.  The greedy branch
    sets every zero-centroid slot to ``-penalty`` and takes the argmax (first
    index on ties).
    """
    if rng.random() < epsilon:
        return int(rng.integers(0, N_SLOTS))
    q = masked_q(forward(q_net, state), record.padded_mask(), penalty)
    return int(np.argmax(q))


def decay_epsilon(epsilon: float, epsilon_min: float, epsilon_decay: float) -> float:
    if epsilon > epsilon_min:
        return max(epsilon * epsilon_decay, epsilon_min)
    return epsilon


def compute_reward(predicted, target, penalty: float = 10.0) -> float:
    predicted = np.asarray(predicted, dtype=float)
    if np.all(predicted == 0.0):
        return -float(penalty)
    if np.all(predicted == np.asarray(target, dtype=float)):
        return 1.0
    return 0.0


def predicted_slot(net: NetworkParams, state, record: CentroidRecord, penalty: float = 10.0) -> int:
    q = masked_q(forward(net, state), record.padded_mask(), penalty)
    return int(np.argmax(q))


def predicted_centroid(target_net: NetworkParams, state, record: CentroidRecord,
                       penalty: float = 10.0) -> np.ndarray:
    return record.centroids[predicted_slot(target_net, state, record, penalty)]


def target_slot(record: CentroidRecord) -> int:
    """Index of the highest-gain slot (lowest index on ties)."""
    return int(np.argmax(record.gains))


def target_centroid(record: CentroidRecord) -> np.ndarray:
    if record.n_valid == 0:
        return np.zeros(2)
    return record.centroids[target_slot(record)]


def dqn_target(q_sa, reward, gamma, alpha, max_q_next):
    return q_sa + alpha * (reward + gamma * max_q_next - q_sa)


def ddqn_target(reward, gamma, done, q_target_next, q_online_next):
    """Online network picks the next action, target network values it."""
    q_target_next = np.asarray(q_target_next, dtype=float)
    best = np.argmax(np.asarray(q_online_next, dtype=float), axis=-1)
    value = np.take_along_axis(q_target_next, np.expand_dims(best, -1), axis=-1)[..., 0]
    return reward + gamma * value * (1 - done)


class ReplayBuffer:
    """Fixed-capacity ring of transitions; the oldest entry is overwritten when full."""

    def __init__(self, capacity: int = 10000):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.states = np.zeros((capacity, STATE_DIM))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros((capacity, STATE_DIM))
        self.dones = np.zeros(capacity, dtype=np.int64)
        self._next = 0
        self.size = 0

    def __len__(self) -> int:
        return self.size

    def push(self, t: Transition) -> None:
        i = self._next
        self.states[i] = t.state
        self.actions[i] = t.action
        self.rewards[i] = t.reward
        self.next_states[i] = t.next_state
        self.dones[i] = t.done
        self._next = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def _order(self) -> np.ndarray:
        """Storage indices from oldest to newest."""
        start = self._next if self.size == self.capacity else 0
        return (start + np.arange(self.size)) % self.capacity

    def contents(self) -> list[Transition]:
        return [self._get(i) for i in self._order()]

    def _get(self, i) -> Transition:
        return Transition(self.states[i].copy(), int(self.actions[i]), float(self.rewards[i]),
                          self.next_states[i].copy(), int(self.dones[i]))

    def sample_indices(self, rng: np.random.Generator, k: int) -> np.ndarray:
        if self.size == 0:
            raise ValueError("cannot sample from an empty replay buffer")
        k = min(k, self.size)
        return self._order()[rng.choice(self.size, size=k, replace=False)]

    def sample(self, rng: np.random.Generator, k: int) -> list[Transition]:
        return [self._get(i) for i in self.sample_indices(rng, k)]


def batch_targets(online: NetworkParams, target: NetworkParams, variant: AlgoVariant,
                  states, actions, rewards, next_states, dones, cfg: TrainConfig) -> np.ndarray:
    """Regression targets for a batch.  Next-state Q-values are masked like action selection."""
    mask = padded_slots(next_states)
    q_next_target = masked_q(forward(target, next_states), mask, cfg.penalty)
    if variant.double:
        q_next_online = masked_q(forward(online, next_states), mask, cfg.penalty)
        return ddqn_target(rewards, cfg.gamma, dones, q_next_target, q_next_online)
    q_sa = forward(online, states)[np.arange(len(actions)), actions]
    return dqn_target(q_sa, rewards, cfg.gamma, cfg.target_alpha, q_next_target.max(axis=1))


def train(dataset, cfg: TrainConfig, variant) -> tuple[NetworkParams, list[float]]:
    """Offline training on recorded episodes.

    Every epoch walks all recorded states in order.  For each one the online
    network picks an action epsilon-greedily, the action's centroid is
    rewarded against the best-gain centroid of the same record, the
    transition is pushed to the replay buffer and one gradient step is taken
    on a uniformly sampled batch.  Epsilon decays once per epoch and the
    target network is refreshed every ``save_interval`` epochs.

    The returned series holds, per epoch, the mean squared error between the
    target network's predicted centroid and the best-gain centroid over all
    recorded states.
    """
    variant = get_variant(variant)
    transitions = [t for episode in dataset for t in episode]
    if not transitions:
        raise ValueError("empty dataset")
    rng = np.random.default_rng(cfg.seed)
    online = NetworkParams.init(variant.topology, rng)
    target_net = clone(online)
    buffer = ReplayBuffer(cfg.buffer_capacity)
    epsilon = cfg.epsilon

    states = np.array([t.state for t in transitions], dtype=float)
    records = [record_from_state(s) for s in states]
    best = np.array([target_centroid(r) for r in records])
    masks = padded_slots(states)

    series = []
    for epoch in range(cfg.epochs):
        # the target network is fixed for the whole epoch, so its predictions can be batched
        q_pred = masked_q(forward(target_net, states), masks, cfg.penalty)
        predicted = np.array([rec.centroids[a] for rec, a in zip(records, q_pred.argmax(axis=1))])
        series.append(mse_loss(predicted.ravel(), best.ravel())[0])

        td_losses = []
        for t, record, goal in zip(transitions, records, best):
            action = select_action(online, t.state, record, epsilon, rng, cfg.penalty)
            reward = compute_reward(record.centroids[action], goal, cfg.penalty)
            buffer.push(Transition(t.state, action, reward, t.next_state, t.done))
            idx = buffer.sample_indices(rng, cfg.batch_size)
            b_states = buffer.states[idx]
            b_actions = buffer.actions[idx]
            targets = batch_targets(online, target_net, variant, b_states, b_actions,
                                    buffer.rewards[idx], buffer.next_states[idx],
                                    buffer.dones[idx], cfg)
            try:
                td_losses.append(backward_and_step(online, b_states, b_actions, targets,
                                                   cfg.learning_rate))
            except DivergenceError as exc:
                raise DivergenceError(
                    f"{variant.name}: divergence at epoch {epoch + 1}: {exc}") from None
        log.debug("%s epoch %d: centroid mse %.6f, td loss %.6f, epsilon %.4f",
                  variant.name, epoch + 1, series[-1], float(np.mean(td_losses)), epsilon)
        epsilon = decay_epsilon(epsilon, cfg.epsilon_min, cfg.epsilon_decay)
        if (epoch + 1) % cfg.save_interval == 0:
            target_net = clone(online)
    return online, series


def imitation_accuracy(params: NetworkParams, states, penalty: float = 10.0) -> float:
    """Share of states where the greedy masked choice equals the best-gain slot."""
    states = np.asarray(states, dtype=float)
    q = masked_q(forward(params, states), padded_slots(states), penalty)
    chosen = q.argmax(axis=1)
    wanted = np.argmax(states[:, GAINS], axis=1)
    return float(np.mean(chosen == wanted))


# -- dataset file ---------------------------------------------------------

def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def dumps_dataset(episodes) -> str:
    lines = ["# state(36) action reward next_state(36) done"]
    for episode in episodes:
        for t in episode:
            fields = [_fmt(v) for v in t.state] + [str(int(t.action)), _fmt(t.reward)]
            fields += [_fmt(v) for v in t.next_state] + [str(int(t.done))]
            lines.append(" ".join(fields))
    return "\n".join(lines) + "\n"


def loads_dataset(text: str) -> list[list[Transition]]:
    """Parse a dataset; episodes are split after each ``done = 1`` transition."""
    episodes, current = [], []
    width = 2 * STATE_DIM + 3
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != width:
            raise ValueError(f"line {lineno}: expected {width} fields, got {len(parts)}")
        vals = [float(p) for p in parts]
        action, done = int(vals[STATE_DIM]), int(vals[-1])
        if not 0 <= action < N_SLOTS or done not in (0, 1):
            raise ValueError(f"line {lineno}: bad action or done flag")
        current.append(Transition(np.array(vals[:STATE_DIM]), action, vals[STATE_DIM + 1],
                                  np.array(vals[STATE_DIM + 2:2 * STATE_DIM + 2]), done))
        if done:
            episodes.append(current)
            current = []
    if current:
        episodes.append(current)
    return episodes

