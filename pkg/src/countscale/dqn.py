"""Two-layer MLP Q-network with hand-written backprop, plus DQN plumbing.

The network maps ``[feature, encoded weight slots]`` to one Q-value per pool
action: ``Q = W2 @ relu(W1 @ x + b1) + b2``. Slots are either divided by
`weight_scale` or, when `slot_codes` is set, one-hot coded against those
values (an empty slot codes as all zeros).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import EpisodeState


class DimensionMismatch(ValueError):
    pass


class EmptyBatch(ValueError):
    pass


class EmptyBuffer(IndexError):
    pass


@dataclass
class QNetParams:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    weight_scale: float = 10.0
    slot_codes: tuple | None = None

    ARRAYS = ("W1", "b1", "W2", "b2")

    @classmethod
    def init(cls, in_dim: int, hidden: int, out_dim: int, rng: np.random.Generator,
             weight_scale: float = 10.0, slot_codes=None) -> QNetParams:
        """Glorot-uniform weights, zero biases. `in_dim` is the encoded input width."""
        lim1 = np.sqrt(6.0 / (in_dim + hidden))
        lim2 = np.sqrt(6.0 / (hidden + out_dim))
        W1 = rng.uniform(-lim1, lim1, size=(hidden, in_dim))
        W2 = rng.uniform(-lim2, lim2, size=(out_dim, hidden))
        return cls(W1, np.zeros(hidden), W2, np.zeros(out_dim), weight_scale, _codes(slot_codes))

    @classmethod
    def zeros(cls, in_dim: int, hidden: int, out_dim: int, weight_scale: float = 10.0,
              slot_codes=None) -> QNetParams:
        return cls(np.zeros((hidden, in_dim)), np.zeros(hidden),
                   np.zeros((out_dim, hidden)), np.zeros(out_dim), weight_scale, _codes(slot_codes))

    @property
    def in_dim(self) -> int:
        return self.W1.shape[1]

    @property
    def hidden(self) -> int:
        return self.W1.shape[0]

    @property
    def out_dim(self) -> int:
        return self.W2.shape[0]

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: getattr(self, k) for k in self.ARRAYS}

    def copy(self) -> QNetParams:
        return QNetParams(*(getattr(self, k).copy() for k in self.ARRAYS), self.weight_scale,
                          self.slot_codes)

    def encode(self, features, slots) -> np.ndarray:
        return encode(features, slots, self.weight_scale, self.slot_codes)

    def equals(self, other: QNetParams) -> bool:
        return (self.weight_scale, self.slot_codes) == (other.weight_scale, other.slot_codes) and all(
            np.array_equal(getattr(self, k), getattr(other, k)) for k in self.ARRAYS)


def _codes(slot_codes):
    return None if slot_codes is None else tuple(float(v) for v in slot_codes)


def input_width(feature_dim: int, t_m: int, slot_codes=None) -> int:
    return feature_dim + t_m * (1 if slot_codes is None else len(slot_codes))


def encode(features: np.ndarray, slots: np.ndarray, weight_scale: float = 10.0,
           slot_codes=None) -> np.ndarray:
    """Row-wise concatenation of features and encoded weight slots."""
    F = np.atleast_2d(features)
    S = np.atleast_2d(slots)
    if slot_codes is None:
        return np.hstack([F, S / weight_scale])
    onehot = S[:, :, None] == np.asarray(slot_codes, dtype=float)
    return np.hstack([F, onehot.reshape(len(S), -1).astype(float)])


def _check_input(p: QNetParams, X: np.ndarray):
    if X.shape[-1] != p.in_dim:
        raise DimensionMismatch(f"network expects {p.in_dim} inputs, got {X.shape[-1]}")


def forward_batch(p: QNetParams, X: np.ndarray) -> np.ndarray:
    _check_input(p, X)
    H = np.maximum(X @ p.W1.T + p.b1, 0.0)
    return H @ p.W2.T + p.b2


def forward(p: QNetParams, s: EpisodeState) -> np.ndarray:
    x = p.encode(s.feature, s.weights.as_array())
    return forward_batch(p, x)[0]


def q_values(q, features: np.ndarray, slots: np.ndarray) -> np.ndarray:
    """Evaluate either network parameters or an injected Q-function on raw state arrays."""
    if isinstance(q, QNetParams):
        return forward_batch(q, q.encode(features, slots))
    return q(features, slots)


def bellman_target(r: float, q_next, terminal: bool, gamma: float) -> float:
    if terminal:
        return r
    return r + gamma * float(np.max(q_next))


@dataclass(frozen=True, eq=False)
class Transition:
    s: EpisodeState
    a: int
    s_next: EpisodeState
    r: float
    terminal: bool
    patch: int = -1


@dataclass
class Batch:
    """Array view of a list of transitions."""

    X: np.ndarray
    a: np.ndarray
    X_next: np.ndarray
    r: np.ndarray
    terminal: np.ndarray

    @classmethod
    def from_transitions(cls, batch, p: QNetParams) -> Batch:
        """Encode with the input coding of network `p`."""
        if not batch:
            raise EmptyBatch("batch is empty")
        feats = np.array([t.s.feature for t in batch])
        slots = np.array([t.s.weights.slots for t in batch], dtype=float)
        slots_next = np.array([t.s_next.weights.slots for t in batch], dtype=float)
        return cls(
            p.encode(feats, slots),
            np.array([t.a for t in batch]),
            p.encode(feats, slots_next),
            np.array([t.r for t in batch], dtype=float),
            np.array([t.terminal for t in batch], dtype=bool),
        )


def _backward(p: QNetParams, X: np.ndarray, Z: np.ndarray, H: np.ndarray, dQ: np.ndarray) -> QNetParams:
    dW2 = dQ.T @ H
    db2 = dQ.sum(axis=0)
    dZ = (dQ @ p.W2) * (Z > 0)
    dW1 = dZ.T @ X
    db1 = dZ.sum(axis=0)
    return QNetParams(dW1, db1, dW2, db2, p.weight_scale, p.slot_codes)


def td_targets(target_p: QNetParams, b: Batch, gamma: float) -> np.ndarray:
    q_next = forward_batch(target_p, b.X_next).max(axis=1)
    return np.where(b.terminal, b.r, b.r + gamma * q_next)


def loss_and_grads_arrays(p: QNetParams, target_p: QNetParams, b: Batch, gamma: float):
    """Mean absolute TD error and its subgradient w.r.t. `p` (target held fixed)."""
    n = len(b.a)
    if n == 0:
        raise EmptyBatch("batch is empty")
    _check_input(p, b.X)
    y = td_targets(target_p, b, gamma)
    Z = b.X @ p.W1.T + p.b1
    H = np.maximum(Z, 0.0)
    Q = H @ p.W2.T + p.b2
    rows = np.arange(n)
    resid = Q[rows, b.a] - y
    loss = float(np.mean(np.abs(resid)))
    dQ = np.zeros_like(Q)
    dQ[rows, b.a] = np.sign(resid) / n  # sign(0) == 0: no push at an exact fit
    return loss, _backward(p, b.X, Z, H, dQ)


def loss_and_grads(p: QNetParams, target_p: QNetParams, batch, gamma: float):
    return loss_and_grads_arrays(p, target_p, Batch.from_transitions(batch, p), gamma)


def xent_loss_and_grads(p: QNetParams, X: np.ndarray, labels: np.ndarray):
    """Softmax cross-entropy of the network's outputs against action labels."""
    n = len(labels)
    if n == 0:
        raise EmptyBatch("batch is empty")
    _check_input(p, X)
    Z = X @ p.W1.T + p.b1
    H = np.maximum(Z, 0.0)
    logits = H @ p.W2.T + p.b2
    logits = logits - logits.max(axis=1, keepdims=True)
    logp = logits - np.log(np.exp(logits).sum(axis=1, keepdims=True))
    rows = np.arange(n)
    loss = float(-logp[rows, labels].mean())
    dL = np.exp(logp)
    dL[rows, labels] -= 1.0
    return loss, _backward(p, X, Z, H, dL / n)


def sgd_step(p: QNetParams, grads: QNetParams, lr: float) -> QNetParams:
    for k in QNetParams.ARRAYS:
        if getattr(p, k).shape != getattr(grads, k).shape:
            raise DimensionMismatch(f"gradient shape mismatch for {k}")
    return QNetParams(*(getattr(p, k) - lr * getattr(grads, k) for k in QNetParams.ARRAYS),
                      p.weight_scale, p.slot_codes)


def sync_target(p: QNetParams) -> QNetParams:
    return p.copy()


def epsilon_greedy(q, eps: float, rng: np.random.Generator) -> int:
    if not 0.0 <= eps <= 1.0:
        raise ValueError("eps must lie in [0, 1]")
    if rng.random() < eps:
        return int(rng.integers(len(q)))
    return int(np.argmax(q))


def epsilon_greedy_batch(Q: np.ndarray, eps: float, rng: np.random.Generator) -> np.ndarray:
    """Row-wise epsilon-greedy; draws one uniform and one random index per row."""
    n, n_a = Q.shape
    explore = rng.random(n) < eps
    random_a = rng.integers(n_a, size=n)
    return np.where(explore, random_a, np.argmax(Q, axis=1))


@dataclass(frozen=True)
class EpsilonSchedule:
    start: float = 1.0
    floor: float = 0.1
    step: float = 0.05

    def value(self, k: int) -> float:
        return max(self.start - k * self.step, self.floor)


@dataclass
class ReplayBuffer:
    """Ring buffer of transitions with uniform, with-replacement sampling."""

    capacity: int = 50_000
    storage: list = field(default_factory=list)
    pos: int = 0

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError("capacity must be positive")

    def __len__(self):
        return len(self.storage)

    def push(self, t: Transition):
        if len(self.storage) < self.capacity:
            self.storage.append(t)
        else:
            self.storage[self.pos] = t
        self.pos = (self.pos + 1) % self.capacity

    def sample(self, n: int, rng: np.random.Generator) -> list[Transition]:
        if not self.storage:
            raise EmptyBuffer("cannot sample from an empty buffer")
        idx = rng.integers(len(self.storage), size=n)
        return [self.storage[i] for i in idx]


# module-level aliases matching the operation names
def replay_push(buf: ReplayBuffer, t: Transition):
    buf.push(t)


def replay_sample(buf: ReplayBuffer, n: int, rng: np.random.Generator) -> list[Transition]:
    return buf.sample(n, rng)
