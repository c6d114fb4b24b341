"""Synthetic weighing environment and the training loops.

Patch features come from a fixed random embedding of the target interval
plus Gaussian noise, standing in for CNN features. Training follows the
usual DQN recipe: the target network is refreshed at the start of every
epoch, episodes are rolled with an epsilon-greedy policy, and one SGD step on
a replayed batch is taken each time `update_every` transitions have been
buffered.
"""

from __future__ import annotations

import functools
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import dqn
from .core import EpisodeConfig, EpisodeState, WeightVector, apply_update
from .dqn import EpsilonSchedule, QNetParams, ReplayBuffer, Transition
from .quantizer import QuantizerConfig, inverse_quantize
from .rewards import RewardConfig, RewardMode, optimal_action_index, step_reward_batch

log = logging.getLogger(__name__)


class IntervalOutOfRange(ValueError):
    pass


@dataclass(frozen=True)
class SynthConfig:
    num_patches: int = 1000
    max_interval: int = 79
    tail_exponent: float = 1.2
    zero_fraction: float = 0.2
    feature_dim: int = 32
    noise_sigma: float = 0.0
    holdout: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.max_interval < 80:
            raise ValueError("max_interval must lie in [0, 80)")
        if self.num_patches < 1 or self.feature_dim < 1:
            raise ValueError("num_patches and feature_dim must be positive")
        if self.noise_sigma < 0 or not 0 <= self.holdout < 1:
            raise ValueError("bad noise_sigma/holdout")


@functools.lru_cache(maxsize=16)
def _embedding(seed: int, feature_dim: int, max_interval: int) -> np.ndarray:
    rng = np.random.default_rng([seed, 1])
    emb = rng.standard_normal((feature_dim, max_interval + 1))
    emb.setflags(write=False)
    return emb


def base_embedding(cfg: SynthConfig) -> np.ndarray:
    """(feature_dim, max_interval + 1) projection of one-hot intervals; column C embeds C."""
    return _embedding(cfg.seed, cfg.feature_dim, cfg.max_interval)


def synth_features(C: int, cfg: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    if not 0 <= C <= cfg.max_interval:
        raise IntervalOutOfRange(f"interval {C} outside [0, {cfg.max_interval}]")
    x = base_embedding(cfg)[:, C].copy()
    if cfg.noise_sigma > 0:
        x += cfg.noise_sigma * rng.standard_normal(cfg.feature_dim)
    return x


@dataclass
class Dataset:
    ids: np.ndarray
    targets: np.ndarray
    features: np.ndarray
    train_idx: np.ndarray
    test_idx: np.ndarray

    def __len__(self):
        return len(self.targets)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]


def sample_targets(cfg: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    """Long-tailed intervals: a share of exact zeros, the rest ~ C^-exponent on [1, max]."""
    n = cfg.num_patches
    if cfg.max_interval == 0:
        return np.zeros(n, dtype=int)
    k = np.arange(1, cfg.max_interval + 1)
    p = k ** -cfg.tail_exponent
    C = rng.choice(k, size=n, p=p / p.sum())
    C[rng.random(n) < cfg.zero_fraction] = 0
    return C.astype(int)


def make_dataset(cfg: SynthConfig) -> Dataset:
    targets = sample_targets(cfg, np.random.default_rng([cfg.seed, 2]))
    noise_rng = np.random.default_rng([cfg.seed, 3])
    features = np.array([synth_features(int(c), cfg, noise_rng) for c in targets])
    order = np.random.default_rng([cfg.seed, 4]).permutation(len(targets))
    n_test = int(round(cfg.holdout * len(targets)))
    return Dataset(np.arange(len(targets)), targets, features,
                   np.sort(order[n_test:]), np.sort(order[:n_test]))


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    lr: float = 0.01
    update_every: int = 10
    batch_size: int = 64
    hidden: int = 256
    buffer_capacity: int = 50_000
    mode: str = RewardMode.FULL.value
    rollout_chunk: int = 100
    slot_encoding: str = "onehot"
    seed: int = 0
    episode: EpisodeConfig = field(default_factory=EpisodeConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    epsilon: EpsilonSchedule = field(default_factory=EpsilonSchedule)

    def __post_init__(self):
        RewardMode(self.mode)
        if self.slot_encoding not in ("onehot", "scaled"):
            raise ValueError(f"unknown slot_encoding {self.slot_encoding!r}")
        if self.epochs < 0 or self.update_every < 1 or self.batch_size < 1 or self.rollout_chunk < 1:
            raise ValueError("epochs/update_every/batch_size/rollout_chunk out of range")
        if self.lr < 0:
            raise ValueError("lr must be nonnegative")


@dataclass
class Step:
    t: int
    action: int
    q: np.ndarray
    value: float


@dataclass
class Episode:
    patch: int
    G: float
    transitions: list
    steps: list
    final_value: float


def rollout(q, features, targets, episode: EpisodeConfig, reward_cfg: RewardConfig,
            mode=RewardMode.FULL, eps: float = 0.0, rng: np.random.Generator | None = None,
            patches=None, sink=None) -> list[Episode]:
    """Roll many episodes in lockstep from an empty pan.

    `q` is network parameters or a callable ``q(features, slots) -> Q``; it is
    re-evaluated every step, so a callable reading live parameters sees
    updates made by `sink`. `sink`, when given, receives every transition in
    generation order. With ``eps == 0`` no random numbers are drawn.
    """
    pool, t_m = episode.pool, episode.t_m
    features = np.atleast_2d(features)
    targets = np.asarray(targets, dtype=float)
    n = len(targets)
    patches = np.arange(n) if patches is None else np.asarray(patches)
    end = pool.end_index
    values = pool.values
    slots = np.zeros((n, t_m))
    V = np.zeros(n)
    weights = [WeightVector.zeros(t_m)] * n
    eps_out = [Episode(int(patches[i]), targets[i], [], [], 0.0) for i in range(n)]
    active = np.arange(n)
    for t in range(t_m):
        if active.size == 0:
            break
        Q = dqn.q_values(q, features[active], slots[active])
        if eps > 0:
            acts = dqn.epsilon_greedy_batch(Q, eps, rng)
        else:
            acts = np.argmax(Q, axis=1)
        forced = t == t_m - 1
        r = step_reward_batch(targets[active], V[active], acts, np.full(active.size, forced),
                              reward_cfg, pool, mode)
        is_end = acts == end
        for j, i in enumerate(active):
            a = int(acts[j])
            w = weights[i]
            w_next = w if a == end else apply_update(w, pool[a])
            tr = Transition(EpisodeState(features[i], w), a, EpisodeState(features[i], w_next),
                            float(r[j]), bool(is_end[j] or forced), int(patches[i]))
            weights[i] = w_next
            ep = eps_out[i]
            ep.transitions.append(tr)
            ep.steps.append(Step(t, a, Q[j], V[i] + values[a]))
            if sink is not None:
                sink(tr)
        moved = active[~is_end]
        slots[moved, t] = values[acts[~is_end]]
        V[active] += values[acts]
        active = active[~(is_end | forced)]
    for i, ep in enumerate(eps_out):
        ep.final_value = V[i]
    return eps_out


def generate_episode(FV, G, qnet, target_qnet=None, episode: EpisodeConfig | None = None,
                     reward_cfg: RewardConfig | None = None, rng=None, eps: float = 0.0,
                     mode=RewardMode.FULL) -> list[Transition]:
    """One episode for one patch. `target_qnet` is unused during rollouts and accepted for symmetry."""
    episode = episode or EpisodeConfig()
    reward_cfg = reward_cfg or RewardConfig()
    ep, = rollout(qnet, np.asarray(FV, dtype=float)[None, :], [G], episode, reward_cfg,
                  mode, eps, rng)
    return ep.transitions


def predicted_intervals(q, data: Dataset, idx, episode: EpisodeConfig, reward_cfg: RewardConfig,
                        max_interval: int, chunk: int = 1000) -> tuple[np.ndarray, np.ndarray]:
    """Greedy rollouts; returns (raw final values, values clamped to [0, max_interval])."""
    raw = []
    for lo in range(0, len(idx), chunk):
        part = idx[lo:lo + chunk]
        eps = rollout(q, data.features[part], data.targets[part], episode, reward_cfg, patches=part)
        raw.extend(ep.final_value for ep in eps)
    raw = np.array(raw, dtype=float)
    return raw, np.clip(raw, 0, max_interval)


def evaluate(q, data: Dataset, idx, episode: EpisodeConfig, reward_cfg: RewardConfig,
             max_interval: int = 79, quant: QuantizerConfig | None = None) -> dict:
    quant = quant or QuantizerConfig()
    if len(idx) == 0:
        return {"interval_mae": float("nan"), "count_mae": float("nan")}
    _, pred = predicted_intervals(q, data, idx, episode, reward_cfg, max_interval)
    gt = data.targets[idx]
    pc = np.array([inverse_quantize(int(round(c)), quant) for c in pred])
    gc = np.array([inverse_quantize(int(c), quant) for c in gt])
    return {"interval_mae": float(np.mean(np.abs(pred - gt))),
            "count_mae": float(np.mean(np.abs(pc - gc)))}


@dataclass
class TrainResult:
    params: QNetParams
    history: list


class Trainer:
    """Stateful DQN training loop; one call to `run_epoch` per epoch."""

    def __init__(self, data: Dataset, cfg: TrainConfig, max_interval: int = 79):
        self.data = data
        self.cfg = cfg
        self.max_interval = max_interval
        self.rng = np.random.default_rng(cfg.seed)
        pool = cfg.episode.pool
        codes = pool.values[[i for i in range(len(pool)) if i != pool.end_index]] \
            if cfg.slot_encoding == "onehot" else None
        in_dim = dqn.input_width(data.feature_dim, cfg.episode.t_m, codes)
        self.params = QNetParams.init(in_dim, cfg.hidden, len(pool), self.rng,
                                      weight_scale=pool.max_magnitude, slot_codes=codes)
        self.target = dqn.sync_target(self.params)
        self.buffer = ReplayBuffer(cfg.buffer_capacity)
        self.epoch = 0
        self.pending = 0
        self.history: list[dict] = []
        self._losses: list[float] = []

    @property
    def epsilon(self) -> float:
        return self.cfg.epsilon.value(self.epoch)

    def _q(self, features, slots):
        return dqn.forward_batch(self.params, self.params.encode(features, slots))

    def _explore_eps(self) -> float:
        return self.epsilon

    def _record(self, tr: Transition):
        self.buffer.push(tr)
        self.pending += 1
        if self.pending >= self.cfg.update_every:
            self.pending = 0
            self._update()

    def _update(self):
        batch = self.buffer.sample(self.cfg.batch_size, self.rng)
        b = dqn.Batch.from_transitions(batch, self.params)
        loss, grads = dqn.loss_and_grads_arrays(self.params, self.target, b, self.cfg.episode.gamma)
        self.params = dqn.sgd_step(self.params, grads, self.cfg.lr)
        self._losses.append(loss)

    def run_epoch(self) -> dict:
        cfg = self.cfg
        self.target = dqn.sync_target(self.params)
        eps = self._explore_eps()
        self._losses = []
        order = self.rng.permutation(self.data.train_idx)
        for lo in range(0, len(order), cfg.rollout_chunk):
            part = order[lo:lo + cfg.rollout_chunk]
            rollout(self._q, self.data.features[part], self.data.targets[part], cfg.episode,
                    cfg.reward, cfg.mode, eps, self.rng, patches=part, sink=self._record)
        metrics = {"epoch": self.epoch, "epsilon": eps,
                   "loss": float(np.mean(self._losses)) if self._losses else float("nan"),
                   "updates": len(self._losses)}
        metrics.update(evaluate(self.params, self.data, self.data.test_idx, cfg.episode,
                                cfg.reward, self.max_interval))
        self.history.append(metrics)
        self.epoch += 1
        log.debug("epoch %(epoch)d eps=%(epsilon).2f loss=%(loss).4f mae=%(interval_mae).3f", metrics)
        return metrics

    def fit(self, epochs: int | None = None, on_epoch=None) -> TrainResult:
        stop = self.cfg.epochs if epochs is None else epochs
        while self.epoch < stop:
            self.run_epoch()
            if on_epoch is not None:
                on_epoch(self)
        return TrainResult(self.params, self.history)


class ImitationTrainer(Trainer):
    """Behaviour cloning of the error-minimising operator on on-policy states.

    Rollouts follow the current network's argmax; every visited state is
    labelled with the optimal operator and the network is fit with softmax
    cross-entropy on replayed (state, label) pairs.
    """

    def _explore_eps(self) -> float:
        return 0.0

    def _record(self, tr: Transition):
        G = self.data.targets[tr.patch]
        V = sum(tr.s.weights.slots)
        label = int(optimal_action_index(G, V, self.cfg.episode.pool, self.cfg.reward.eps1))
        super()._record(replace(tr, a=label))

    def _update(self):
        batch = self.buffer.sample(self.cfg.batch_size, self.rng)
        b = dqn.Batch.from_transitions(batch, self.params)
        loss, grads = dqn.xent_loss_and_grads(self.params, b.X, b.a)
        self.params = dqn.sgd_step(self.params, grads, self.cfg.lr)
        self._losses.append(loss)


def train(data: Dataset, cfg: TrainConfig, max_interval: int = 79) -> TrainResult:
    return Trainer(data, cfg, max_interval).fit()


def imitation_train(data: Dataset, cfg: TrainConfig, max_interval: int = 79) -> TrainResult:
    return ImitationTrainer(data, cfg, max_interval).fit()
