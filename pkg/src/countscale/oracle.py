"""Exact reference solutions for the integer weighing MDP.

These are used as test oracles and as injectable "perfect" Q-functions: a
breadth-first search over running sums, the repeated error-minimising
operator, and a backward-induction Q-table over (target, value, filled).
"""

from __future__ import annotations

import csv
import io
from collections import deque
from dataclasses import dataclass

import numpy as np

from .core import INTERVAL, Action, ActionPool, DEFAULT_POOL, END
from .rewards import RewardConfig, RewardMode, optimal_action, optimal_action_index, step_reward_batch


class Unreachable(Exception):
    """No operator sequence within the step budget reaches the target."""


@dataclass(frozen=True)
class OracleResult:
    G: int
    sequence: tuple[Action, ...]
    achieved: float

    @property
    def length(self) -> int:
        return len(self.sequence)


def _require_integer(pool: ActionPool):
    if pool.mode != INTERVAL:
        raise ValueError("oracles cover integer pools only")


def bfs_shortest(G: int, pool: ActionPool = DEFAULT_POOL, t_m: int = 8,
                 v_min: int = -20, v_max: int = 120) -> OracleResult:
    """Fewest value operators taking the sum from 0 to G.

    Neighbours are expanded in pool order, so among equally short sequences the
    one that is lexicographically first by pool index wins.
    """
    _require_integer(pool)
    values = [int(a.value) for a in pool.value_actions]
    parent = {0: None}
    depth = {0: 0}
    queue = deque([0])
    while queue:
        v = queue.popleft()
        if v == G:
            break
        if depth[v] == t_m:
            continue
        for a in values:
            nxt = v + a
            if v_min <= nxt <= v_max and nxt not in parent:
                parent[nxt] = (v, a)
                depth[nxt] = depth[v] + 1
                queue.append(nxt)
    if G not in parent:
        raise Unreachable(f"target {G} not reachable within {t_m} steps")
    seq = []
    v = G
    while parent[v] is not None:
        v, a = parent[v]
        seq.append(Action(a))
    return OracleResult(G, tuple(reversed(seq)), G)


def greedy_sequence(G: float, pool: ActionPool = DEFAULT_POOL, t_m: int = 8,
                    eps1: float = 0.0) -> OracleResult:
    """Apply the error-minimising operator from 0 until balanced or out of steps."""
    V = 0
    seq = []
    while len(seq) < t_m:
        a = optimal_action(G, V, pool, eps1)
        if a.is_end:
            break
        seq.append(a)
        V += a.value
    return OracleResult(G, tuple(seq), V)


@dataclass
class QTable:
    """Exact optimal Q-values indexed as q[G - g_min, V - v_min, filled, action]."""

    q: np.ndarray
    pool: ActionPool
    t_m: int
    gamma: float
    reward_cfg: RewardConfig
    mode: RewardMode
    g_min: int
    v_min: int

    @property
    def g_max(self) -> int:
        return self.g_min + self.q.shape[0] - 1

    @property
    def v_max(self) -> int:
        return self.v_min + self.q.shape[1] - 1

    def values(self, G, V, filled) -> np.ndarray:
        return self.q[np.asarray(G) - self.g_min, np.asarray(V) - self.v_min, np.asarray(filled)]

    def absorbed(self, filled: int) -> float:
        """Value of leaving the tabulated range with `filled` slots used: eta_minus per remaining step."""
        remaining = self.t_m - filled
        return float(sum(self.reward_cfg.eta_minus * self.gamma ** k for k in range(remaining)))


def exact_q_table(pool: ActionPool = DEFAULT_POOL, t_m: int = 8, gamma: float = 0.9,
                  reward_cfg: RewardConfig | None = None, mode: RewardMode | str = RewardMode.FULL,
                  g_range=(0, 80), v_range=(-20, 120)) -> QTable:
    """Backward induction over the number of filled slots."""
    _require_integer(pool)
    reward_cfg = reward_cfg or RewardConfig()
    mode = RewardMode(mode)
    Gs = np.arange(g_range[0], g_range[1] + 1)
    Vs = np.arange(v_range[0], v_range[1] + 1)
    n_a = len(pool)
    end = pool.end_index
    steps = pool.values.astype(int)
    q = np.zeros((len(Gs), len(Vs), t_m, n_a))
    table = QTable(q, pool, t_m, gamma, reward_cfg, mode, int(Gs[0]), int(Vs[0]))

    G = np.broadcast_to(Gs[:, None, None], (len(Gs), len(Vs), n_a))
    V = np.broadcast_to(Vs[None, :, None], G.shape)
    A = np.broadcast_to(np.arange(n_a)[None, None, :], G.shape)
    v_next = V + steps[A]
    inside = (v_next >= Vs[0]) & (v_next <= Vs[-1])
    vi_next = np.clip(v_next - Vs[0], 0, len(Vs) - 1)
    gi = np.broadcast_to(np.arange(len(Gs))[:, None, None], G.shape)

    for f in range(t_m - 1, -1, -1):
        forced = np.full(G.shape, f == t_m - 1)
        r = step_reward_batch(G, V, A, forced, reward_cfg, pool, mode)
        if f == t_m - 1:
            q[:, :, f, :] = r
            continue
        best_next = q[:, :, f + 1, :].max(axis=-1)[gi, vi_next]
        boot = np.where(inside, best_next, table.absorbed(f + 1))
        qf = r + gamma * boot
        qf[..., end] = r[..., end]
        q[:, :, f, :] = qf
    return table


def q_policy_sequence(table: QTable, G: int) -> OracleResult:
    """Greedy rollout of the table's argmax policy from an empty pan (value operators only)."""
    V, seq = 0, []
    for f in range(table.t_m):
        a = table.pool[int(np.argmax(table.values(G, V, f)))]
        if a.is_end:
            break
        seq.append(a)
        V += int(a.value)
        if not table.v_min <= V <= table.v_max:
            break
    return OracleResult(G, tuple(seq), V)


class ExactQFunction:
    """Q-function backed by an exact table.

    Features are expected to carry the target interval in column 0, which is
    how oracle-injected rollouts encode the ground truth.
    """

    def __init__(self, table: QTable):
        self.table = table

    def __call__(self, features: np.ndarray, slots: np.ndarray) -> np.ndarray:
        G = np.rint(features[:, 0]).astype(int)
        V = np.rint(slots.sum(axis=1)).astype(int)
        filled = np.count_nonzero(slots, axis=1)
        V = np.clip(V, self.table.v_min, self.table.v_max)
        return self.table.values(G, V, np.minimum(filled, self.table.t_m - 1))


class GreedyQFunction:
    """Scores the error-minimising operator 1 and everything else 0."""

    def __init__(self, pool: ActionPool = DEFAULT_POOL, eps1: float = 0.0):
        self.pool = pool
        self.eps1 = eps1

    def __call__(self, features: np.ndarray, slots: np.ndarray) -> np.ndarray:
        best = optimal_action_index(features[:, 0], slots.sum(axis=1), self.pool, self.eps1)
        q = np.zeros((len(features), len(self.pool)))
        q[np.arange(len(features)), best] = 1.0
        return q


def results_csv(results) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["G", "length", "achieved", "sequence"])
    for res in results:
        w.writerow([res.G, res.length, res.achieved, " ".join(a.label for a in res.sequence)])
    return buf.getvalue()


def sequence_labels(res: OracleResult) -> list[str]:
    labels = [a.label for a in res.sequence]
    return labels if labels and labels[-1] == END.label else labels + [END.label]
