"""Environment feedback for the weighing task.

Four reward terms drive the agent: the ending reward (on `end`), the
force-ending reward (when the step budget runs out), the guiding reward
(bonus for the error-minimising operator) and the squeezed guiding reward,
which replaces the guiding reward with all-negative values once the running
estimate overshoots the target by more than a tolerance band.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .core import END, Action, ActionPool


class RewardMode(str, enum.Enum):
    FULL = "full"
    NO_GUIDING = "no_guiding"
    NO_FORCE_ENDING = "no_force_ending"
    NO_SQUEEZING = "no_squeezing"


@dataclass(frozen=True)
class RewardConfig:
    eta_e: float = 5.0
    eta_g: float = 3.0
    eta_plus: float = 1.0
    eta_minus: float = -1.0
    eta_sg: float = -1.0
    eta_s: float = -3.0
    eps1: float = 0.0
    eps2: float = 0.5

    def __post_init__(self):
        if self.eta_e <= 0:
            raise ValueError("eta_e must be positive")
        if self.eps1 < 0:
            raise ValueError("eps1 must be nonnegative")
        if self.eps2 <= 0:
            raise ValueError("eps2 must be positive")

    @classmethod
    def continuous(cls, **kw) -> RewardConfig:
        """Defaults for the real-valued pool; eps1 is half the smallest operator."""
        kw.setdefault("eps1", 0.005)
        return cls(**kw)


@dataclass(frozen=True)
class StepContext:
    G: float
    v_prev: float
    v_now: float
    action: Action
    t: int = 0
    forced: bool = False

    @property
    def err_now(self) -> float:
        return abs(self.G - self.v_now)

    @property
    def err_prev(self) -> float:
        return abs(self.G - self.v_prev)


def ending_reward(E: float, cfg: RewardConfig) -> float:
    return cfg.eta_e if E <= cfg.eps1 else -cfg.eta_e


def force_ending_reward(E: float, cfg: RewardConfig) -> float:
    # same rule as a voluntary ending, applied to the error after the last slot
    return ending_reward(E, cfg)


def _tie_order(pool: ActionPool) -> list[int]:
    """Value-action indices ordered by preference on equal error: small |a| first, then positive."""
    idx = [i for i, a in enumerate(pool) if not a.is_end]
    return sorted(idx, key=lambda i: (abs(pool[i].value), pool[i].value < 0))


def optimal_action(G: float, V: float, pool: ActionPool, eps1: float = 0.0) -> Action:
    """The operator that brings the estimate closest to G, or `end` when already balanced."""
    if abs(G - V) <= eps1:
        return END
    best, best_err = None, None
    for i in _tie_order(pool):
        err = abs(G - (V + pool[i].value))
        if best_err is None or err < best_err:
            best, best_err = pool[i], err
    return best


def guiding_reward(ctx: StepContext, a_g: Action, cfg: RewardConfig) -> float:
    if ctx.action == a_g:
        return cfg.eta_g
    if ctx.err_now < ctx.err_prev:
        return cfg.eta_plus
    return cfg.eta_minus


def direction_reward(ctx: StepContext, cfg: RewardConfig) -> float:
    """Guiding reward without the optimal-action bonus: +1 / -1 by error direction."""
    return cfg.eta_plus if ctx.err_now < ctx.err_prev else cfg.eta_minus


def squeeze_gate(V: float, G: float, cfg: RewardConfig) -> int:
    """+1 while the overshoot V - G stays within G * eps2, else -1 (boundary counts as inside)."""
    return 1 if G * cfg.eps2 - (V - G) >= 0 else -1


def squeezed_guiding_reward(ctx: StepContext, a_g: Action, cfg: RewardConfig) -> float:
    return cfg.eta_sg if ctx.action == a_g else cfg.eta_s


def step_reward(ctx: StepContext, cfg: RewardConfig, pool: ActionPool,
                mode: RewardMode | str = RewardMode.FULL) -> float:
    """Reward of one transition, dispatched over the ending/forced/guiding/squeezed cases.

    The ablation `mode` removes one designed term: ``no_guiding`` scores
    intermediate steps by error direction only, ``no_force_ending`` treats the
    forced last step like any intermediate step, and ``no_squeezing`` never
    switches to the squeezed regime.
    """
    mode = RewardMode(mode)
    if ctx.action.is_end:
        return ending_reward(ctx.err_prev, cfg)
    if ctx.forced and mode is not RewardMode.NO_FORCE_ENDING:
        return force_ending_reward(ctx.err_now, cfg)
    a_g = optimal_action(ctx.G, ctx.v_prev, pool, cfg.eps1)
    if mode is not RewardMode.NO_SQUEEZING and squeeze_gate(ctx.v_now, ctx.G, cfg) < 0:
        return squeezed_guiding_reward(ctx, a_g, cfg)
    if mode is RewardMode.NO_GUIDING:
        return direction_reward(ctx, cfg)
    return guiding_reward(ctx, a_g, cfg)


# -- vectorised twins used by the rollout engine ---------------------------

def optimal_action_index(G, V, pool: ActionPool, eps1: float = 0.0) -> np.ndarray:
    """Array form of `optimal_action`, returning pool indices."""
    G = np.asarray(G, dtype=float)
    V = np.asarray(V, dtype=float)
    order = np.array(_tie_order(pool))
    vals = pool.values[order]
    err = np.abs(G[..., None] - (V[..., None] + vals))
    best = order[np.argmin(err, axis=-1)]
    return np.where(np.abs(G - V) <= eps1, pool.end_index, best)


def step_reward_batch(G, v_prev, action_idx, forced, cfg: RewardConfig,
                      pool: ActionPool, mode: RewardMode | str = RewardMode.FULL) -> np.ndarray:
    """Rewards for many transitions at once; agrees exactly with `step_reward`."""
    mode = RewardMode(mode)
    G = np.asarray(G, dtype=float)
    v_prev = np.asarray(v_prev, dtype=float)
    action_idx = np.asarray(action_idx)
    forced = np.asarray(forced, dtype=bool)
    is_end = action_idx == pool.end_index
    v_now = v_prev + pool.values[action_idx]
    e_prev = np.abs(G - v_prev)
    e_now = np.abs(G - v_now)
    hit = action_idx == optimal_action_index(G, v_prev, pool, cfg.eps1)

    decreased = np.where(e_now < e_prev, cfg.eta_plus, cfg.eta_minus)
    if mode is RewardMode.NO_GUIDING:
        r = decreased
    else:
        r = np.where(hit, cfg.eta_g, decreased)
    if mode is not RewardMode.NO_SQUEEZING:
        squeezed = G * cfg.eps2 - (v_now - G) < 0
        r = np.where(squeezed, np.where(hit, cfg.eta_sg, cfg.eta_s), r)
    if mode is not RewardMode.NO_FORCE_ENDING:
        r = np.where(forced, np.where(e_now <= cfg.eps1, cfg.eta_e, -cfg.eta_e), r)
    r = np.where(is_end, np.where(e_prev <= cfg.eps1, cfg.eta_e, -cfg.eta_e), r)
    return r.astype(float)
