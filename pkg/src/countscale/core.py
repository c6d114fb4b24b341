"""Weighing-task primitives: value operators, weight vectors and episode rules.

A patch count is estimated by sequentially placing signed "weights" (value
operators) on a virtual scale pan until the running sum matches the target
interval, or until the maximum number of steps is spent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

INTERVAL = "interval"
CONTINUOUS = "continuous"


class SlotOverflow(ValueError):
    """Raised when a weight vector has no free slot left."""


class NotAValueAction(ValueError):
    """Raised when the `end` operator is written into a weight vector."""


@dataclass(frozen=True)
class Action:
    """A signed value operator, or the terminal `end` operator when value is None."""

    value: float | None = None

    def __post_init__(self):
        if self.value is not None and self.value == 0:
            raise ValueError("value operators must be nonzero")

    @classmethod
    def end(cls) -> Action:
        return cls(None)

    @property
    def is_end(self) -> bool:
        return self.value is None

    @property
    def label(self) -> str:
        if self.value is None:
            return "End"
        return f"{self.value:+g}"

    def __str__(self):
        return self.label


END = Action.end()


@dataclass(frozen=True)
class ActionPool:
    """Ordered operator pool; exactly one `end` entry, placed last by convention."""

    actions: tuple[Action, ...]
    mode: str = INTERVAL

    def __post_init__(self):
        if sum(a.is_end for a in self.actions) != 1:
            raise ValueError("an action pool needs exactly one End action")
        vals = [a.value for a in self.actions if not a.is_end]
        if len(set(vals)) != len(vals):
            raise ValueError("duplicate values in action pool")
        if self.mode not in (INTERVAL, CONTINUOUS):
            raise ValueError(f"unknown pool mode {self.mode!r}")
        if self.mode == INTERVAL and any(v != int(v) for v in vals):
            raise ValueError("interval pools hold integer operators only")

    @classmethod
    def from_values(cls, values, mode: str = INTERVAL) -> ActionPool:
        cast = int if mode == INTERVAL else float
        return cls(tuple(Action(cast(v)) for v in values) + (END,), mode)

    def __len__(self):
        return len(self.actions)

    def __iter__(self):
        return iter(self.actions)

    def __getitem__(self, i) -> Action:
        return self.actions[i]

    def index(self, action: Action) -> int:
        return self.actions.index(action)

    @property
    def end_index(self) -> int:
        return next(i for i, a in enumerate(self.actions) if a.is_end)

    @property
    def value_actions(self) -> tuple[Action, ...]:
        return tuple(a for a in self.actions if not a.is_end)

    @property
    def values(self) -> np.ndarray:
        """Per-index increment, with 0 standing in for `end`."""
        return np.array([0.0 if a.is_end else float(a.value) for a in self.actions])

    @property
    def max_magnitude(self) -> float:
        return max(abs(a.value) for a in self.value_actions)

    @property
    def labels(self) -> list[str]:
        return [a.label for a in self.actions]


DEFAULT_POOL = ActionPool.from_values([-10, -5, -2, -1, 1, 2, 5, 10])

CONTINUOUS_POOL = ActionPool.from_values(
    [-5, -2, -1, -0.5, -0.2, -0.1, -0.05, -0.02, -0.01,
     0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1, 2, 5],
    mode=CONTINUOUS,
)


def pool_for_mode(mode: str) -> ActionPool:
    return CONTINUOUS_POOL if mode == CONTINUOUS else DEFAULT_POOL


@dataclass(frozen=True)
class WeightVector:
    """Fixed-length record of the operator values placed so far."""

    slots: tuple[float, ...]
    filled: int = 0

    def __post_init__(self):
        if not 0 <= self.filled <= len(self.slots):
            raise ValueError("filled out of range")
        if any(v != 0 for v in self.slots[self.filled:]):
            raise ValueError("slots beyond `filled` must be zero")

    @classmethod
    def zeros(cls, t_m: int) -> WeightVector:
        return cls((0,) * t_m, 0)

    @property
    def t_m(self) -> int:
        return len(self.slots)

    @property
    def is_full(self) -> bool:
        return self.filled == len(self.slots)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.slots, dtype=float)

    def to_dict(self) -> dict:
        return {"slots": list(self.slots), "filled": self.filled}

    @classmethod
    def from_dict(cls, d: dict) -> WeightVector:
        return cls(tuple(d["slots"]), int(d["filled"]))


@dataclass(frozen=True, eq=False)
class EpisodeState:
    """Q-network input: a patch feature vector paired with its weight vector."""

    feature: np.ndarray
    weights: WeightVector


@dataclass(frozen=True)
class EpisodeConfig:
    t_m: int = 8
    pool: ActionPool = field(default_factory=lambda: DEFAULT_POOL)
    gamma: float = 0.9

    def __post_init__(self):
        if self.t_m < 1:
            raise ValueError("t_m must be >= 1")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")


def apply_update(w: WeightVector, a: Action) -> WeightVector:
    """Write `a` into the first free slot of `w` (the weight updating operator)."""
    if a.is_end:
        raise NotAValueAction("End cannot be placed on the scale")
    if w.is_full:
        raise SlotOverflow(f"all {w.t_m} slots are used")
    slots = list(w.slots)
    slots[w.filled] = a.value
    return WeightVector(tuple(slots), w.filled + 1)


def accumulated_value(w: WeightVector) -> float:
    placed = w.slots[: w.filled]
    if all(isinstance(v, int) for v in placed):
        return sum(placed)
    # fsum keeps the total independent of placement order
    return math.fsum(placed)


def is_terminal(t: int, a: Action, cfg: EpisodeConfig) -> bool:
    """True when step `t` ends the episode: `end` was chosen or the last slot is filled."""
    if not 0 <= t <= cfg.t_m:
        raise ValueError(f"step {t} outside [0, {cfg.t_m}]")
    return a.is_end or t >= cfg.t_m - 1
