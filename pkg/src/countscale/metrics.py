"""Counting metrics and greedy inference."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import EpisodeConfig
from .quantizer import QuantizerConfig, inverse_quantize
from .rewards import RewardConfig
from .trainer import rollout


class LengthMismatch(ValueError):
    pass


class ShapeMismatch(ValueError):
    pass


def mae_mse(pred, gt) -> tuple[float, float]:
    """Mean absolute error and root mean squared error."""
    pred = np.asarray(pred, dtype=float)
    gt = np.asarray(gt, dtype=float)
    if pred.shape != gt.shape:
        raise LengthMismatch(f"{pred.shape} vs {gt.shape}")
    if pred.size == 0:
        raise ValueError("empty input")
    diff = pred - gt
    return float(np.mean(np.abs(diff))), float(np.sqrt(np.mean(diff ** 2)))


def game(pred_grid, gt_grid, L: int) -> float:
    """Grid Average Mean absolute Error at level L for one image.

    The grid is cut into 2^L x 2^L regions (floor splits for awkward sizes)
    and the absolute region-count errors are summed.
    """
    pred = np.asarray(pred_grid, dtype=float)
    gt = np.asarray(gt_grid, dtype=float)
    if pred.shape != gt.shape or pred.ndim != 2:
        raise ShapeMismatch(f"{pred.shape} vs {gt.shape}")
    if L < 0:
        raise ValueError("level must be nonnegative")
    k = 2 ** L
    H, W = pred.shape
    rows = [(i * H) // k for i in range(k + 1)]
    cols = [(j * W) // k for j in range(k + 1)]
    diff = pred - gt
    total = 0.0
    for i in range(k):
        for j in range(k):
            total += abs(diff[rows[i]:rows[i + 1], cols[j]:cols[j + 1]].sum())
    return total


@dataclass
class TraceRecord:
    patch: int
    gt: float | None
    steps: list = field(default_factory=list)  # (t, action label, Q-vector, accumulated value)


@dataclass
class Inference:
    raw_intervals: np.ndarray
    intervals: np.ndarray
    counts: np.ndarray
    traces: list

    @property
    def image_count(self) -> float:
        return float(self.counts.sum())


def infer(qnet, features, episode: EpisodeConfig | None = None, quant: QuantizerConfig | None = None,
          max_interval: int = 79, targets=None, patches=None) -> Inference:
    """Greedy weighing per patch, then interval -> count.

    Final values are clamped to [0, max_interval] before inverse quantisation;
    the unclamped values are kept in `raw_intervals` and in the traces.
    """
    episode = episode or EpisodeConfig()
    quant = quant or QuantizerConfig()
    features = np.atleast_2d(np.asarray(features, dtype=float))
    n = len(features)
    gt = np.zeros(n) if targets is None else np.asarray(targets, dtype=float)
    # rewards do not influence greedy decisions; targets only label the transitions
    eps = rollout(qnet, features, gt, episode, RewardConfig(), patches=patches)
    raw = np.array([ep.final_value for ep in eps], dtype=float)
    intervals = np.clip(raw, 0, max_interval)
    if episode.pool.mode == "interval":
        counts = np.array([inverse_quantize(int(round(c)), quant) for c in intervals])
    else:
        counts = intervals.copy()
    labels = episode.pool.labels
    traces = [TraceRecord(ep.patch, None if targets is None else float(ep.G),
                          [(s.t, labels[s.action], np.asarray(s.q, dtype=float), float(s.value))
                           for s in ep.steps])
              for ep in eps]
    return Inference(raw, intervals, counts, traces)
