"""Dot annotations -> density map -> patch counts -> log-space count intervals."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

TRUNCATE = 4.0  # kernel support radius, in units of sigma


@dataclass(frozen=True)
class QuantizerConfig:
    w: float = 0.1
    l: float = -2.0
    beta: float = 0.3
    patch: int = 32

    def __post_init__(self):
        if self.w <= 0:
            raise ValueError("interval width w must be positive")
        if self.patch < 1:
            raise ValueError("patch size must be >= 1")


@dataclass
class DotMap:
    width: int
    height: int
    dots: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))

    def __post_init__(self):
        self.dots = np.asarray(self.dots, dtype=float).reshape(-1, 2)
        x, y = self.dots[:, 0], self.dots[:, 1]
        if np.any((x < 0) | (x >= self.width) | (y < 0) | (y >= self.height)):
            raise ValueError("dot outside the map bounds")


@dataclass
class DensityMap:
    values: np.ndarray  # (height, width), people per pixel

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def total(self) -> float:
        return float(self.values.sum())


def adaptive_sigmas(dm: DotMap, cfg: QuantizerConfig, k: int = 3) -> np.ndarray:
    """beta times the mean distance to each dot's k nearest other dots."""
    n = len(dm.dots)
    if n == 0:
        return np.zeros(0)
    if n == 1:
        return np.array([cfg.beta * min(dm.width, dm.height) / 4.0])
    kk = min(k, n - 1)
    dist, _ = cKDTree(dm.dots).query(dm.dots, k=kk + 1)
    return cfg.beta * dist[:, 1:].mean(axis=1)


def _kernel(x0: float, y0: float, sigma: float, width: int, height: int):
    """Truncated Gaussian on pixel centres, clipped to the image and renormalised to unit mass."""
    px, py = min(int(x0), width - 1), min(int(y0), height - 1)
    r = int(math.ceil(TRUNCATE * sigma))
    xs = np.arange(max(px - r, 0), min(px + r, width - 1) + 1)
    ys = np.arange(max(py - r, 0), min(py + r, height - 1) + 1)
    if sigma > 0:
        gx = np.exp(-((xs + 0.5 - x0) ** 2) / (2 * sigma * sigma))
        gy = np.exp(-((ys + 0.5 - y0) ** 2) / (2 * sigma * sigma))
        k = np.outer(gy, gx)
        s = k.sum()
    else:
        s = 0.0
    if not s > 0:
        # degenerate width (coincident dots): all mass in the containing pixel
        k = np.zeros((len(ys), len(xs)))
        k[py - ys[0], px - xs[0]] = 1.0
        s = 1.0
    return ys[0], xs[0], k / s


def density_map(dm: DotMap, cfg: QuantizerConfig | None = None) -> DensityMap:
    cfg = cfg or QuantizerConfig()
    out = np.zeros((dm.height, dm.width))
    for (x, y), sigma in zip(dm.dots, adaptive_sigmas(dm, cfg)):
        y0, x0, k = _kernel(x, y, sigma, dm.width, dm.height)
        out[y0:y0 + k.shape[0], x0:x0 + k.shape[1]] += k
    return DensityMap(out)


def patch_counts(d: DensityMap, cfg: QuantizerConfig | None = None) -> np.ndarray:
    """Sum the density over non-overlapping patch x patch blocks (zero-padding right/bottom)."""
    cfg = cfg or QuantizerConfig()
    p = cfg.patch
    H, W = d.values.shape
    ph, pw = -(-H // p), -(-W // p)
    padded = np.zeros((ph * p, pw * p))
    padded[:H, :W] = d.values
    return padded.reshape(ph, p, pw, p).sum(axis=(1, 3))


def quantize(N: float, cfg: QuantizerConfig | None = None) -> int:
    cfg = cfg or QuantizerConfig()
    if N < 0:
        raise ValueError("counts are nonnegative")
    if N == 0:
        return 0
    return max(math.floor((math.log(N) - cfg.l) / cfg.w + 2), 1)


def inverse_quantize(C: int, cfg: QuantizerConfig | None = None) -> float:
    """Representative count of interval C: the mean of its two boundary counts."""
    cfg = cfg or QuantizerConfig()
    if C < 0:
        raise ValueError("interval index must be nonnegative")
    if C == 0:
        return 0.0
    if C == 1:
        return 0.5 * math.exp(cfg.l + cfg.w * (C - 1))
    return 0.5 * math.exp(cfg.l + cfg.w * (C - 2)) + 0.5 * math.exp(cfg.l + cfg.w * (C - 1))


def quantize_grid(counts: np.ndarray, cfg: QuantizerConfig | None = None) -> np.ndarray:
    return np.vectorize(lambda n: quantize(float(n), cfg), otypes=[int])(counts)


# -- text formats ------------------------------------------------------------

def read_dotmap(path) -> DotMap:
    lines = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines or len(lines[0]) != 2:
        raise ValueError(f"{path}: first line must be 'width height'")
    width, height = int(lines[0][0]), int(lines[0][1])
    dots = [(float(x), float(y)) for x, y in lines[1:]]
    return DotMap(width, height, np.array(dots).reshape(-1, 2))


def write_dotmap(dm: DotMap, path):
    rows = [f"{dm.width} {dm.height}"] + [f"{x!r} {y!r}" for x, y in dm.dots.tolist()]
    Path(path).write_text("\n".join(rows) + "\n")


def grid_csv(grid: np.ndarray, fmt: str = "{:.6f}") -> str:
    return "".join(",".join(fmt.format(v) for v in row) + "\n" for row in np.atleast_2d(grid))
