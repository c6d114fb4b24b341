"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Criteria 6-8 train full-size models and take most of the runtime.
"""

import dataclasses
import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from helpers import fd_check, random_problem

from countscale import io as cio
from countscale.cli import main as cli_main
from countscale.core import DEFAULT_POOL
from countscale.oracle import (Unreachable, bfs_shortest, exact_q_table, greedy_sequence,
                               q_policy_sequence)
from countscale.quantizer import (DotMap, density_map, inverse_quantize, patch_counts, quantize)
from countscale.rewards import (RewardConfig, RewardMode, StepContext, optimal_action_index,
                                step_reward, step_reward_batch)
from countscale.trainer import (ImitationTrainer, SynthConfig, TrainConfig, Trainer, make_dataset,
                                predicted_intervals, rollout)


def report(n: int, ok: bool, detail: str):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


# -- 1. reward tables --------------------------------------------------------

ETA_E, ETA_G, ETA_P, ETA_M, ETA_SG, ETA_S, EPS1, EPS2 = 5, 3, 1, -1, -1, -3, 0, 0.5
VALUES = [-10, -5, -2, -1, 1, 2, 5, 10]


def reference_reward(G, V, a, forced):
    """Reward equations written out independently of the package."""
    if a is None:
        return ETA_E if abs(G - V) <= EPS1 else -ETA_E
    V1 = V + a
    if forced:
        return ETA_E if abs(G - V1) <= EPS1 else -ETA_E
    if abs(G - V) <= EPS1:
        a_g = None
    else:
        a_g = min(VALUES, key=lambda v: (abs(G - V - v), abs(v), v < 0))
    if G * EPS2 - (V1 - G) < 0:
        return ETA_SG if a == a_g else ETA_S
    if a == a_g:
        return ETA_G
    return ETA_P if abs(G - V1) < abs(G - V) else ETA_M


def test_criterion_1_reward_tables():
    G, V, A, F = np.meshgrid(np.arange(81), np.arange(-20, 101), np.arange(9), [False, True],
                             indexing="ij")
    G, V, A, F = G.ravel(), V.ravel(), A.ravel(), F.ravel()
    t0 = time.perf_counter()
    batch = step_reward_batch(G, V, A, F, RewardConfig(), DEFAULT_POOL)
    elapsed = time.perf_counter() - t0
    vals = [None if a == 8 else VALUES[a] for a in range(9)]
    ref = np.array([reference_reward(g, v, vals[a], f) for g, v, a, f in
                    zip(G.tolist(), V.tolist(), A.tolist(), F.tolist())], dtype=float)
    scalar = np.array([step_reward(StepContext(g, v, v + DEFAULT_POOL.values[a], DEFAULT_POOL[a],
                                               0, f and a != 8), RewardConfig(), DEFAULT_POOL)
                       for g, v, a, f in zip(G.tolist(), V.tolist(), A.tolist(), F.tolist())])
    mism = int(np.sum(batch != ref) + np.sum(scalar != ref))
    report(1, mism == 0 and elapsed < 1.0,
           f"{G.size} contexts, {mism} mismatches, sweep {elapsed:.3f}s (< 1s)")


# -- 2. quantization ---------------------------------------------------------

def test_criterion_2_quantization():
    t0 = time.perf_counter()
    bad_rt = [C for C in range(101) if quantize(inverse_quantize(C)) != C]
    N = np.random.default_rng(0).uniform(math.exp(-2), 100, 10_000)
    err = max(abs(math.log(inverse_quantize(quantize(n))) - math.log(n)) for n in N)
    elapsed = time.perf_counter() - t0
    report(2, not bad_rt and err <= 0.1 and elapsed < 1.0,
           f"round-trip failures {bad_rt}, max log error {err:.4f} (<= 0.1), {elapsed:.3f}s")


# -- 3. greedy vs BFS ----------------------------------------------------------

def test_criterion_3_oracle_equivalence():
    t0 = time.perf_counter()
    missed, unequal = [], []
    for G in range(81):
        g = greedy_sequence(G)
        if g.achieved != G:
            missed.append(G)
            continue
        try:
            if bfs_shortest(G).length != g.length:
                unequal.append(G)
        except Unreachable:
            unequal.append(G)
    elapsed = time.perf_counter() - t0
    report(3, not missed and not unequal and elapsed < 5,
           f"greedy misses G={missed} within 8 steps; length != BFS for {unequal}; {elapsed:.2f}s")


# -- 4. gradient check -------------------------------------------------------

def test_criterion_4_gradient_check():
    rng = np.random.default_rng(0)
    t0 = time.perf_counter()
    worst, checked, skipped = 0.0, 0, 0
    for _ in range(100):
        p, target, b = random_problem(rng, n=int(rng.integers(1, 33)))
        w, c, s = fd_check(p, target, b)
        worst, checked, skipped = max(worst, w), checked + c, skipped + s
    elapsed = time.perf_counter() - t0
    report(4, worst <= 1e-4 and elapsed < 30 and checked > 0,
           f"worst relative error {worst:.2e} over {checked} parameters "
           f"({skipped} kink-adjacent skipped), {elapsed:.1f}s")


# -- 5. exact Q-table ---------------------------------------------------------

def test_criterion_5_q_table():
    table = exact_q_table()
    cfg = RewardConfig()
    rng = np.random.default_rng(0)
    residuals = 0
    for _ in range(1000):
        G, V, f, i = (int(rng.integers(0, 81)), int(rng.integers(-20, 121)),
                      int(rng.integers(0, 8)), int(rng.integers(9)))
        a = DEFAULT_POOL[i]
        v_now = V if a.is_end else V + int(a.value)
        r = step_reward(StepContext(G, V, v_now, a, f, f == 7 and not a.is_end), cfg, DEFAULT_POOL)
        if a.is_end or f == 7:
            expect = r
        elif -20 <= v_now <= 120:
            expect = r + 0.9 * float(np.max(table.values(G, v_now, f + 1)))
        else:
            expect = r + 0.9 * table.absorbed(f + 1)
        residuals += table.values(G, V, f)[i] != expect
    missed = [G for G in range(81) if q_policy_sequence(table, G).achieved != G]
    report(5, residuals == 0 and not missed,
           f"nonzero Bellman residuals {residuals}/1000; argmax policy misses G={missed}")


# -- 6-8. learning ---------------------------------------------------------------

CLEAN = SynthConfig()
NOISY = SynthConfig(num_patches=2000, noise_sigma=0.5)


def held_out_mae(params, data, cfg: TrainConfig) -> float:
    _, pred = predicted_intervals(params, data, data.test_idx, cfg.episode, cfg.reward, 79)
    return float(np.mean(np.abs(pred - data.targets[data.test_idx])))


def test_criterion_6_desk_scale_learning():
    data = make_dataset(CLEAN)
    cfg = TrainConfig()
    t0 = time.perf_counter()
    tr = Trainer(data, cfg)
    tr.fit()
    elapsed = time.perf_counter() - t0
    curve = [m["interval_mae"] for m in tr.history]
    best = min(curve)
    first = next((m["epoch"] + 1 for m in tr.history if m["interval_mae"] <= 0.5), None)
    report(6, best <= 0.5 and elapsed <= 300,
           f"held-out interval MAE first <= 0.5 at epoch {first}, best {best:.3f}, "
           f"final {curve[-1]:.3f} after {len(curve)} epochs; {elapsed:.0f}s (<= 300s)")


@pytest.fixture(scope="module")
def noisy_data():
    return make_dataset(NOISY)


@pytest.fixture(scope="module")
def ablation(noisy_data):
    out = {}
    for mode in RewardMode:
        cfg = TrainConfig(mode=mode.value)
        tr = Trainer(noisy_data, cfg)
        tr.fit()
        out[mode.value] = held_out_mae(tr.params, noisy_data, cfg)
    return out


def test_criterion_7_ablation_ordering(ablation):
    full = ablation["full"]
    others = {k: v for k, v in ablation.items() if k != "full"}
    ok = all(full < v for v in others.values()) and ablation["no_guiding"] >= 2 * full
    table = ", ".join(f"{k}={v:.3f}" for k, v in ablation.items())
    report(7, ok, f"final held-out MAE {table}; need full < all and no_guiding >= 2x full")


def imitation_agreement(params, data, cfg: TrainConfig) -> float:
    idx = data.test_idx
    eps = rollout(params, data.features[idx], data.targets[idx], cfg.episode, cfg.reward)
    hits = total = 0
    for ep in eps:
        V = 0.0
        for s in ep.steps:
            best = int(optimal_action_index(ep.G, V, cfg.episode.pool, cfg.reward.eps1))
            hits += s.action == best
            total += 1
            V = s.value
    return hits / total


def test_criterion_8_imitation_baseline(ablation, noisy_data):
    cfg = TrainConfig()
    clean = make_dataset(CLEAN)
    im = ImitationTrainer(clean, cfg)
    im.fit()
    agree = imitation_agreement(im.params, clean, cfg)
    im_noisy = ImitationTrainer(noisy_data, cfg)
    im_noisy.fit()
    im_mae = held_out_mae(im_noisy.params, noisy_data, cfg)
    dqn_mae = ablation["full"]
    report(8, agree >= 0.99 and dqn_mae <= im_mae,
           f"clean imitation agreement {agree:.4f} (>= 0.99); noisy MAE dqn {dqn_mae:.3f} "
           f"vs imitation {im_mae:.3f} (dqn <= imitation)")


# -- 9. determinism -------------------------------------------------------------

def test_criterion_9_determinism(tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text("[synth]\nnum_patches = 300\n[train]\nepochs = 6\n")
    args = ["--config", str(ini), "--seed", "7"]
    dirs = [tmp_path / n for n in ("a", "b", "split")]
    codes = [cli_main(args + ["--out-dir", str(dirs[0]), "train"]),
             cli_main(args + ["--out-dir", str(dirs[1]), "train"]),
             cli_main(args + ["--out-dir", str(dirs[2]), "train", "--stop-at", "3"]),
             cli_main(args + ["--out-dir", str(dirs[2]), "train", "--resume",
                              str(dirs[2] / "checkpoint.json")])]
    same = [all((d / f).read_bytes() == (dirs[0] / f).read_bytes()
                for f in ("checkpoint.json", "metrics.csv")) for d in dirs[1:]]
    report(9, codes == [0] * 4 and all(same),
           f"identical reruns: {same[0]}; resumed from epoch 3 matches uninterrupted: {same[1]}")


# -- 10. density pipeline ---------------------------------------------------------

def test_criterion_10_density_pipeline():
    rng = np.random.default_rng(0)
    worst_mass = worst_rel = 0.0
    for _ in range(100):
        w, h = (int(x) for x in rng.integers(16, 160, size=2))
        n = int(rng.integers(1, 60))
        dm = DotMap(w, h, rng.uniform([0, 0], [w, h], size=(n, 2)))
        d = density_map(dm)
        worst_mass = max(worst_mass, abs(d.total() - n))
        worst_rel = max(worst_rel, abs(patch_counts(d).sum() - d.total()) / d.total())
    report(10, worst_mass <= 1e-6 and worst_rel <= 1e-9,
           f"max |mass - dots| {worst_mass:.2e} (<= 1e-6); max patch-sum relative drift "
           f"{worst_rel:.2e} (<= 1e-9)")
