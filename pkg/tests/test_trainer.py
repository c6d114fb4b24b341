import numpy as np
import pytest

from countscale.core import DEFAULT_POOL, EpisodeConfig
from countscale.dqn import QNetParams
from countscale.oracle import GreedyQFunction
from countscale.rewards import RewardConfig, RewardMode, StepContext, step_reward
from countscale.trainer import (ImitationTrainer, IntervalOutOfRange, SynthConfig, TrainConfig,
                                Trainer, base_embedding, generate_episode, make_dataset, rollout,
                                synth_features, train)

EP = EpisodeConfig()
RC = RewardConfig()


def test_synth_features_deterministic_and_injective():
    cfg = SynthConfig(feature_dim=16)
    rng = np.random.default_rng(0)
    assert np.array_equal(synth_features(3, cfg, rng), synth_features(3, cfg, rng))
    emb = base_embedding(cfg)
    assert len({tuple(c) for c in emb.T}) == cfg.max_interval + 1
    with pytest.raises(IntervalOutOfRange):
        synth_features(80, cfg, rng)


def test_synth_noise_mean():
    cfg = SynthConfig(feature_dim=16, noise_sigma=0.1)
    rng = np.random.default_rng(1)
    mean = np.mean([synth_features(7, cfg, rng) for _ in range(10_000)], axis=0)
    assert np.all(np.abs(mean - base_embedding(cfg)[:, 7]) <= 3 * 0.1 / 100)


def test_dataset_split_and_targets():
    data = make_dataset(SynthConfig(num_patches=500))
    assert len(data.test_idx) == 50 and len(data.train_idx) == 450
    assert not set(data.test_idx) & set(data.train_idx)
    assert data.targets.min() >= 0 and data.targets.max() <= 79
    assert 0.1 < np.mean(data.targets == 0) < 0.35


def test_synth_config_validation():
    with pytest.raises(ValueError):
        SynthConfig(max_interval=80)


def greedy_episode(G, **kw):
    return generate_episode(np.array([float(G)]), G, GreedyQFunction(), **kw)


def test_oracle_episode_g45():
    trs = greedy_episode(45)
    assert [DEFAULT_POOL[t.a].label for t in trs] == ["+10"] * 4 + ["+5", "End"]
    assert [t.r for t in trs] == [3, 3, 3, 3, 3, 5]
    assert sum(t.r for t in trs) == 20
    assert trs[-1].terminal and not any(t.terminal for t in trs[:-1])


def test_zero_target_ends_immediately():
    trs = greedy_episode(0)
    assert len(trs) == 1 and trs[0].r == 5 and trs[0].terminal


def test_forced_end_without_end_action():
    trs = greedy_episode(79)
    assert len(trs) == 8 and trs[-1].terminal
    assert DEFAULT_POOL[trs[-1].a].label != "End"


def _check_episodes(eps, mode):
    for ep in eps:
        assert len(ep.transitions) <= EP.t_m
        V = 0.0
        for k, tr in enumerate(ep.transitions):
            a = DEFAULT_POOL[tr.a]
            v_now = V if a.is_end else V + a.value
            forced = k == EP.t_m - 1 and not a.is_end
            ctx = StepContext(ep.G, V, v_now, a, k, forced)
            assert tr.r == step_reward(ctx, RC, DEFAULT_POOL, mode)
            assert sum(tr.s_next.weights.slots) == v_now
            V = v_now
        assert ep.final_value == V


@pytest.mark.parametrize("mode", list(RewardMode))
def test_random_rollouts_consistent(mode):
    rng = np.random.default_rng(2)
    p = QNetParams.init(4 + 8, 16, 9, rng)
    G = rng.integers(0, 80, size=200)
    eps = rollout(p, rng.normal(size=(200, 4)), G, EP, RC, mode, 0.5, rng)
    _check_episodes(eps, mode)


def test_modes_differ_only_in_rewards():
    p = QNetParams.init(4 + 8, 16, 9, np.random.default_rng(3))
    feats = np.random.default_rng(4).normal(size=(100, 4))
    G = np.random.default_rng(5).integers(0, 80, size=100)
    runs = {m: rollout(p, feats, G, EP, RC, m, 0.3, np.random.default_rng(6)) for m in RewardMode}
    base = runs[RewardMode.FULL]
    differs = False
    for m, eps in runs.items():
        for e0, e1 in zip(base, eps):
            assert [(t.a, t.terminal) for t in e0.transitions] == [(t.a, t.terminal) for t in e1.transitions]
            differs |= [t.r for t in e0.transitions] != [t.r for t in e1.transitions]
    assert differs


def test_sink_sees_every_transition():
    seen = []
    eps = rollout(GreedyQFunction(), np.array([[45.0], [9.0]]), [45, 9], EP, RC, sink=seen.append)
    assert len(seen) == sum(len(e.transitions) for e in eps) == 6 + 3


def small_cfg(**kw):
    base = dict(epochs=2, hidden=16, update_every=20, rollout_chunk=50)
    base.update(kw)
    return TrainConfig(**base)


def test_zero_epochs_returns_initial_params():
    data = make_dataset(SynthConfig(num_patches=50))
    cfg = small_cfg(epochs=0)
    init = Trainer(data, cfg).params
    res = train(data, cfg)
    assert res.params.equals(init) and res.history == []


def test_seeded_training_is_reproducible():
    data = make_dataset(SynthConfig(num_patches=100))
    a = train(data, small_cfg())
    b = train(data, small_cfg())
    assert a.history == b.history
    assert a.params.equals(b.params)
    c = train(data, small_cfg(seed=1))
    assert not c.params.equals(a.params)


def test_epoch_bookkeeping():
    data = make_dataset(SynthConfig(num_patches=100))
    tr = Trainer(data, small_cfg())
    m = tr.run_epoch()
    assert m["epoch"] == 0 and m["epsilon"] == 1.0
    assert m["updates"] == len(tr.buffer) // 20
    assert tr.run_epoch()["epsilon"] == pytest.approx(0.95)


@pytest.mark.parametrize("encoding", ["scaled", "onehot"])
def test_input_width(encoding):
    data = make_dataset(SynthConfig(num_patches=20, feature_dim=5))
    p = Trainer(data, small_cfg(slot_encoding=encoding)).params
    assert p.in_dim == (5 + 8 if encoding == "scaled" else 5 + 8 * 8)
    assert p.out_dim == 9


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(mode="bogus")
    with pytest.raises(ValueError):
        TrainConfig(slot_encoding="binary")


def test_imitation_single_zero_patch_learns_end():
    data = make_dataset(SynthConfig(num_patches=1, holdout=0.0, zero_fraction=1.0))
    assert data.targets.tolist() == [0]
    tr = ImitationTrainer(data, small_cfg(epochs=30, update_every=1, lr=0.1, batch_size=8))
    tr.fit()
    q = rollout(tr.params, data.features, data.targets, EP, RC)[0]
    assert DEFAULT_POOL[q.steps[0].action].is_end
