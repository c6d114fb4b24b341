import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from countscale.dqn import QNetParams
from countscale.metrics import LengthMismatch, ShapeMismatch, game, infer, mae_mse
from countscale.oracle import GreedyQFunction
from countscale.quantizer import inverse_quantize


def test_mae_mse_examples():
    assert mae_mse([1, 2], [1, 2]) == (0, 0)
    assert mae_mse([3], [1]) == (2, 2)
    mae, mse = mae_mse([0, 4], [2, 0])
    assert mae == 3 and mse == pytest.approx(np.sqrt(10))
    with pytest.raises(LengthMismatch):
        mae_mse([1], [1, 2])
    with pytest.raises(ValueError):
        mae_mse([], [])


def test_game_examples():
    assert game([[1, 0], [0, 0]], [[0, 1], [0, 0]], 1) == 2
    assert game([[1, 0], [0, 0]], [[0, 1], [0, 0]], 0) == 0
    assert game(np.ones((5, 3)), np.ones((5, 3)), 2) == 0
    with pytest.raises(ShapeMismatch):
        game(np.ones((2, 2)), np.ones((2, 3)), 0)


grids = st.integers(1, 9).flatmap(lambda h: st.integers(1, 9).flatmap(lambda w: st.tuples(
    arrays(float, (h, w), elements=st.floats(0, 50)), arrays(float, (h, w), elements=st.floats(0, 50)))))


@given(grids)
def test_game_level_zero_and_monotone(pg):
    pred, gt = pg
    assert game(pred, gt, 0) == pytest.approx(abs(pred.sum() - gt.sum()), abs=1e-9)
    levels = [game(pred, gt, L) for L in range(4)]
    assert all(a <= b + 1e-9 for a, b in zip(levels, levels[1:]))


def test_infer_oracle_g45():
    res = infer(GreedyQFunction(), np.array([[45.0]]), targets=[45])
    assert res.intervals.tolist() == [45]
    assert res.counts[0] == inverse_quantize(45)
    labels = [s[1] for s in res.traces[0].steps]
    assert labels == ["+10"] * 4 + ["+5", "End"]


def test_infer_zero_targets_zero_count():
    res = infer(GreedyQFunction(), np.zeros((5, 1)))
    assert res.image_count == 0


def test_infer_clamps_and_bounds():
    rng = np.random.default_rng(0)
    p = QNetParams.init(3 + 8, 8, 9, rng)
    p.b2[:] = 0
    p.b2[0] = 100.0  # always -10
    res = infer(p, rng.normal(size=(4, 3)))
    assert res.raw_intervals.tolist() == [-80] * 4
    assert (res.intervals == 0).all() and (res.counts >= 0).all()
    p.b2[0], p.b2[7] = 0, 100.0  # always +10
    res = infer(p, rng.normal(size=(4, 3)))
    assert res.raw_intervals.tolist() == [80] * 4
    assert (res.intervals == 79).all()


def test_infer_continuous_mode_counts_are_values():
    from countscale.core import CONTINUOUS_POOL, EpisodeConfig
    ep = EpisodeConfig(pool=CONTINUOUS_POOL)
    res = infer(GreedyQFunction(CONTINUOUS_POOL, 0.005), np.array([[1.27]]), ep)
    assert res.counts[0] == pytest.approx(1.27, abs=0.005)
