"""Shared oracles for the test suite."""

import numpy as np

from countscale import dqn
from countscale.dqn import Batch, QNetParams


def random_problem(rng, in_dim=6, hidden=8, out_dim=9, n=16, terminal_frac=0.3):
    p = QNetParams.init(in_dim, hidden, out_dim, rng)
    p.b1[:] = rng.normal(0, 0.3, hidden)
    p.b2[:] = rng.normal(0, 0.3, out_dim)
    target = QNetParams.init(in_dim, hidden, out_dim, rng)
    b = Batch(rng.normal(size=(n, in_dim)), rng.integers(out_dim, size=n),
              rng.normal(size=(n, in_dim)), rng.choice([-5.0, -3, -1, 1, 3, 5], size=n),
              rng.random(n) < terminal_frac)
    return p, target, b


def _pattern(p, target, b, gamma):
    Z = b.X @ p.W1.T + p.b1
    Q = np.maximum(Z, 0) @ p.W2.T + p.b2
    resid = Q[np.arange(len(b.a)), b.a] - dqn.td_targets(target, b, gamma)
    return np.concatenate([(Z > 0).ravel(), np.sign(resid)])


def fd_check(p, target, b, gamma=0.9, h=1e-5):
    """Compare analytic and central-difference gradients of the TD loss.

    Returns (worst relative error, checked count, skipped count). A parameter
    is skipped when the +-h perturbation moves any relu unit or absolute
    residual across its kink, where the loss is not differentiable.
    """
    _, g = dqn.loss_and_grads_arrays(p, target, b, gamma)
    base = _pattern(p, target, b, gamma)
    worst, checked, skipped = 0.0, 0, 0
    for name in QNetParams.ARRAYS:
        arr = getattr(p, name)
        for idx in np.ndindex(arr.shape):
            old = arr[idx]
            arr[idx] = old + h
            lp, pp = dqn.loss_and_grads_arrays(p, target, b, gamma)[0], _pattern(p, target, b, gamma)
            arr[idx] = old - h
            lm, pm = dqn.loss_and_grads_arrays(p, target, b, gamma)[0], _pattern(p, target, b, gamma)
            arr[idx] = old
            if not (np.array_equal(pp, base) and np.array_equal(pm, base)):
                skipped += 1
                continue
            num = (lp - lm) / (2 * h)
            ana = getattr(g, name)[idx]
            scale = max(abs(num), abs(ana))
            if scale > 1e-7:
                worst = max(worst, abs(num - ana) / scale)
            checked += 1
    return worst, checked, skipped
