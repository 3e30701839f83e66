"""Independent reference computations shared by several test modules."""

import numpy as np


def welch_t(x, y):
    vx, vy = x.var(ddof=1) / len(x), y.var(ddof=1) / len(y)
    return (x.mean() - y.mean()) / np.sqrt(vx + vy)


def permutation_p(x, y, draws=1_000_000, seed=0, chunk=20_000):
    """One-sided p of mean(x) > mean(y) from random relabelings, using the
    Welch statistic of each relabeled split."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    z = np.concatenate([x, y])
    n1 = len(x)
    observed = welch_t(x, y)
    rng = np.random.default_rng(seed)
    hits = 0
    done = 0
    while done < draws:
        m = min(chunk, draws - done)
        P = rng.permuted(np.broadcast_to(z, (m, len(z))), axis=1)
        a, b = P[:, :n1], P[:, n1:]
        t = (a.mean(1) - b.mean(1)) / np.sqrt(a.var(1, ddof=1) / n1 + b.var(1, ddof=1) / len(y))
        hits += int((t >= observed).sum())
        done += m
    return hits / draws


def welch_fixtures():
    """Three seeded sample pairs with p-values spread over (0, 1)."""
    rng = np.random.default_rng(2024)
    return [
        (rng.normal(10.3, 2.0, 40), rng.normal(10.0, 2.0, 40)),
        (rng.normal(5.0, 1.0, 30), rng.normal(4.6, 1.5, 30)),
        (rng.normal(0.0, 1.0, 25), rng.normal(0.1, 1.0, 25)),
    ]
