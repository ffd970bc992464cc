import numpy as np
import pytest

from stagedomics.uncertainty import EnsembleSummary


def fd_grad(f, x, h=1e-5):
    """Central finite differences of scalar ``f`` w.r.t. every entry of ``x`` (mutated in place, restored)."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        up = f()
        x[i] = old - h
        down = f()
        x[i] = old
        g[i] = (up - down) / (2 * h)
    return g


def rel_err(analytic, numeric):
    analytic = np.asarray(analytic)
    numeric = np.asarray(numeric)
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-12)
    return float(np.linalg.norm(analytic - numeric) / scale)


def make_summary(sigma, voted, mean=None, ids=None):
    """Single-trial-shaped EnsembleSummary with hand-set sigma and voted labels."""
    sigma = np.asarray(sigma, dtype=np.float64)
    voted = np.asarray(voted, dtype=np.int64)
    mean = voted.astype(float) if mean is None else np.asarray(mean, dtype=np.float64)
    ids = np.arange(sigma.size) if ids is None else np.asarray(ids)
    return EnsembleSummary(ids, mean[None, :], mean, sigma, voted, np.stack([1 - voted, voted], axis=1))


def brute_force_thresholds(sig, ok, steps, sentinel_offset=1.0):
    """Independent plain-Python Algorithm-1 enumeration with the documented tie rule."""
    def grid(s):
        lo, hi = min(s), max(s)
        if lo == hi:
            return [lo - sentinel_offset, lo]
        # evenly spaced as lo + i*step, with max(sigma) itself as the last point
        step = (hi - lo) / (steps - 1)
        return [lo - sentinel_offset] + [i * step + lo for i in range(steps - 1)] + [hi]

    best = None
    for t1 in grid(sig[0]):
        for t2 in grid(sig[1]):
            correct = 0
            for i in range(len(sig[0])):
                if sig[0][i] <= t1:
                    correct += ok[0][i]
                elif sig[1][i] <= t2:
                    correct += ok[1][i]
                else:
                    correct += ok[2][i]
            key = (correct, t1, t2)
            if best is None or key > best:
                best = key
    return best


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
