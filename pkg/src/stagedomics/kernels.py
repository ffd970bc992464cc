"""Hot numeric loops, each with a numba kernel and a pure-numpy twin.

The numba path is used when numba imports and ``STAGEDOMICS_DISABLE_NUMBA``
is unset (or ``0``). Both paths are always importable as ``NUMPY_KERNELS`` and
``NUMBA_KERNELS`` so tests and ``benchmarks/bench_kernels.py`` can compare them.

Integer-valued kernels (grid counts, pair counts) agree exactly between
backends; the similarity kernel agrees to rounding (~1e-15).
"""

import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

_DISABLED = os.environ.get("STAGEDOMICS_DISABLE_NUMBA", "0").strip().lower() not in ("", "0", "false", "no")
USE_NUMBA = HAVE_NUMBA and not _DISABLED


# ---------------------------------------------------------------- numpy path


def _np_row_norms(x):
    return np.sqrt(np.einsum("ij,ij->i", x, x))


def _np_cosine_block(xa, xb):
    """Cosine similarity between every row of ``xa`` and every row of ``xb``."""
    na = _np_row_norms(xa)
    nb = _np_row_norms(xb)
    s = (xa / na[:, None]) @ (xb / nb[:, None]).T
    return np.clip(s, -1.0, 1.0)


def _np_grid_correct_counts(sig1, sig2, ok1, ok2, ok3, grid1, grid2):
    ok1 = ok1.astype(bool)
    ok2 = ok2.astype(bool)
    ok3 = ok3.astype(bool)
    out = np.empty((grid1.size, grid2.size), dtype=np.int64)
    # (G2, n): which samples clear t2 at stage 2
    clears2 = sig2[None, :] <= grid2[:, None]
    for a, t1 in enumerate(grid1):
        exit1 = sig1 <= t1
        onward = ~exit1
        base = np.count_nonzero(exit1 & ok1)
        exit2 = clears2 & onward
        exit3 = ~clears2 & onward
        out[a] = base + (exit2 & ok2).sum(axis=1) + (exit3 & ok3).sum(axis=1)
    return out


def _np_pair_credit(pos, neg):
    """Twice the Mann-Whitney U: 2 per (pos > neg) pair, 1 per tie."""
    neg_sorted = np.sort(neg)
    lo = np.searchsorted(neg_sorted, pos, side="left")
    hi = np.searchsorted(neg_sorted, pos, side="right")
    return int(np.sum(2 * lo + (hi - lo)))


# ---------------------------------------------------------------- numba path

if HAVE_NUMBA:

    @njit(cache=True)
    def _nb_unit_rows(x):
        out = np.empty_like(x)
        for i in range(x.shape[0]):
            acc = 0.0
            for k in range(x.shape[1]):
                acc += x[i, k] * x[i, k]
            nrm = np.sqrt(acc)
            for k in range(x.shape[1]):
                out[i, k] = x[i, k] / nrm
        return out

    @njit(cache=True)
    def _nb_grid_correct_counts(sig1, sig2, ok1, ok2, ok3, grid1, grid2):
        n = sig1.shape[0]
        out = np.zeros((grid1.shape[0], grid2.shape[0]), dtype=np.int64)
        for a in range(grid1.shape[0]):
            t1 = grid1[a]
            for b in range(grid2.shape[0]):
                t2 = grid2[b]
                hits = 0
                for i in range(n):
                    if sig1[i] <= t1:
                        hits += ok1[i]
                    elif sig2[i] <= t2:
                        hits += ok2[i]
                    else:
                        hits += ok3[i]
                out[a, b] = hits
        return out

    @njit(cache=True)
    def _nb_pair_credit(pos, neg):
        total = 0
        for i in range(pos.shape[0]):
            for j in range(neg.shape[0]):
                if pos[i] > neg[j]:
                    total += 2
                elif pos[i] == neg[j]:
                    total += 1
        return total


def _cosine_block_nb(xa, xb):
    # a jitted triple loop is ~10x slower than BLAS here, so only the row
    # normalisation is compiled and the Gram product stays in numpy
    ua = _nb_unit_rows(np.ascontiguousarray(xa, dtype=np.float64))
    ub = _nb_unit_rows(np.ascontiguousarray(xb, dtype=np.float64))
    return np.clip(ua @ ub.T, -1.0, 1.0)


def _grid_nb(sig1, sig2, ok1, ok2, ok3, grid1, grid2):
    f = lambda a: np.ascontiguousarray(a, dtype=np.float64)  # noqa: E731
    i = lambda a: np.ascontiguousarray(a, dtype=np.int64)  # noqa: E731
    return _nb_grid_correct_counts(f(sig1), f(sig2), i(ok1), i(ok2), i(ok3), f(grid1), f(grid2))


def _pair_credit_nb(pos, neg):
    return int(_nb_pair_credit(np.ascontiguousarray(pos, dtype=np.float64), np.ascontiguousarray(neg, dtype=np.float64)))


NUMPY_KERNELS = {
    "cosine_block": _np_cosine_block,
    "grid_correct_counts": _np_grid_correct_counts,
    "pair_credit": _np_pair_credit,
}

NUMBA_KERNELS = (
    {
        "cosine_block": _cosine_block_nb,
        "grid_correct_counts": _grid_nb,
        "pair_credit": _pair_credit_nb,
    }
    if HAVE_NUMBA
    else dict(NUMPY_KERNELS)
)

_ACTIVE = NUMBA_KERNELS if USE_NUMBA else NUMPY_KERNELS

cosine_block = _ACTIVE["cosine_block"]
grid_correct_counts = _ACTIVE["grid_correct_counts"]
pair_credit = _ACTIVE["pair_credit"]


def backend():
    return "numba" if USE_NUMBA else "numpy"
