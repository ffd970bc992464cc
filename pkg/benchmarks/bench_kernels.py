"""Time each hot kernel on the numba and numpy backends.

    python3 benchmarks/bench_kernels.py [--repeat 20]

Sizes follow the reference workload: 351 samples x 200 features per view,
a 101 x 101 threshold grid, and AUC over ~100 test samples. Numba kernels are
called once before timing so JIT compilation is excluded.
"""

import argparse
import timeit

import numpy as np

from stagedomics import kernels


def cases(rng):
    x = rng.standard_normal((351, 200))
    yield "cosine_block 351x200", (x, x)
    for n in (70, 351):
        sig1, sig2 = rng.random(n), rng.random(n)
        ok = [rng.integers(0, 2, n) for _ in range(3)]
        grid = np.concatenate([[-1.0], np.linspace(0, 1, 100)])
        yield f"grid_correct_counts n={n} 101x101", (sig1, sig2, *ok, grid, grid)
    for n in (106, 2000):
        yield f"pair_credit {n // 2}x{n // 2}", (rng.random(n // 2), rng.random(n // 2))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    if not kernels.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<36}{'numpy ms':>10}{'numba ms':>10}{'speedup':>9}")
    for label, inputs in cases(rng):
        name = label.split()[0]
        np_fn, nb_fn = kernels.NUMPY_KERNELS[name], kernels.NUMBA_KERNELS[name]
        a, b = np_fn(*inputs), nb_fn(*inputs)  # warm-up / JIT
        assert np.allclose(a, b, rtol=0, atol=1e-12), label
        t_np = min(timeit.repeat(lambda: np_fn(*inputs), number=1, repeat=args.repeat)) * 1e3
        t_nb = min(timeit.repeat(lambda: nb_fn(*inputs), number=1, repeat=args.repeat)) * 1e3
        print(f"{label:<36}{t_np:>10.3f}{t_nb:>10.3f}{t_np / t_nb:>8.1f}x")


if __name__ == "__main__":
    main()
