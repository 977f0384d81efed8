"""Time the compiled kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from latent_steer import kernels


def workloads(rng):
    fps = rng.integers(0, 2**63, size=(2100, 1), dtype=np.uint64)
    ref = fps[0].copy()
    other = rng.integers(0, 2**63, size=(2100, 1), dtype=np.uint64)
    cts = np.round(rng.integers(0, 6, size=(800, 21)) / 5.0, 6)
    xb = rng.integers(0, 20, 20000).astype(np.int64)
    yb = rng.integers(0, 2, 20000).astype(np.int64)
    m = rng.standard_normal((16, 16))
    cov = m @ m.T
    return {
        "tanimoto_rows": lambda k: k.tanimoto_rows(fps, ref),
        "tanimoto_pairs": lambda k: k.tanimoto_pairs(fps, other),
        "smr_rows": lambda k: k.smr_rows(cts, 3, 0.2),
        "joint_histogram": lambda k: k.joint_histogram(xb, yb, 20, 2),
        "jacobi_eigh": lambda k: k.jacobi_eigh(cov),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    py = kernels.get_backend("python")
    try:
        ck = kernels.get_backend("compiled")
    except ImportError:
        ck = None
        print("compiled extension not built; timing the Python backend only")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<16} {'python ms':>10} {'compiled ms':>12} {'speedup':>8}")
    for name, fn in workloads(rng).items():
        t_py = min(timeit.repeat(lambda: fn(py), number=1, repeat=args.repeat)) * 1e3
        if ck is None:
            print(f"{name:<16} {t_py:>10.2f}")
            continue
        t_c = min(timeit.repeat(lambda: fn(ck), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<16} {t_py:>10.2f} {t_c:>12.3f} {t_py / t_c:>7.0f}x")


if __name__ == "__main__":
    main()
