"""Time the compiled transform kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--size N] [--repeat R]

Each kernel runs on the same random saturations for the van Genuchten
clay loam (n = 1.31); the table reports the best of ``R`` wall times and
the speed-up of the compiled backend. Both backends must agree to 1e-12.
"""
import argparse
import timeit

import numpy as np

from urichards import constitutive as cm
from urichards import kernels
from urichards import transform as tr


def cases(model, size, seed=0):
    rng = np.random.default_rng(seed)
    S = rng.uniform(1e-6, 1.0 - 1e-6, size)
    tab = tr.table_for(model)
    b, c = tab.b, tab.c
    u = kernels.get_backend("python").u_from_s(S, b, c)
    p, q = 1.0 / c, 1.0 - b
    w = S**c
    return {
        "incomplete_beta": lambda k: k.incomplete_beta(w, p, q),
        "u_from_s": lambda k: k.u_from_s(S, b, c),
        "dsdu_from_s": lambda k: k.dsdu_from_s(S, b, c),
        "s_from_u": lambda k: k.s_from_u(u, b, c, tab.grid_S, tab.grid_u, tab.inversion_tol)[0],
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=100_000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    model = cm.HydraulicModel(theta_s=0.41, theta_r=0.095, n=1.31, K_s=0.0624, alpha=1.9)
    try:
        compiled = kernels.get_backend("compiled")
    except ImportError:
        print("compiled extension not built; run `pip install -e . --no-build-isolation`")
        return 1
    python = kernels.get_backend("python")
    print(f"{'kernel':<16} {'python (s)':>11} {'compiled (s)':>13} {'speed-up':>9}   n = {args.size}")
    for name, fn in cases(model, args.size).items():
        a, b = fn(python), fn(compiled)
        if not np.allclose(a, b, rtol=1e-12, atol=1e-14):
            raise SystemExit(f"{name}: backends disagree by {np.max(np.abs(a - b)):.3e}")
        tp = min(timeit.repeat(lambda: fn(python), number=1, repeat=args.repeat))
        tc = min(timeit.repeat(lambda: fn(compiled), number=1, repeat=args.repeat))
        print(f"{name:<16} {tp:11.4f} {tc:13.4f} {tp / tc:9.1f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
