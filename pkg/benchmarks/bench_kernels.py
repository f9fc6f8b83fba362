"""Time the compiled scalarized-ridge kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--clients 6] [--resolution 10] [--repeat 20]
"""
import argparse
import timeit

import numpy as np

from coalition_forge import _kernels_py
from coalition_forge.pareto import _penalty, _stack_moments, simplex_grid
from coalition_forge.tasks import SyntheticConfig, generate_synthetic_network

try:
    from coalition_forge import _kernels as _compiled
except ImportError:
    _compiled = None


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--clients", type=int, default=6)
    ap.add_argument("--features", type=int, default=10)
    ap.add_argument("--resolution", type=int, default=10)
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()

    clients = list(generate_synthetic_network(
        SyntheticConfig(n_clients=args.clients, n_features=args.features, sigma=1.0)
    ))
    grams, rhs = _stack_moments(clients)
    vg, vr, vc = clients[0].validation.moments
    W = simplex_grid(args.clients, args.resolution)
    pen = _penalty(args.features, 1e-6, True)
    print(f"{len(W)} weight vectors, {args.clients} clients, {args.features} features")

    backends = {"numpy": _kernels_py}
    if _compiled is not None:
        backends["cython"] = _compiled
    else:
        print("compiled extension not built; timing the fallback only")
    timings = {}
    for name, mod in backends.items():
        fn = lambda: mod.quadratic_loss_batch(grams, rhs, W, pen, vg, vr, vc)
        fn()
        best = min(timeit.repeat(fn, number=1, repeat=args.repeat))
        timings[name] = best
        print(f"{name:>7}: {best * 1e3:8.2f} ms  ({best / len(W) * 1e6:.2f} us per point)")
    if len(timings) == 2:
        a = _kernels_py.quadratic_loss_batch(grams, rhs, W, pen, vg, vr, vc)
        b = _compiled.quadratic_loss_batch(grams, rhs, W, pen, vg, vr, vc)
        print(f"speedup {timings['numpy'] / timings['cython']:.1f}x, max |diff| {np.max(np.abs(a - b)):.2e}")


if __name__ == "__main__":
    main()
