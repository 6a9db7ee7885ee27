#!/usr/bin/env python3
"""Time the three objective evaluators over a range of model orders.

Preprocessing is done once per order and excluded from the timings, so the
numbers reflect the per-evaluation cost that hyperparameter search pays.
"""

import argparse
import time

import numpy as np

from dcsysid import (
    DcHyperparams,
    algorithm_a_flops,
    algorithm_c_flops,
    nll_algorithm_a,
    nll_algorithm_b,
    nll_algorithm_c,
    preprocess_matrices,
)


def time_evaluator(fn, hyper, sigma2, pre, evals):
    for _ in range(min(50, evals)):
        fn(hyper, sigma2, pre)
    start = time.perf_counter()
    for _ in range(evals):
        fn(hyper, sigma2, pre)
    return (time.perf_counter() - start) / evals


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--orders", type=int, nargs="+", default=[25, 50, 125, 250, 500])
    parser.add_argument("--samples", type=int, default=500,
                        help="data length (raised to 2n when an order needs more)")
    parser.add_argument("--evals", type=int, default=1000)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--lam", type=float, default=0.9)
    parser.add_argument("--rho", type=float, default=0.8)
    parser.add_argument("--sigma2", type=float, default=0.2)
    args = parser.parse_args(argv)

    hyper = DcHyperparams(c=1.0, lam=args.lam, rho=args.rho)
    rng = np.random.default_rng(args.seed)
    print(f"{'n':>5} {'a us':>9} {'b us':>9} {'c us':>9} {'c vs a':>8} {'flop model':>11}")
    for n in args.orders:
        n_samples = max(args.samples, 2 * n)
        pre = preprocess_matrices(rng.standard_normal((n_samples, n)),
                                  rng.standard_normal(n_samples))
        per = {
            name: time_evaluator(fn, hyper, args.sigma2, pre, args.evals)
            for name, fn in (("a", nll_algorithm_a),
                             ("b", nll_algorithm_b),
                             ("c", nll_algorithm_c))
        }
        measured = 1.0 - per["c"] / per["a"]
        predicted = 1.0 - algorithm_c_flops(n)["total"] / algorithm_a_flops(n)["total"]
        print(f"{n:>5} {per['a'] * 1e6:>9.1f} {per['b'] * 1e6:>9.1f} "
              f"{per['c'] * 1e6:>9.1f} {measured:>7.1%} {predicted:>10.1%}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
