"""Time one DR round with the compiled kernel, the numpy kernel and the
per-player oracle path on seeded Cournot instances.

    python3 benchmarks/bench_kernels.py --sizes 5 20 50 --rounds 2000
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from gnedr import _kernels
from gnedr.cournot import constants, sample_instance
from gnedr.game import AugmentedState
from gnedr.graph import random_experiment_graph
from gnedr.splitting import Splitting, lemma1_step_sizes


def _time(fn, rounds):
    fn()  # warm-up (and JIT compile)
    t = time.perf_counter()
    for _ in range(rounds):
        fn()
    return (time.perf_counter() - t) / rounds


def bench(N, rounds, seed=0):
    m = max(2, N // 2)
    inst = sample_instance(seed, N, m, n_range=(2, min(6, m)))
    graph = random_experiment_graph(seed, N, N // 2)
    game = inst.to_game()
    steps = lemma1_step_sizes(game, graph, constants(inst, graph).rho_mu_bound, 1.0)
    kern = Splitting(game, graph, steps, backend="kernel")
    orc = Splitting(game, graph, steps, backend="oracle")
    rng = np.random.default_rng(seed)
    s = AugmentedState(*(rng.normal(size=a.shape) for a in kern.zeros().parts()))
    args = tuple(np.ascontiguousarray(a) for a in s.parts()) + kern._kernel_args() + (0.5,)

    out = {"N": N, "n": game.n}
    out["numpy"] = _time(lambda: _kernels.dr_round_affine_np(*args), rounds)
    if _kernels.HAVE_NUMBA:
        out["numba"] = _time(lambda: _kernels.dr_round_affine_jit(*args), rounds)
        ref = _kernels.dr_round_affine_np(*args)
        got = _kernels.dr_round_affine_jit(*args)
        out["max_diff"] = max(float(np.abs(a - b).max()) for a, b in zip(ref, got))
    out["oracle"] = _time(lambda: orc.dr_round(s), max(1, rounds // 10))
    return out


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sizes", type=int, nargs="+", default=[5, 20, 50])
    p.add_argument("--rounds", type=int, default=2000)
    args = p.parse_args(argv)
    print(f"numba available: {_kernels.HAVE_NUMBA}; default backend: {'numba' if _kernels.USE_JIT else 'numpy'}")
    print(f"{'N':>4} {'n':>5} {'numba us':>10} {'numpy us':>10} {'oracle us':>10} {'speedup':>8} {'max diff':>9}")
    for N in args.sizes:
        r = bench(N, args.rounds)
        nb = r.get("numba", float("nan"))
        print(f"{r['N']:>4} {r['n']:>5} {1e6 * nb:>10.1f} {1e6 * r['numpy']:>10.1f} "
              f"{1e6 * r['oracle']:>10.1f} {r['numpy'] / nb:>8.2f} {r.get('max_diff', float('nan')):>9.1e}")


if __name__ == "__main__":
    main()
