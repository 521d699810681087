"""Benchmark the compiled simulation kernel against the pure-Python twin.

Usage:
    python benchmarks/bench_backends.py [--quick]

Times the full fine-step loop (RK4 + collision sweep + sampling) on a
5-body scenario and reports steps/second for each backend plus the
speedup. Also cross-checks that both backends produce bit-identical
trajectories on the benchmark workload.
"""
import argparse
import time

import numpy as np

from rbdnet import dynamics, scenarios
from rbdnet._backend import get_kernels


def workload(seed=7):
    cfg = scenarios.ScenarioConfig(n_bodies_choices=(5,))
    state = scenarios.sample_scenario(seed, cfg)
    return state.pack_states(), state.pack_params(), state.env.pack()


def time_backend(kernels, states, params, env, n_fine, repeats):
    best = float("inf")
    result = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        result = kernels.simulate_path(states, params, env, 1e-4, n_fine, 200)
        best = min(best, time.perf_counter() - t0)
    return best, result


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--quick", action="store_true",
                    help="smaller workload (for CI smoke runs)")
    args = ap.parse_args()
    n_fine = 2_000 if args.quick else 10_000
    repeats = 2 if args.quick else 3

    states, params, env = workload()
    try:
        compiled = get_kernels("compiled")
    except ImportError:
        compiled = None

    python = get_kernels("python")
    t_py, out_py = time_backend(python, states, params, env, n_fine, repeats)
    print(f"python   backend: {n_fine} fine steps in {t_py:8.3f} s "
          f"({n_fine / t_py:>10.0f} steps/s)")

    if compiled is None:
        print("compiled backend: not built (pip install -e . with a C compiler)")
        return

    t_c, out_c = time_backend(compiled, states, params, env, n_fine, repeats)
    print(f"compiled backend: {n_fine} fine steps in {t_c:8.3f} s "
          f"({n_fine / t_c:>10.0f} steps/s)")
    print(f"speedup: {t_py / t_c:.1f}x")

    identical = (np.array_equal(out_py[0], out_c[0]) and out_py[1] == out_c[1]
                 and out_py[2] == out_c[2])
    print(f"bit-identical results: {identical}")
    if not identical:
        raise SystemExit("backends disagree; kernels are out of lockstep")

    # end-to-end flavor: one full 5 s scenario through the public API
    state = scenarios.sample_scenario(3, scenarios.ScenarioConfig())
    t0 = time.perf_counter()
    dynamics.simulate(state, 5.0)
    print(f"full 5 s scenario via dynamics.simulate ({dynamics.DEFAULT_FINE_DT} s "
          f"substeps): {time.perf_counter() - t0:.3f} s on the default backend")


if __name__ == "__main__":
    main()
