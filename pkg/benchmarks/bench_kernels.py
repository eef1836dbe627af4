"""Time the compiled and pure-Python Glauber kernels on the same workload.

    python3 benchmarks/bench_kernels.py --n-spins 20 --attempts 200000

Both backends run from the same seed; the script also checks that they end
in the same state and produce identical moment sums.
"""
import argparse
import time

import numpy as np

from kising import _backend
from kising.glauber import SimulationSchedule, run
from kising.moments import MomentAccumulator
from kising.sk_model import ModelParams, sample_couplings


def time_backend(name, params, J, attempts, fused, repeats):
    best = float("inf")
    for _ in range(repeats):
        acc = MomentAccumulator(params.n_spins, params.beta) if fused else None
        sched = SimulationSchedule(attempts, 0, rng_seed=1)
        t0 = time.perf_counter()
        s = run(params, J, sched, acc, backend=name)
        best = min(best, time.perf_counter() - t0)
    return best, s, acc


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-spins", type=int, default=20)
    ap.add_argument("--temperature", type=float, default=3.7)
    ap.add_argument("--attempts", type=int, default=200_000)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()

    params = ModelParams(n_spins=args.n_spins, temperature=args.temperature)
    J = sample_couplings(params)
    names = [b for b in ("python", "compiled") if b in _backend.BACKENDS]
    print(f"N={args.n_spins} T={args.temperature} attempts={args.attempts}")
    for fused in (False, True):
        label = "measure" if fused else "burn"
        results = {}
        for name in names:
            dt, s, acc = time_backend(name, params, J, args.attempts, fused, args.repeats)
            results[name] = (dt, s, acc)
            print(f"{label:8s} {name:9s} {dt:8.3f} s  {1e6 * dt / args.attempts:8.3f} us/attempt")
        if len(names) == 2:
            (tp, sp, ap_), (tc, sc, ac) = results["python"], results["compiled"]
            same = np.array_equal(sp, sc)
            if fused:
                same &= all(np.array_equal(getattr(ap_.raw(), f), getattr(ac.raw(), f))
                            for f in ("m_sum", "ss_sum", "lag_sum", "tanh_sum"))
            print(f"{label:8s} speedup {tp / tc:6.1f}x  identical={same}")
    if "compiled" not in names:
        print("compiled backend not built; only the fallback was timed")


if __name__ == "__main__":
    main()
