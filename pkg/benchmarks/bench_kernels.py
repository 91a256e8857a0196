"""Compare the compiled kernels with the numpy fallback.

    python benchmarks/bench_kernels.py [--steps 4000] [--repeat 3]
"""

import argparse
import time

import numpy as np

from regenlab import backend
from regenlab.environment import EnvironmentSpec, make_environment
from regenlab.rng import derive_seed

SPEC = EnvironmentSpec(dimension=2, coefficient_bound=20.0, drift_mean=(1.0, 0.0),
                       drift_amplitude=0.4, diffusion_amplitude=0.2, master_seed=7)


def _best(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench(name, steps, repeat):
    env = make_environment(SPEC, backend_name=name)
    k = env.kernel
    X = np.random.default_rng(0).uniform(-50, 50, size=(steps, 2))
    key = derive_seed(1, 3)
    l = np.array([1.0, 0.0])
    return {
        "eval_many": _best(lambda: k.eval_many(X), repeat) / steps,
        "simulate": _best(lambda: k.simulate(np.zeros(2), steps, 1 / 16, key), repeat) / steps,
        "bridge": _best(lambda: [k.bridge(np.zeros(2), m, 16, 1 / 16, key, 1.0, l, 100000)
                                 for m in range(steps // 16)], repeat) / (steps // 16),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--steps", type=int, default=4000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    names = ["python"] + (["compiled"] if backend.has_compiled() else [])
    res = {n: bench(n, args.steps, args.repeat) for n in names}
    print(f"{'kernel':<10}" + "".join(f"{n + ' us/op':>18}" for n in names) + (f"{'speedup':>10}" if len(names) == 2 else ""))
    for op in res["python"]:
        row = f"{op:<10}" + "".join(f"{res[n][op] * 1e6:>18.2f}" for n in names)
        if len(names) == 2:
            row += f"{res['python'][op] / res['compiled'][op]:>9.0f}x"
        print(row)


if __name__ == "__main__":
    main()
