"""Wall-clock comparison of the compiled and pure-Python episode kernels.

Usage: ``python benchmarks/bench_engine.py [--repeat 3]``
"""

import argparse
import time

import numpy as np

from gpfewshot import engine
from gpfewshot.gp_model import ProblemInstance, sample_function
from gpfewshot.policies import start_threshold
from gpfewshot.sim_harness import grid_instance, iid_instance, random_psd_instance
from gpfewshot.continuous import KernelSpec

CASES = {
    "iid N=2000 T=500": lambda: iid_instance(2000, 500),
    "sqexp grid N=1000 T=500 l=0.05": lambda: grid_instance(KernelSpec("sqexp", 0.05), 1000, 500),
    "random PSD N=600 T=500": lambda: random_psd_instance(600, 500, seed=7),
}


def time_case(inst, policy, backend, repeat):
    f = sample_function(inst, 0).values
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        engine.run_policy(inst.covariance, inst.mean, f, inst.horizon, policy, inst.var_floor,
                          inst.obs_tol, start_threshold(inst.mean), backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--policy", default="ei2")
    args = parser.parse_args()
    backends = engine.available_backends()
    print(f"{'case':34s}" + "".join(f"{b:>12s}" for b in backends) + "     speedup")
    for name, build in CASES.items():
        inst = build()
        times = {b: time_case(inst, args.policy, b, args.repeat) for b in backends}
        row = f"{name:34s}" + "".join(f"{times[b] * 1e3:10.1f}ms" for b in backends)
        if "compiled" in times:
            row += f"  {times['python'] / times['compiled']:9.1f}x"
        print(row)


if __name__ == "__main__":
    main()
