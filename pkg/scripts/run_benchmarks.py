"""Run the two reference benchmarks and print their moment and diagnostic summaries.

    python3 scripts/run_benchmarks.py [--cells 180] [--t-end 1.0]
"""

import argparse
import time

import numpy as np

from coagfrag.analysis import check_moment_bounds, envelope_check, envelope_constants
from coagfrag.grid import Exponential
from coagfrag.kernels import KernelSystem, breakage, coagulation, selection
from coagfrag.solver import IntegratorConfig, Simulation, integrate


def benchmarks(cells, t_end):
    cfg = IntegratorConfig(t_end=t_end)
    return {
        "smoluchowski+breakage": Simulation(
            KernelSystem(coagulation("smoluchowski", a=3), selection("power", c=1.0, exponent=1.0),
                         breakage("binary-uniform")), 1e-6, 1e3, cells, Exponential(), cfg),
        "constant-kernel": Simulation(
            KernelSystem(coagulation("constant"), selection("zero"), breakage("binary-uniform")),
            1e-6, 1e3, cells, Exponential(), cfg),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--cells", type=int, default=180)
    ap.add_argument("--t-end", type=float, default=1.0)
    args = ap.parse_args()
    for name, sim in benchmarks(args.cells, args.t_end).items():
        t0 = time.perf_counter()
        run = integrate(sim)
        dt = time.perf_counter() - t0
        N0, N1 = run.moment(0.0), run.moment(1.0)
        bounds = check_moment_bounds(run, run.system)
        env = envelope_check(run, envelope_constants(run, run.system, (0.1, 10.0)), (0.1, 10.0))
        print(f"== {name}  ({dt:.2f}s, {run.stats['accepted_steps']} steps, "
              f"{run.stats['rejected_steps']} rejected)")
        print(f"{'t':>6} {'N0':>12} {'N1':>12} {'leak':>10}")
        for t, a, b, c in zip(run.times, N0, N1, run.leak):
            print(f"{t:6.2f} {a:12.8f} {b:12.8f} {c:10.2e}")
        drift = np.max(np.abs(N1 - N1[0])) / N1[0]
        print(f"mass drift {drift:.2e}  bounds {'ok' if bounds.passed else 'VIOLATED'}  "
              f"envelope worst ratio {env.worst_ratio:.3f}  flags {run.flags}")
        if name == "constant-kernel":
            err = np.max(np.abs(N0 / (2 / (2 + run.times)) - 1))
            print(f"N0 vs 2/(2+t): max relative error {err:.2e}")


if __name__ == "__main__":
    main()
