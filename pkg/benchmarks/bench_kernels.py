"""Compiled vs numpy propagation kernels on the catalog system sizes.

Usage: python3 benchmarks/bench_kernels.py [--repeat 3]
"""
import argparse
import time

import numpy as np

from openkrotov import _pykernels
from openkrotov._backend import NAME, kernels
from openkrotov.dynamics import OpenSystem
from openkrotov.models import build_system, channel_catalog, state_set_catalog

CASES = [("qubit", "dephasing", "basis_plus_superposition"),
         ("qutrit", "amp_damping", "basis_plus_superposition"),
         ("four_level", "leak_i", "leakage_set"),
         ("two_qubit", "leak_i", "basis_plus_superposition")]


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--steps", type=int, default=2000)
    args = ap.parse_args()
    if NAME != "cython":
        print("compiled extension not available; only the numpy kernel will run")
    n_steps, dt = args.steps, 10.0 / args.steps
    eps = 0.5 * np.sin(np.linspace(0, 20, n_steps))
    step = np.full(n_steps, 0.1)
    print(f"{'system':<12}{'states':>7}{'kernel':>10}{'compiled ms':>13}{'numpy ms':>11}{'speedup':>9}")
    for system, channel, sset in CASES:
        spec = build_system(system)
        sys_ = OpenSystem(spec.h0, spec.h1, channel_catalog(channel, 0.05, system))
        rho = sys_.coords(np.stack([s.rho0 for s in state_set_catalog(sset, spec.dim).states])).real
        costates = _pykernels.propagate(rho, eps, sys_.l0_adj, sys_.l1_adj, dt, True)
        for label, call in (
            ("propagate", lambda k: k.propagate(rho, eps, sys_.l0, sys_.l1, dt, False)),
            ("sweep", lambda k: k.sweep(rho, costates, eps, step, sys_.l0, sys_.l1, dt)),
        ):
            t_c = best_of(lambda: call(kernels), args.repeat) if NAME == "cython" else float("nan")
            t_p = best_of(lambda: call(_pykernels), args.repeat)
            print(f"{system:<12}{len(rho):>7}{label:>10}{1e3 * t_c:>13.1f}{1e3 * t_p:>11.1f}"
                  f"{t_p / t_c:>9.1f}")


if __name__ == "__main__":
    main()
