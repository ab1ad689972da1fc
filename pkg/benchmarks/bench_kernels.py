#!/usr/bin/env python3
"""Compare the numba kernels against the pure-numpy fallback.

Usage:
    python benchmarks/bench_kernels.py [--repeat N] [--json OUT]

Each workload is run once per backend to warm up (numba compiles on first
call), then timed ``--repeat`` times; the best time is reported.  Outputs
of the two backends are compared so a speedup never hides a wrong answer.
"""

import argparse
import json
import time
from fractions import Fraction

import numpy as np

from eulerlike import _accel
from eulerlike.models import build_l96
from eulerlike.projective import flow_with_jacobian, tangent_run
from eulerlike.sde import IntegratorConfig, integrate
from eulerlike.spanning import scan_distinctness

L96 = build_l96(10, [1, 1], epsilon=Fraction(1, 10))
L96_0 = build_l96(10, [1, 1], epsilon=0)


def base_path():
    cfg = IntegratorConfig(dt=0.01, T=200, seed=1, scheme="heun")
    return integrate(L96, np.zeros(10), cfg, stride=100).states[-1]


def tangent_frame():
    cfg = IntegratorConfig(dt=0.01, T=100, seed=1, scheme="heun")
    return tangent_run(L96, np.zeros(10), cfg, 10, qr_every=10)["exponents"]


def variational_flow():
    x0 = np.linspace(-1, 1, 10)
    return flow_with_jacobian(L96_0, x0, 2.0, 1e-3, 10)[2][-1]


def distinctness_scan():
    # the exact D^k table is cached after the warm-up, so this times the scan itself
    rep = scan_distinctness(6, 1)
    return np.array([rep.examined, rep.excluded, rep.satisfied])


WORKLOADS = {
    "base path (L96 n=10, 2e4 Heun steps)": base_path,
    "tangent frame (10 vectors, 1e4 steps)": tangent_frame,
    "flow + Jacobian (RK4, 2e3 steps)": variational_flow,
    "distinctness scan (N=6)": distinctness_scan,
}


def best_of(fn, repeat):
    fn()  # warm-up / compile
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--json", help="write the timings to this file")
    args = ap.parse_args()

    backends = ["numba", "numpy"] if _accel.HAVE_NUMBA else ["numpy"]
    results = {}
    print(f"{'workload':<42}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}")
    for name, fn in WORKLOADS.items():
        row, outs = {}, {}
        for b in backends:
            prev = _accel.set_backend(b)
            try:
                row[b], outs[b] = best_of(fn, args.repeat)
            finally:
                _accel.set_backend(prev)
        if len(backends) == 2:
            np.testing.assert_allclose(outs["numba"], outs["numpy"], rtol=1e-8, atol=1e-10)
            speed = row["numpy"] / row["numba"]
        else:
            speed = float("nan")
        results[name] = {**row, "speedup": speed}
        print(f"{name:<42}" + "".join(f"{row[b]:>11.4f}s" for b in backends) + f"{speed:>9.1f}x")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(results, fh, indent=2)


if __name__ == "__main__":
    main()
