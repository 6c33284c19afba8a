"""Compare the compiled and pure-Python kernel backends.

    python3 benchmarks/bench_kernels.py [--sites 1024] [--steps 2000] [--nodes 32]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from crackling_kzm import kernels


def _best(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_phi4(backend, sites: int, steps: int, repeat: int) -> float:
    """Nanoseconds per site-step."""
    rng = np.random.default_rng(0)
    start = rng.uniform(-0.01, 0.01, sites)

    def run():
        phi = start.copy()
        backend.phi4_integrate(phi, -1.0, 2.0 / steps, 0, steps, 0.01, 0.1, 12345)

    return _best(run, repeat) / (sites * steps) * 1e9


def bench_betweenness(backend, nodes: int, graphs: int, repeat: int) -> float:
    """Microseconds per graph."""
    rng = np.random.default_rng(1)
    mats = []
    for _ in range(graphs):
        a = np.triu(rng.random((nodes, nodes)) < 0.2, 1)
        mats.append(np.ascontiguousarray((a | a.T).astype(np.uint8)))

    def run():
        for a in mats:
            backend.betweenness(a)

    return _best(run, repeat) / graphs * 1e6


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sites", type=int, default=1024)
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--nodes", type=int, default=32)
    ap.add_argument("--graphs", type=int, default=50)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    backends = [("python", kernels.python)]
    if kernels.compiled is not None:
        backends.insert(0, ("compiled", kernels.compiled))
    else:
        print("compiled extension not built; python backend only")
    rows = []
    for name, be in backends:
        phi = bench_phi4(be, args.sites, args.steps, args.repeat)
        bc = bench_betweenness(be, args.nodes, args.graphs, args.repeat)
        rows.append((name, phi, bc))
    print(f"{'backend':<10}{'phi4 ns/site-step':>20}{'betweenness us/graph':>24}")
    for name, phi, bc in rows:
        print(f"{name:<10}{phi:>20.2f}{bc:>24.1f}")
    if len(rows) == 2:
        print(f"{'speedup':<10}{rows[1][1] / rows[0][1]:>19.1f}x{rows[1][2] / rows[0][2]:>23.1f}x")


if __name__ == "__main__":
    main()
