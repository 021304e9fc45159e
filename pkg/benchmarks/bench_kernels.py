"""Per-step cost of the compiled and pure-Python circuit kernels.

Drives 500-node networks at three densities with the Lorenz-like input
layout used by forecasting (24 inputs, 2 grounds) and reports
milliseconds per step, the speedup, and the largest voltage difference
between the two backends after the run.

    python benchmarks/bench_kernels.py --steps 2000
"""
import argparse
import time

import numpy as np

from nwnrc import kernels
from nwnrc.circuit import CircuitSession, MemristorParams
from nwnrc.graph import generate_random_graph


def run(graph, pinned, U, backend):
    sess = CircuitSession(graph, pinned, MemristorParams(), 0.005, backend=backend)
    t0 = time.perf_counter()
    for u in U:
        sess.step(u)
    return (time.perf_counter() - t0) / len(U), sess.voltages


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nodes", type=int, default=500)
    ap.add_argument("--edges", type=int, nargs="+", default=[2119, 9905, 123671])
    ap.add_argument("--steps", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    backends = ["python"] + (["compiled"] if kernels.HAVE_COMPILED else [])
    rng = np.random.default_rng(args.seed)
    t = np.arange(args.steps) * 0.005
    print(f"{'edges':>8} {'density':>8} " + " ".join(f"{b + ' ms':>12}" for b in backends)
          + f" {'speedup':>8} {'max |dV|':>10}")
    for m in args.edges:
        graph = generate_random_graph(args.nodes, m, args.seed)
        pinned = rng.choice(args.nodes, 26, replace=False)
        # 24 smooth drives in the 0.2 V range, last two pinned nodes grounded
        U = np.zeros((args.steps, 26))
        U[:, :24] = 0.2 * np.sin(np.outer(t, rng.uniform(0.5, 3.0, 24)) + rng.uniform(0, 6.3, 24))
        res = {b: run(graph, pinned, U, b) for b in backends}
        row = f"{m:>8} {2 * m / (args.nodes * (args.nodes - 1)):>8.4f} "
        row += " ".join(f"{1e3 * res[b][0]:>12.3f}" for b in backends)
        if len(backends) == 2:
            speed = res["python"][0] / res["compiled"][0]
            dv = np.max(np.abs(res["python"][1] - res["compiled"][1]))
            row += f" {speed:>8.1f} {dv:>10.2e}"
        print(row)


if __name__ == "__main__":
    main()
