"""Time the compiled kernels against the numpy fallback.

Run with ``python benchmarks/bench_kernels.py [--repeat N]``.
"""
import argparse
import timeit

import numpy as np

from carleman import _core
from carleman.geodist import GridDomain, _edge_weights
from carleman.wavesolve import WaveProblem, WaveState, evolve


def dijkstra_case(n):
    dom = GridDomain([-1.0, -1.0], [1.0, 1.0], [n, n], metric=[["1 + x1^2", "0"], ["0", "1"]])
    W, offs = _edge_weights(dom, 2)
    src = np.zeros(n * n, np.uint8)
    src[(n // 2) * n + n // 2] = 1
    W = np.ascontiguousarray(W)
    return lambda name: _core.get_backend(name).dijkstra(W, offs, src)


def wave_case(shape, nsteps):
    d = len(shape)
    P = WaveProblem([-1.0] * d, [1.0] * d, shape)
    u0 = P.project(lambda *x: np.exp(-8 * sum(xi * xi for xi in x)))
    v0 = np.zeros(P.shape)
    dt = P.dt_for(0.5)
    return lambda name: evolve(P, WaveState(u0, v0), dt, nsteps, backend=name)


CASES = [
    ("dijkstra 2D 61x61, 16 neighbours", dijkstra_case(61)),
    ("verlet_1d n=2001, 2000 steps", wave_case([2001], 2000)),
    ("verlet_2d 101x101, 200 steps", wave_case([101, 101], 200)),
]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    try:
        _core.get_backend("compiled")
    except ImportError:
        print("compiled extension not built; nothing to compare")
        return 1
    print(f"{'case':36s} {'compiled [s]':>13s} {'python [s]':>11s} {'speedup':>8s}")
    for label, run in CASES:
        t = {name: min(timeit.repeat(lambda: run(name), number=1, repeat=args.repeat))
             for name in ("compiled", "python")}
        print(f"{label:36s} {t['compiled']:13.4f} {t['python']:11.4f} "
              f"{t['python'] / t['compiled']:8.1f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
