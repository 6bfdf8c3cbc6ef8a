"""Compare the compiled and NumPy integration kernels.

    python3 benchmarks/bench_kernels.py [--substeps 2000]
"""

import argparse
import time

import numpy as np

from cortexflow import _backend
from cortexflow.cortex import SimParams, delta_weights, equilibrium_radius, make_circle, make_perturbed_circle
from cortexflow.geometry import ChannelGeometry, RatchetSpec

X0 = 47.6


def scenarios(N):
    prm = SimParams()
    free = (make_perturbed_circle(N, equilibrium_radius(prm.p), 0.05, 3).positions, None, (-1.0, 0.0))
    rat = ChannelGeometry.ratcheted(RatchetSpec(((3.9 / X0, 2.0),), w0=1.4 / X0, d0=2.7 / X0), entry_x=0.0)
    r = equilibrium_radius(prm.p, N)
    # a cell pressed against the channel mouth
    mouth = (make_circle(N, center=(-r - 0.001, 0.0), radius=r).positions, rat, (1.0, 0.0))
    return prm, {"free space": free, "ratchet mouth": mouth}


def walls(geom):
    if geom is None:
        z = np.zeros(2)
        return (z, z, 0, 0, 0, 0.0), 1.0
    p = geom.wall_polyline(-5.0, 10.0)
    return (p.x, p.y, p.graph_start, 1, int(p.has_entry), p.entry_x), p.lipschitz


def run(fn, X, prm, geom, omega, nsub, N):
    w, lip = walls(geom)
    X = X.copy()
    t0 = time.perf_counter()
    status = fn(X, nsub, 1e-5, 1.0 / N, prm.kappa, prm.mu, prm.p, prm.v, omega[0], omega[1],
                delta_weights(prm.a, N), 1, 1, -1, *w, prm.eps, lip, 1.0 / N)
    return time.perf_counter() - t0, X, status[0]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--substeps", type=int, default=2000)
    ap.add_argument("--N", type=int, default=200)
    args = ap.parse_args()
    if _backend.compiled_advance is None:
        raise SystemExit("compiled kernel not available; build the package first")
    prm, cases = scenarios(args.N)
    print(f"{'scenario':<16}{'python [s]':>12}{'compiled [s]':>14}{'speedup':>10}{'max |dX|':>12}")
    for name, (X, geom, omega) in cases.items():
        # the NumPy kernel gets fewer substeps; times are scaled up
        n_py = max(1, args.substeps // 10)
        t_py, X_py, _ = run(_backend.python_advance, X, prm, geom, omega, n_py, args.N)
        _, X_c_short, _ = run(_backend.compiled_advance, X, prm, geom, omega, n_py, args.N)
        t_c, _, _ = run(_backend.compiled_advance, X, prm, geom, omega, args.substeps, args.N)
        t_py *= args.substeps / n_py
        diff = float(np.max(np.abs(X_py - X_c_short)))
        print(f"{name:<16}{t_py:>12.3f}{t_c:>14.3f}{t_py / t_c:>10.1f}{diff:>12.2e}")


if __name__ == "__main__":
    main()
