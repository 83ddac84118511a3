"""Wall time of the collision kernels on a given velocity grid.

    python scripts/time_collision.py --n 16 --R 6 --cols 128
"""
import argparse
import time

import numpy as np

from kinemix.collision import CollisionTensor, apply_N, build_linearized, worker_count
from kinemix.mixture import MixtureParams, VelocityGrid, equilibrium_root


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=16)
    ap.add_argument("--R", type=float, default=6.0)
    ap.add_argument("--cols", type=int, default=128)
    ap.add_argument("--cache", default=None)
    a = ap.parse_args()
    params = MixtureParams(np.array([1.0, 2.0]), np.array([1.0, 0.5]), 1.0)
    grid = VelocityGrid(a.n, a.R)
    t = time.perf_counter()
    tensor = CollisionTensor.build(params, grid, a.cache)
    print(f"tensor     {time.perf_counter() - t:8.2f}s  classes "
          + ", ".join(f"{b.i}{b.j}:{b.offs.size - 1}" for b in tensor.blocks))
    rng = np.random.default_rng(0)
    f = rng.normal(size=(a.cols, params.I, grid.Nv)) * equilibrium_root(params, grid)
    apply_N(f[:1], tensor)  # compile
    t = time.perf_counter()
    apply_N(f, tensor)
    print(f"N(f)       {time.perf_counter() - t:8.2f}s  for {a.cols} columns, {worker_count()} worker(s)")
    t = time.perf_counter()
    build_linearized(params, grid, tensor)
    print(f"linearized {time.perf_counter() - t:8.2f}s  dimension {params.I * grid.Nv}")


if __name__ == "__main__":
    main()
