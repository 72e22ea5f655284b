"""Time the numba kernels against their numpy twins on one desk-scale workload.

    python3 benchmarks/bench_kernels.py [--n 20000] [--repeat 3]
"""
import argparse
import math
import time

import numpy as np

from multigroup import _kernels, fixtures
from multigroup.core import sample
from multigroup.experts import selection_log_coef, update_gain
from multigroup.risk import point_loss_table


def best_of(fn, args, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=20000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    inst = fixtures.desk_instance()
    s = sample(inst.dist, args.n, seed=0, groups=inst.G)
    nH, nG = len(inst.H), len(inst.G)
    eta = np.full((nH, nG), 0.05)
    hedge_args = (
        s.points, s.labels, np.ascontiguousarray(inst.G.matrix), np.ascontiguousarray(inst.H.tables),
        np.ascontiguousarray(inst.loss.table), selection_log_coef(eta), update_gain(eta), eta,
        np.full((nH, nG), -math.log(nH * nG)),
    )
    snaps = _kernels.hedge_run_numba(*hedge_args)[0]
    risk_args = (snaps, selection_log_coef(eta), np.ascontiguousarray(inst.G.matrix),
                 np.ascontiguousarray(point_loss_table(inst.H, inst.dist, inst.loss)))
    row_loss = np.ascontiguousarray(inst.loss.table[inst.H.tables[:, s.points], s.labels[None, :]])
    row_groups = np.ascontiguousarray(inst.G.matrix[:, s.points])
    w = np.ones(len(s))
    counts = row_groups.astype(float) @ w
    h0 = int(np.argmin(row_loss.sum(axis=1)))
    prepend_args = (row_loss, row_groups, w, counts, np.full(nG, 1e-3), h0, 1_000_000)

    # warm up the jit cache so compile time is not timed
    _kernels.snapshot_point_risk_numba(*risk_args)
    _kernels.prepend_loop_numba(*prepend_args)

    print(f"n={args.n}  |H|={nH}  |G|={nG}  best of {args.repeat}")
    print(f"{'kernel':<22}{'numba s':>10}{'numpy s':>10}{'speedup':>9}")
    for name, a in (("hedge_run", hedge_args), ("snapshot_point_risk", risk_args), ("prepend_loop", prepend_args)):
        tn = best_of(getattr(_kernels, f"{name}_numba"), a, args.repeat)
        tp = best_of(getattr(_kernels, f"{name}_numpy"), a, args.repeat)
        print(f"{name:<22}{tn:10.4f}{tp:10.4f}{tp / tn:9.1f}x")


if __name__ == "__main__":
    main()
