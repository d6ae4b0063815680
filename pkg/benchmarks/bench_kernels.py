"""Compare the numba and numpy backends of the hot kernels.

    python benchmarks/bench_kernels.py [--batch 256] [--repeat 20]

Times batched AGM robustness of the Case Study 1 formula and batched unicycle
rollouts, checks both backends agree, and prints a small table.
"""

import argparse
import time

import numpy as np

from stlrnn import _accel
from stlrnn.pipeline.scenario import load_scenario
from stlrnn.systems import rollout_batch


def best_of(fn, repeat):
    fn()  # compile / warm caches
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--batch", type=int, default=256)
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    if not _accel.NUMBA_AVAILABLE:
        raise SystemExit("numba is not importable; nothing to compare")

    sc = load_scenario("case1")
    rng = np.random.default_rng(0)
    U = rng.uniform(sc.model.bounds.lo, sc.model.bounds.hi, (args.batch, sc.K, 2))
    q0 = np.array([0.5, 0.5, 0.3])
    traces = rollout_batch(sc.model, q0, U)

    rows = []
    for label, fn in [
        ("agm robustness", lambda b: sc.compiled.robustness(traces, 0, backend=b)),
        ("traditional robustness", lambda b: sc.compiled.robustness(traces, 0, "traditional", b)),
        ("unicycle rollout", lambda b: rollout_batch(sc.model, q0, U, backend=b)),
    ]:
        a, b = fn("numba"), fn("numpy")
        err = float(np.max(np.abs(np.asarray(a) - np.asarray(b))))
        t_nb = best_of(lambda: fn("numba"), args.repeat)
        t_np = best_of(lambda: fn("numpy"), args.repeat)
        rows.append((label, t_nb, t_np, err))

    print(f"batch = {args.batch}, best of {args.repeat}")
    print(f"{'kernel':<24}{'numba us/item':>15}{'numpy us/item':>15}{'ratio':>8}{'max |diff|':>12}")
    for label, t_nb, t_np, err in rows:
        per = 1e6 / args.batch
        print(f"{label:<24}{t_nb * per:>15.2f}{t_np * per:>15.2f}{t_np / t_nb:>8.1f}{err:>12.1e}")


if __name__ == "__main__":
    main()
