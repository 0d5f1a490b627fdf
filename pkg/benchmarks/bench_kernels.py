"""Compare the compiled and numpy kernel backends.

    python benchmarks/bench_kernels.py [--repeat N]

Prints the median wall time per call for the assignment solver and the IoU
matrix at several sizes, and checks both backends agree on every input.
"""
import argparse
import statistics
import time

import numpy as np

from lowfps_mot.kernels import available_backends


def _boxes(rng, n):
    xy = rng.uniform(0, 1000, (n, 2))
    wh = rng.uniform(10, 80, (n, 2))
    return np.hstack([xy, xy + wh])


def _time(fn, *args, repeat=7):
    samples = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=7)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    backends = available_backends()
    names = sorted(backends)
    rng = np.random.default_rng(args.seed)
    print(f"backends: {', '.join(names)}")
    header = f"{'kernel':<10} {'size':>9}" + "".join(f" {n + ' ms':>12}" for n in names)
    if len(names) == 2:
        header += f" {'speedup':>9}"
    print(header)

    for n in (10, 50, 200, 500):
        cost = rng.random((n, n))
        totals = [cost[np.arange(n), backends[name].solve_lsa(cost)].sum() for name in names]
        assert all(abs(t - totals[0]) < 1e-9 for t in totals), "backends disagree"
        times = {name: _time(backends[name].solve_lsa, cost, repeat=args.repeat) for name in names}
        _report("solve_lsa", f"{n}x{n}", names, times)

    for n in (10, 100, 1000):
        a, b = _boxes(rng, n), _boxes(rng, n)
        ref = backends[names[0]].iou_matrix(a, b)
        for name in names[1:]:
            assert np.allclose(backends[name].iou_matrix(a, b), ref, rtol=0, atol=1e-12), "backends disagree"
        times = {name: _time(backends[name].iou_matrix, a, b, repeat=args.repeat) for name in names}
        _report("iou", f"{n}x{n}", names, times)


def _report(kernel, size, names, times):
    line = f"{kernel:<10} {size:>9}" + "".join(f" {1e3 * times[n]:12.4f}" for n in names)
    if len(names) == 2 and "cython" in times:
        line += f" {times['python'] / times['cython']:8.1f}x"
    print(line)


if __name__ == "__main__":
    main()
