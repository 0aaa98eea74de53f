"""Compare the compiled and pure-Python kernel backends.

Times the three hot kernels at the default problem size (p = 1798, a
720 x 360 landscape, 27 signals) and the end-to-end ``sparsify`` call, then
prints the median of several repeats for each backend and the speedup.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import statistics
import time

import numpy as np

from ftir_effects import kernels
from ftir_effects.simulate import builtin_pattern, builtin_template
from ftir_effects.sparsify import landscape_axes, sparsify


def admissible(g, x0):
    g = g - g.mean()
    g = g - (g @ x0) * x0
    return g / np.linalg.norm(g)


def cases():
    x0 = builtin_template()
    gt = admissible(builtin_pattern(), x0)
    thetas, phis = landscape_axes(720, 360)
    trig = (np.cos(thetas), np.sin(thetas), np.cos(phis), np.sin(phis))
    rng = np.random.default_rng(0)
    X = rng.uniform(0.7, 1.3, (27, 1)) * x0 + rng.standard_normal((27, x0.size)) * 1e-3
    t, f = rng.uniform(0, 2 * np.pi, 4000), rng.uniform(0, np.pi, 4000)
    return {
        "l1_grid 720x360": lambda: kernels.l1_grid(gt, x0, *trig),
        "l1_pairs 4000": lambda: kernels.l1_pairs(gt, x0, t, f),
        "align_rows 27x1798": lambda: kernels.align_rows(X, x0),
        "sparsify 720x360": lambda: sparsify(gt, x0, 720, 360),
    }


def time_call(fn, repeat):
    fn()  # warm up
    out = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        out.append(time.perf_counter() - t0)
    return statistics.median(out)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    backends = kernels.available_backends()
    results = {}
    prev = kernels.BACKEND
    try:
        for name in backends:
            kernels.use_backend(name)
            for label, fn in cases().items():
                results[label, name] = time_call(fn, args.repeat)
    finally:
        kernels.use_backend(prev)

    print(f"{'kernel':<22}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}")
    for label in cases():
        row = [results[label, b] for b in backends]
        line = f"{label:<22}" + "".join(f"{v * 1e3:>10.2f}ms" for v in row)
        if len(row) == 2:
            line += f"{row[1] / row[0]:>9.1f}x"
        print(line)
    if "compiled" not in backends:
        print("compiled extension not built; only the python backend was timed")


if __name__ == "__main__":
    main()
