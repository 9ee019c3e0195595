"""Compiled vs numpy kernels: ``python3 benchmarks/bench_kernels.py [--repeat N]``."""
import argparse
import timeit

import numpy as np

from radioflow import _kernels_py

try:
    from radioflow import _kernels as compiled
except ImportError:
    compiled = None

CASES = {
    "phasor_table 4096x64": lambda k, a: k.phasor_table(a["p0"], a["step"], 64),
    "im2col 32x16x24x24 k3": lambda k, a: k.im2col(a["x"], 3, 3, 1, 1),
    "col2im 32x16x24x24 k3": lambda k, a: k.col2im(a["cols"], a["x"].shape, 3, 3, 1, 1),
}


def inputs():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((32, 16, 24, 24)).astype(np.float32)
    return {"p0": rng.uniform(0, 6.3, 4096), "step": rng.uniform(0, 3.1, 4096), "x": x,
            "cols": _kernels_py.im2col(x, 3, 3, 1, 1)}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    a = inputs()
    print(f"{'kernel':<26}{'numpy ms':>10}{'cython ms':>11}{'speedup':>9}")
    for name, fn in CASES.items():
        t_py = min(timeit.repeat(lambda: fn(_kernels_py, a), number=1, repeat=args.repeat)) * 1e3
        if compiled is None:
            print(f"{name:<26}{t_py:>10.3f}{'n/a':>11}{'':>9}")
            continue
        t_c = min(timeit.repeat(lambda: fn(compiled, a), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<26}{t_py:>10.3f}{t_c:>11.3f}{t_py / t_c:>8.1f}x")


if __name__ == "__main__":
    main()
