"""Compare the compiled kernels with the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 3] [--json out.json]

Each kernel runs on identical inputs under both backends; the table lists
the best wall time, the speedup and the largest absolute disagreement.
"""
from __future__ import annotations

import argparse
import json
import timeit

import numpy as np

from circsing import _pykernels
from circsing.cantor import build
from circsing.core import TWO_PI
from circsing.quadrature import graded_rule

try:
    from circsing import _ckernels
except ImportError:  # pragma: no cover
    _ckernels = None


def cases():
    rng = np.random.default_rng(0)
    t = rng.uniform(0, TWO_PI, 4000)
    c = rng.normal(size=4000) + 1j * rng.normal(size=4000)
    yield "exp_sum 4000 pts x 1025 m", lambda mod: mod.exp_sum(t, c, -512, 512)

    cen = rng.uniform(0, TWO_PI, 2000)
    half = rng.uniform(1e-4, 1e-2, 2000)
    w = rng.uniform(0.5, 2, 2000) + 0j
    yield "interval_sum 2000 arcs x 1025 m", lambda mod: mod.interval_sum(cen, half, w, -512, 512)

    sys_ = build(3, 13)
    sig = np.asarray(sys_.schedule.sigma)
    base = rng.uniform(0, TWO_PI, 2000)
    off = np.zeros(2000)
    lr = np.log(rng.uniform(0.5, 0.999, 2000))
    yield ("LogSumTree.eval 2^13 leaves x 2000 pts",
           lambda mod: mod.LogSumTree(sys_.a_flat, sig, 13).eval(base, off, lr))

    small = build(4, 9)
    N = 8
    s = small.sigma(N)
    r = graded_rule(s, 1e-9)
    args = (N / TWO_PI, 0.3, (1 << N) * s, r.side, r.off, r.rel, r.wk, r.wg, 6, 1, 15)
    ssig = np.asarray(small.schedule.sigma)
    yield ("interval_moments 2^8 intervals",
           lambda mod: mod.interval_moments(mod.LogSumTree(small.a_flat, ssig, N), *args)[0])


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--json", help="also write results to this file")
    a = ap.parse_args(argv)
    if _ckernels is None:
        print("compiled extension not built; nothing to compare")
        return 1
    rows = []
    print(f"{'kernel':42s} {'cython s':>10s} {'python s':>10s} {'speedup':>8s} {'max diff':>9s}")
    for name, fn in cases():
        out = {}
        times = {}
        for label, mod in (("cython", _ckernels), ("python", _pykernels)):
            out[label] = np.asarray(fn(mod))
            times[label] = min(timeit.repeat(lambda: fn(mod), number=1, repeat=a.repeat))
        diff = float(np.max(np.abs(out["cython"] - out["python"])))
        rows.append({"kernel": name, **{f"{k}_s": v for k, v in times.items()}, "max_diff": diff})
        print(f"{name:42s} {times['cython']:10.4f} {times['python']:10.4f} "
              f"{times['python'] / times['cython']:8.1f} {diff:9.1e}")
    if a.json:
        with open(a.json, "w") as fh:
            json.dump(rows, fh, indent=2)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
