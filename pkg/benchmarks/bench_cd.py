"""Time the compiled coordinate-descent kernel against the pure-Python one.

Usage: python3 benchmarks/bench_cd.py [--repeat N]

Both kernels solve the same weighted-lasso paths (100 lambdas, warm starts)
on Gram matrices from a Burgers design and from random designs of several
widths.  Results are checked for agreement before timings are reported.
"""
import argparse
import time

import numpy as np

from ralpde._kernels import COMPILED
from ralpde._kernels import _cd_py
from ralpde.regress import CD_MAX_SWEEPS, CD_TOL, _Compressed, _lambda_grid


def _problems():
    from ralpde.datagen import SystemSpec, default_library, design_from_field, generate

    fld, _ = generate(SystemSpec.make("burgers"))
    dm = design_from_field(fld, default_library("burgers"))
    yield "burgers 16 terms", dm.X, dm.y
    rng = np.random.default_rng(0)
    for p in (16, 36, 64):
        X = rng.standard_normal((2000, p)) @ (np.eye(p) + 0.3 * rng.standard_normal((p, p)))
        beta = np.where(rng.random(p) < 0.2, rng.standard_normal(p), 0.0)
        yield f"random {p} terms", X, X @ beta + 0.1 * rng.standard_normal(2000)


def _inputs(X, y):
    comp = _Compressed.build(X, y)
    G = np.ascontiguousarray(comp.R.T @ comp.R)
    c = np.ascontiguousarray(comp.R.T @ comp.r_y)
    w = np.ones(len(c))
    lam = _lambda_grid(float(np.max(2 * np.abs(c))))
    return G, c, w, np.ascontiguousarray(lam)


def _time(fn, args, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        start = time.perf_counter()
        out = fn(*args, CD_TOL, CD_MAX_SWEEPS, np.zeros(len(args[1])))
        best = min(best, time.perf_counter() - start)
    return best, out


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3, help="runs per kernel (best is kept)")
    args = parser.parse_args()
    if not COMPILED:
        raise SystemExit("compiled kernel not available; build with pip install -e . --no-build-isolation")
    from ralpde._kernels import _cd

    print(f"{'problem':<20} {'sweeps':>8} {'python (s)':>11} {'compiled (s)':>13} {'speed-up':>9} {'max |diff|':>11}")
    for name, X, y in _problems():
        inputs = _inputs(X, y)
        t_py, (b_py, s_py) = _time(_cd_py.cd_path, inputs, args.repeat)
        t_c, (b_c, s_c) = _time(_cd.cd_path, inputs, args.repeat)
        diff = float(np.max(np.abs(np.asarray(b_py) - np.asarray(b_c))))
        print(f"{name:<20} {int(np.sum(s_c)):>8} {t_py:>11.4f} {t_c:>13.5f} {t_py / t_c:>8.0f}x {diff:>11.1e}")


if __name__ == "__main__":
    main()
