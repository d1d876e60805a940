"""Compare the compiled and pure-Python kernel backends.

Times each hot kernel on identical inputs under both backends, checks that
the outputs agree, and times one full closed-loop scenario per backend in a
subprocess (the backend is chosen at import time).

Usage::

    python benchmarks/bench_kernels.py [--repeat 2000] [--scenario gap-full-rank]
"""
from __future__ import annotations

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from fxtadapt import available_backends
from fxtadapt.verify import random_qp


def _qp_inputs(n_problems, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n_problems):
        out.append(random_qp(rng))
    return out


def _quad_inputs(n, seed=0):
    rng = np.random.default_rng(seed)
    params = np.array([1.0, 0.0123, 0.0123, 0.0224, 9.81, 0.0441, 10.0, -8.0, -5.0])
    chis = rng.normal(0.0, 0.3, (n, 12))
    return [(chi, params) for chi in chis]


def _gain_inputs(n, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        r = int(rng.integers(1, 4))
        out.append((rng.normal(size=r), 10.0 ** rng.uniform(-1, 2, r), float(rng.uniform(0, 1)),
                    1e-3, 5.0, 5.0, 5.0))
    return out


def bench_kernel(name, inputs, backends, repeat):
    row = {}
    results = {}
    for bname, mod in backends.items():
        fn = getattr(mod, name)
        results[bname] = [fn(*args) for args in inputs]
        loops = max(1, repeat // len(inputs))
        sec = min(timeit.repeat(lambda: [fn(*args) for args in inputs], number=loops, repeat=3))
        row[bname] = sec / (loops * len(inputs)) * 1e6
    agree = True
    if len(results) == 2:
        for a, b in zip(results["python"], results["cython"]):
            fa = a if isinstance(a, tuple) else (a,)
            fb = b if isinstance(b, tuple) else (b,)
            for x, y in zip(fa, fb):
                if isinstance(x, (np.ndarray, float, int, list)):
                    if not np.allclose(np.asarray(x, dtype=float), np.asarray(y, dtype=float), rtol=1e-9, atol=1e-12):
                        agree = False
                elif x != y:
                    agree = False
    return row, agree


def bench_scenario(scenario):
    code = (
        "import time; from fxtadapt.sim import run_closed_loop, scenario_config;"
        f"cfg = scenario_config({scenario!r}); t0 = time.perf_counter(); run_closed_loop(cfg);"
        "print(time.perf_counter() - t0)"
    )
    out = {}
    for bname, env_extra in (("cython", {}), ("python", {"FXTADAPT_PURE_PYTHON": "1"})):
        env = {k: v for k, v in os.environ.items() if k != "FXTADAPT_PURE_PYTHON"}
        env.update(env_extra)
        res = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        out[bname] = float(res.stdout.strip().splitlines()[-1])
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=2000, help="kernel calls per timing sample")
    ap.add_argument("--scenario", default="gap-full-rank")
    ap.add_argument("--skip-scenario", action="store_true")
    args = ap.parse_args(argv)

    backends = available_backends()
    if "cython" not in backends:
        print("compiled backend not built; timing the pure-Python kernels only")
    cases = {
        "gi_solve": _qp_inputs(200),
        "quadrotor_terms": _quad_inputs(200),
        "implicit_gain": _gain_inputs(200),
    }
    print(f"{'kernel':<18}{'python [us]':>14}{'cython [us]':>14}{'speedup':>10}  agree")
    for name, inputs in cases.items():
        row, agree = bench_kernel(name, inputs, backends, args.repeat)
        cy = row.get("cython", float("nan"))
        print(f"{name:<18}{row['python']:>14.2f}{cy:>14.2f}{row['python'] / cy:>10.1f}  {agree}")
    if not args.skip_scenario and "cython" in backends:
        sec = bench_scenario(args.scenario)
        print(f"\nscenario {args.scenario}: python {sec['python']:.2f} s, cython {sec['cython']:.2f} s, "
              f"speedup {sec['python'] / sec['cython']:.1f}x")


if __name__ == "__main__":
    main()
