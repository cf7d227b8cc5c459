"""Compare the numba kernels with the numpy fallback.

Each backend runs in its own interpreter, since the choice is made at import
time from ``LADDER_ETH_BACKEND``.  Usage::

    python benchmarks/bench_kernels.py [--nr 4 5 6] [--repeat 5]
"""
import argparse
import json
import os
import statistics
import subprocess
import sys
import time


def _timed(fn, repeat):
    fn()  # warm-up (JIT compilation, caches)
    out = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        out.append(time.perf_counter() - t0)
    return statistics.median(out)


def worker(n_rights, repeat):
    import numpy as np

    from ladder_eth import _accel
    from ladder_eth.evolve import estimate_bounds, propagate, propagation_plan
    from ladder_eth.model import (LadderParams, build_hamiltonian, build_sector_basis,
                                  default_two_sz)

    rows = []
    for nr in n_rights:
        p = LadderParams(nr, 0.1, 3.0)
        two_sz = default_two_sz(p.n_sites)
        build = lambda: build_hamiltonian(p, build_sector_basis(p.n_sites, two_sz))
        t_build = _timed(build, repeat)
        H = build()
        rng = np.random.default_rng(0)
        v = rng.standard_normal(H.dim) + 1j * rng.standard_normal(H.dim)
        v /= np.linalg.norm(v)
        t_mv = _timed(lambda: H.matvec(v), repeat)
        plan = propagation_plan(estimate_bounds(H), 0.5)
        t_step = _timed(lambda: propagate(H, v, 0.5, plan), repeat)
        check = float(np.abs(propagate(H, v, 0.5, plan)).sum())
        rows.append(dict(n=p.n_sites, dim=H.dim, build=t_build, matvec=t_mv, step=t_step,
                         order=plan.order, check=check))
    print(json.dumps(dict(backend="numba" if _accel.USE_NUMBA else "numpy", rows=rows)))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nr", type=int, nargs="+", default=[4, 5, 6])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()
    if args.worker:
        worker(args.nr, args.repeat)
        return 0

    results = {}
    for backend in ("numba", "numpy"):
        env = dict(os.environ, LADDER_ETH_BACKEND=backend)
        cmd = [sys.executable, __file__, "--worker", "--repeat", str(args.repeat), "--nr",
               *map(str, args.nr)]
        out = subprocess.run(cmd, env=env, check=True, capture_output=True, text=True).stdout
        res = json.loads(out.strip().splitlines()[-1])
        results[res["backend"]] = res["rows"]

    print(f"{'N':>3} {'dim':>7} {'stage':>7} {'numba [ms]':>11} {'numpy [ms]':>11} {'speedup':>8}")
    for a, b in zip(results["numba"], results["numpy"]):
        for stage in ("build", "matvec", "step"):
            ta, tb = 1e3 * a[stage], 1e3 * b[stage]
            print(f"{a['n']:>3} {a['dim']:>7} {stage:>7} {ta:>11.3f} {tb:>11.3f} {tb / ta:>8.2f}")
        rel = abs(a["check"] - b["check"]) / abs(b["check"])
        print(f"{'':>11} Chebyshev order {a['order']}, backends agree to {rel:.1e}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
