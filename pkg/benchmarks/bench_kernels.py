"""Compiled versus pure-Python kernels on the same inputs.

    python benchmarks/bench_kernels.py [--events 200000] [--sites 14] [--repeat 3]

Prints one JSON object per kernel with best-of-``repeat`` wall times and the
speedup; exits non-zero if the compiled module is missing or the outputs differ.
"""
import argparse
import json
import sys
import time

import numpy as np

from glauberspec import _backend
from glauberspec.generator import RateFamily
from glauberspec.hamiltonian import site_tables
from glauberspec.kmc import simulate
from glauberspec.lattice import ring, sample_disorder


def best_of(fn, repeat):
    times, out = [], None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def bench_kmc(events, repeat):
    field = sample_disorder(ring(8), -1, 1, 0)
    # heat-bath rates at beta = 0.2 average about 1/2 per site
    t_max = events / (0.5 * field.n_sites)
    res = {}
    for name in ("cython", "python"):
        res[name] = best_of(lambda: simulate(field, 0.2, RateFamily.heat_bath(), t_max, seed=1,
                                             backend=name), repeat)
    (tc, a), (tp, b) = res["cython"], res["python"]
    same = np.array_equal(a.event_times, b.event_times) and np.array_equal(a.tagged, b.tagged)
    return {"kernel": "kmc_advance", "events": a.n_events, "cython_s": tc, "python_s": tp,
            "speedup": tp / tc, "cython_events_per_s": a.n_events / tc, "identical": bool(same)}


def bench_tables(n_sites, repeat):
    field = sample_disorder(ring(n_sites), -1, 1, 0)
    args = (n_sites, *site_tables(field))
    out = []
    c, p = _backend.load("cython"), _backend.load("python")
    tc, a = best_of(lambda: c.flip_delta_table(*args), repeat)
    tp, b = best_of(lambda: p.flip_delta_table(*args), repeat)
    out.append({"kernel": "flip_delta_table", "sites": n_sites, "cython_s": tc, "python_s": tp,
                "speedup": tp / tc, "identical": bool(np.array_equal(a, b))})
    bonds = np.array(field.lattice.bonds, dtype=np.int32)
    eargs = (n_sites, np.ascontiguousarray(bonds[:, 0]), np.ascontiguousarray(bonds[:, 1]),
             np.ascontiguousarray(field.couplings), args[4])
    tc, a = best_of(lambda: c.energies(*eargs), repeat)
    tp, b = best_of(lambda: p.energies(*eargs), repeat)
    out.append({"kernel": "energies", "sites": n_sites, "cython_s": tc, "python_s": tp,
                "speedup": tp / tc, "identical": bool(np.array_equal(a, b))})
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--events", type=int, default=200_000)
    ap.add_argument("--sites", type=int, default=14)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if "cython" not in _backend.available():
        print("compiled kernels are not built", file=sys.stderr)
        return 2
    rows = [bench_kmc(args.events, args.repeat), *bench_tables(args.sites, args.repeat)]
    for row in rows:
        print(json.dumps(row, sort_keys=True))
    return 0 if all(r["identical"] for r in rows) else 1


if __name__ == "__main__":
    sys.exit(main())
