"""Time the hot kernels with numba and with the numpy fallback.

    python benchmarks/bench_kernels.py            # both backends, side by side
    python benchmarks/bench_kernels.py --single   # current backend only (internal)

The fallback is selected by POOLRES_NO_NUMBA=1 at import time, so each
backend runs in its own interpreter.
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time


def _best(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def run_single(repeat: int) -> dict:
    from poolres import _kernels
    from poolres.families import (brute_force_unsat, entailed, gen_ggt, gen_gpeb, make_guard_map,
                                  make_guards, pyramid)
    from poolres.ggt_prover import refute_ggt
    from poolres.proof import check_greedy_up

    out = {"numba": _kernels.USE_NUMBA}
    f5 = gen_ggt(5, make_guards(5, 0))
    g = pyramid(2)
    gpeb = gen_gpeb(g, 3, make_guard_map(g, 3, 0))  # 18 variables, 2^18 assignments
    p5 = refute_ggt(5, make_guards(5, 0))
    clauses = [nd.clause for nd in p5.nodes]
    p9 = refute_ggt(9, make_guards(9, 0), "regrti")

    # warm up the jit before timing
    brute_force_unsat(gpeb)
    entailed(f5, clauses[:3])
    check_greedy_up(refute_ggt(5, make_guards(5, 0), "regrti"))

    out["brute_force_gpeb18_s"] = _best(lambda: brute_force_unsat(gpeb), repeat)
    out["entailed_ggt5_s"] = _best(lambda: entailed(f5, clauses), repeat)
    out["greedy_up_ggt9_s"] = _best(lambda: check_greedy_up(p9), repeat)
    return out


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--single", action="store_true")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if args.single:
        print(json.dumps(run_single(args.repeat)))
        return
    rows = []
    for flag in ("0", "1"):
        env = dict(os.environ, POOLRES_NO_NUMBA=flag)
        res = subprocess.run([sys.executable, __file__, "--single", "--repeat", str(args.repeat)],
                             env=env, capture_output=True, text=True, check=True)
        rows.append(json.loads(res.stdout.strip().splitlines()[-1]))
    keys = [k for k in rows[0] if k != "numba"]
    print(f"{'kernel':<22}{'numba (s)':>12}{'numpy (s)':>12}{'speedup':>10}")
    for k in keys:
        a, b = rows[0][k], rows[1][k]
        print(f"{k[:-2]:<22}{a:>12.4f}{b:>12.4f}{b / a:>10.1f}")


if __name__ == "__main__":
    main()
