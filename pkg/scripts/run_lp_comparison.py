"""Concurrent flow value from both outer solvers against the exact LP on random tiny instances.

    python3 scripts/run_lp_comparison.py --instances 20 --epsilon 0.1 --out lp_comparison.csv
"""

import argparse
import csv
import sys
import time

import numpy as np

from mcflow.concurrent_mmw import ConcurrentConfig, binary_search_lambda
from mcflow.generate import random_instance
from mcflow.kvec import congestions
from mcflow.refsolve import lp_concurrent_oracle


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--instances", type=int, default=20)
    ap.add_argument("--epsilon", type=float, default=0.1)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--n-outer", type=int, default=30)
    ap.add_argument("--n-inner", type=int, default=50)
    ap.add_argument("--rho-inner", type=float, default=3.0)
    ap.add_argument("--out", help="CSV path (default: stdout)")
    args = ap.parse_args(argv)

    config = ConcurrentConfig(n_outer=args.n_outer, n_inner=args.n_inner, rho_inner=args.rho_inner)
    rows = []
    for i in range(args.instances):
        seed = args.seed + i
        r = np.random.default_rng(seed)
        n = int(r.integers(3, 9))
        m = int(r.integers(n - 1, min(14, n * (n - 1) // 2) + 1))
        k = int(r.integers(1, 4))
        inst = random_instance(seed, n, m, k)
        lam = lp_concurrent_oracle(inst)
        for outer in ("mmw", "signs"):
            t0 = time.perf_counter()
            res = binary_search_lambda(inst, args.epsilon, outer, config)
            cong = float(congestions(res.flow, inst.graph.caps).max()) if res.found else float("nan")
            rows.append({"seed": seed, "n": n, "m": m, "k": k, "outer": outer, "lp_lambda": lam,
                         "lambda": res.lam, "ratio": res.lam / lam, "max_congestion": cong,
                         "probes": len(res.probes), "seconds": round(time.perf_counter() - t0, 3)})
            print(f"seed={seed} k={k} {outer:5s} ratio={res.lam / lam:.3f} cong={cong:.3f}", file=sys.stderr)

    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    w = csv.DictWriter(fh, fieldnames=list(rows[0]))
    w.writeheader()
    w.writerows(rows)
    if args.out:
        fh.close()
    worst = min(r["ratio"] for r in rows)
    print(f"worst lambda/lambda* = {worst:.3f} (target >= {1 - 5 * args.epsilon:.2f})", file=sys.stderr)


if __name__ == "__main__":
    main()
