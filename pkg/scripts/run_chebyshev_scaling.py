"""Preconditioned Chebyshev and CG iteration counts as the block condition number grows.

    python3 scripts/run_chebyshev_scaling.py --kappas 1,4,25,100,400
"""

import argparse
import math

import numpy as np

from mcflow.generate import random_instance, random_pd_blocks
from mcflow.kvec import EnergyMatrices
from mcflow.lapsolve import CoupledOperator, build_preconditioner, precon_cg, precon_cheby


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--kappas", default="1,4,25,100,400")
    ap.add_argument("--theta", type=float, default=1e-6)
    ap.add_argument("--n", type=int, default=40)
    ap.add_argument("--m", type=int, default=100)
    ap.add_argument("--k", type=int, default=3)
    ap.add_argument("--trials", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    print("kappa,bound,cheby_max,cg_max")
    for kappa in (float(x) for x in args.kappas.split(",")):
        bound = math.ceil(math.sqrt(2 * kappa) * math.log(2 / args.theta)) + 5
        cheby = cg = 0
        for t in range(args.trials):
            g = random_instance(args.seed + t, args.n, args.m, args.k).graph
            P = EnergyMatrices(random_pd_blocks(rng, g.m, args.k, kappa))
            b = rng.normal(size=(g.n, args.k))
            b -= b.mean(axis=0)
            op = CoupledOperator(g, P)
            _, rep = precon_cheby(op, build_preconditioner(g, P), b, P.condition, args.theta)
            cheby = max(cheby, rep.iterations)
            _, rep = precon_cg(op, build_preconditioner(g, P), b, P.condition, args.theta)
            cg = max(cg, rep.iterations)
        print(f"{kappa:g},{bound},{cheby},{cg}")


if __name__ == "__main__":
    main()
