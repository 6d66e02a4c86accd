"""Order-10 tensor with every mode of size 5, rank 2 in each mode, solved by L-BFGS."""
import numpy as np

from grasstique.baselines import init_point
from grasstique.objectives import GeneralObjective

from _common import parser, run_all


def main():
    p = parser(__doc__, "order_ten")
    p.add_argument("--order", type=int, default=10)
    p.add_argument("--n", type=int, default=5)
    p.add_argument("--rank", type=int, default=2)
    p.set_defaults(tol=1e-10)
    args = p.parse_args()
    A = np.random.default_rng(args.seed).standard_normal((args.n,) * args.order)
    ranks = (args.rank,) * args.order
    obj = GeneralObjective(A, ranks)
    start = init_point(A, ranks, hooi_sweeps=1)
    run_all(obj, start, {"lbfgs-m10": ("lbfgs", {"m": 10})}, args.outdir, args.tol, args.max_iters)


if __name__ == "__main__":
    main()
