"""Random 50x50x50 tensor, rank (20,20,20): L-BFGS memory sweep against HOOI."""
import numpy as np

from grasstique.baselines import init_point
from grasstique.objectives import GeneralObjective

from _common import parser, run_all


def main():
    p = parser(__doc__, "lbfgs_memory")
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--rank", type=int, default=20)
    p.add_argument("--memories", type=int, nargs="+", default=[5, 10, 20])
    args = p.parse_args()
    A = np.random.default_rng(args.seed).standard_normal((args.n,) * 3)
    ranks = (args.rank,) * 3
    obj = GeneralObjective(A, ranks)
    start = init_point(A, ranks)
    runs = {f"lbfgs-m{m}": ("lbfgs", {"m": m}) for m in args.memories}
    runs["hooi"] = ("hooi", {})
    run_all(obj, start, runs, args.outdir, args.tol, args.max_iters)


if __name__ == "__main__":
    main()
