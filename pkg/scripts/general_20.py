"""Random 20x20x20 tensor, rank (5,5,5): BFGS variants against HOOI from one start."""
import numpy as np

from grasstique.baselines import init_point
from grasstique.objectives import GeneralObjective

from _common import parser, run_all


def main():
    p = parser(__doc__, "general_20")
    p.add_argument("--n", type=int, default=20)
    p.add_argument("--rank", type=int, default=5)
    args = p.parse_args()
    A = np.random.default_rng(args.seed).standard_normal((args.n,) * 3)
    ranks = (args.rank,) * 3
    obj = GeneralObjective(A, ranks)
    start = init_point(A, ranks)
    run_all(obj, start, {
        "bfgs-local-exact": ("bfgs-local", {"init": "exact"}),
        "bfgs-local-identity": ("bfgs-local", {}),
        "bfgs-global": ("bfgs-global", {}),
        "lbfgs-m10": ("lbfgs", {"m": 10}),
        "newton": ("newton", {}),
        "hooi": ("hooi", {}),
    }, args.outdir, args.tol, args.max_iters)


if __name__ == "__main__":
    main()
