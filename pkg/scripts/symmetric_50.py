"""Symmetric 50x50x50 tensor, symmetric rank 5: dense BFGS, L-BFGS and HOOI."""
from grasstique.baselines import init_point
from grasstique.cli import GenSpec, generate
from grasstique.objectives import SymmetricObjective

from _common import parser, run_all


def main():
    p = parser(__doc__, "symmetric_50")
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--rank", type=int, default=5)
    args = p.parse_args()
    S = generate(GenSpec(seed=args.seed, shape=(args.n,) * 3, symmetric=True))
    obj = SymmetricObjective(S, args.rank)
    start = init_point(S, args.rank, symmetric=True)
    run_all(obj, start, {
        "bfgs-local-exact": ("bfgs-local", {"init": "exact"}),
        "bfgs-local-identity": ("bfgs-local", {}),
        "lbfgs-m10": ("lbfgs", {"m": 10}),
        "hooi": ("hooi", {}),
    }, args.outdir, args.tol, args.max_iters)


if __name__ == "__main__":
    main()
