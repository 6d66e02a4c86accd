"""Symmetric tensors of orders 2, 3 and 4 sharing one subspace, weights 1/k!."""
from grasstique.baselines import init_point
from grasstique.cli import generate_symmetric_family
from grasstique.objectives import CompositeObjective

from _common import parser, run_all


def main():
    p = parser(__doc__, "multi_objective")
    p.add_argument("--n", type=int, default=30)
    p.add_argument("--rank", type=int, default=4)
    p.add_argument("--orders", type=int, nargs="+", default=[2, 3, 4])
    args = p.parse_args()
    tensors = generate_symmetric_family(args.n, args.orders, args.seed)
    obj = CompositeObjective.cumulant_style(tensors, args.rank)
    start = init_point(tensors[0], args.rank, symmetric=True)
    run_all(obj, start, {
        "bfgs-local-exact": ("bfgs-local", {"init": "exact"}),
        "bfgs-global": ("bfgs-global", {}),
        "lbfgs-m10": ("lbfgs", {"m": 10}),
    }, args.outdir, args.tol, args.max_iters)


if __name__ == "__main__":
    main()
