"""Planted low-rank tensor plus noise: relative residual of the BFGS fit against the noise level."""
import numpy as np

from grasstique.baselines import init_point
from grasstique.cli import GenSpec, generate
from grasstique.objectives import GeneralObjective
from grasstique.optim import SolverOptions, bfgs_local
from grasstique.tensor_core import project_modes

from _common import parser


def main():
    p = parser(__doc__, "noise_floor")
    p.add_argument("--n", type=int, default=20)
    p.add_argument("--rank", type=int, default=3)
    p.add_argument("--noise", type=float, nargs="+", default=[0.0, 0.01, 0.1, 0.3])
    args = p.parse_args()
    shape, ranks = (args.n,) * 3, (args.rank,) * 3
    print(f"{'noise':>8}{'iters':>7}{'rel residual':>15}{'noise/sqrt(1+noise^2)':>24}")
    for sigma in args.noise:
        A = generate(GenSpec(seed=args.seed, shape=shape, ranks=ranks, noise=sigma))
        res = bfgs_local(GeneralObjective(A, ranks), init_point(A, ranks),
                         SolverOptions(tol=args.tol, max_iters=args.max_iters))
        fit = project_modes(project_modes(A, res.X), [X.T for X in res.X])
        rel = np.linalg.norm(A - fit) / np.linalg.norm(A)
        # the noise is normalized to ||E|| = ||A0||, so the floor is about sigma / sqrt(1 + sigma^2)
        print(f"{sigma:>8g}{res.iterations:>7}{rel:>15.3e}{sigma / np.sqrt(1 + sigma ** 2):>24.3e}")


if __name__ == "__main__":
    main()
