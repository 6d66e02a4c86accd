"""Command-line front end.

Subcommands::

    approx       general tensor, multilinear ranks r1,...,rk
    approx-sym   symmetric tensor, single rank
    multi-obj    weighted symmetric orders 2+3+4 sharing one subspace
    check        finite-difference and worked-example self checks
    gen          write a random (optionally planted low-rank) tensor
    batch        run many configurations, optionally in parallel

Runs stream a CSV trace (``iter,phi,relgrad,step,evals``) to ``--out`` and
print only its path on stdout.  Exit status: 0 tolerance reached, 2 iteration
limit (or stalled line search), 1 error.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .baselines import hooi, init_point
from .manifold import GrassmannPoint, geodesic, random_point
from .objectives import CompositeObjective, GeneralObjective, SymmetricObjective
from .optim import SOLVERS, SolverOptions
from .tensor_core import is_symmetric, project_modes, read_tensor, symmetrize, write_tensor

log = logging.getLogger("grasstique")

EXIT_OK, EXIT_ERROR, EXIT_MAXITER = 0, 1, 2
SOLVER_NAMES = ("bfgs-local", "bfgs-global", "bfgs", "lbfgs", "newton", "hooi")


class ConfigError(ValueError):
    pass


# -- tensor generation -----------------------------------------------------------

@dataclass(frozen=True)
class GenSpec:
    """``seed=7,shape=20x20x20[,ranks=2x2x2][,noise=0.1][,symmetric=1]``."""

    seed: int = 0
    shape: tuple[int, ...] = (10, 10, 10)
    ranks: tuple[int, ...] | None = None
    noise: float = 0.0
    symmetric: bool = False

    @classmethod
    def parse(cls, text: str, seed: int | None = None) -> "GenSpec":
        fields = {}
        for item in filter(None, (p.strip() for p in text.split(","))):
            if "=" not in item:
                raise ConfigError(f"generator item {item!r} is not key=value")
            key, val = (s.strip() for s in item.split("=", 1))
            try:
                if key == "seed":
                    fields["seed"] = int(val)
                elif key == "shape":
                    fields["shape"] = tuple(int(n) for n in val.lower().split("x"))
                elif key == "ranks":
                    fields["ranks"] = tuple(int(n) for n in val.lower().split("x"))
                elif key == "noise":
                    fields["noise"] = float(val)
                elif key == "symmetric":
                    fields["symmetric"] = val.lower() in ("1", "true", "yes")
                else:
                    raise ConfigError(f"unknown generator key {key!r}")
            except ValueError as exc:
                if isinstance(exc, ConfigError):
                    raise
                raise ConfigError(f"bad value for {key}: {val!r}") from None
        if "seed" not in fields and seed is not None:
            fields["seed"] = seed
        spec = cls(**fields)
        spec.validate()
        return spec

    def validate(self):
        if not self.shape or any(n < 1 for n in self.shape):
            raise ConfigError(f"bad shape {self.shape}")
        if self.symmetric and len(set(self.shape)) != 1:
            raise ConfigError("symmetric generation needs a cubical shape")
        if self.ranks is not None:
            if len(self.ranks) != len(self.shape):
                raise ConfigError("planted ranks must match the order of the shape")
            if any(not 1 <= r <= n for r, n in zip(self.ranks, self.shape)):
                raise ConfigError(f"planted ranks {self.ranks} do not fit shape {self.shape}")
            if self.symmetric and len(set(self.ranks)) != 1:
                raise ConfigError("symmetric planting needs equal ranks")
        if self.noise < 0:
            raise ConfigError("noise level must be non-negative")


def generate(spec: GenSpec) -> np.ndarray:
    """Deterministic N(0,1) tensor, or planted ``(X_1,..,X_k) . C + noise * E``.

    The noise tensor is scaled so that ``||E||_F = ||(X_1,..,X_k) . C||_F``.
    """
    rng = np.random.default_rng(spec.seed)
    if spec.ranks is None:
        A = rng.standard_normal(spec.shape)
        return symmetrize(A).data if spec.symmetric else A
    if spec.symmetric:
        Q = random_point(spec.shape[0], spec.ranks[0], rng)
        C = symmetrize(rng.standard_normal(spec.ranks)).data
        factors = [Q] * len(spec.shape)
    else:
        factors = [random_point(n, r, rng) for n, r in zip(spec.shape, spec.ranks)]
        C = rng.standard_normal(spec.ranks)
    A0 = project_modes(C, [X.T for X in factors])
    if spec.noise == 0:
        return A0
    E = rng.standard_normal(spec.shape)
    if spec.symmetric:
        E = symmetrize(E).data
    E *= np.linalg.norm(A0) / np.linalg.norm(E)
    return A0 + spec.noise * E


def generate_symmetric_family(n: int, orders, seed: int) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    return [symmetrize(rng.standard_normal((n,) * k)).data for k in orders]


# -- run configuration -------------------------------------------------------------

@dataclass
class RunConfig:
    mode: str = "approx"                  # approx | approx-sym | multi-obj
    input: str | None = None
    gen: str | None = None
    seed: int = 0
    ranks: tuple[int, ...] = ()
    solver: str = "bfgs-local"
    coords: str | None = None
    m: int = 10
    init: str = "identity"
    hooi_sweeps: int = 5
    check_definite: bool = False
    tol: float = 1e-13
    max_iters: int = 1000
    out: str = "trace.csv"
    orders: tuple[int, ...] = (2, 3, 4)
    factors: str | None = None

    def resolved_solver(self) -> str:
        solver = self.solver
        if solver == "bfgs":
            solver = "bfgs-global" if self.coords == "global" else "bfgs-local"
        if solver == "bfgs-local" and self.coords == "global":
            raise ConfigError("--solver bfgs-local conflicts with --coords global")
        if solver == "bfgs-global" and self.coords == "local":
            raise ConfigError("--solver bfgs-global conflicts with --coords local")
        return solver

    def validate(self):
        if self.mode not in ("approx", "approx-sym", "multi-obj"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.solver not in SOLVER_NAMES:
            raise ConfigError(f"unknown solver {self.solver!r}; choose from {', '.join(SOLVER_NAMES)}")
        if self.coords not in (None, "local", "global"):
            raise ConfigError("--coords must be local or global")
        if self.init not in ("identity", "exact"):
            raise ConfigError("--init must be identity or exact")
        if (self.input is None) == (self.gen is None) and self.mode != "multi-obj":
            raise ConfigError("give exactly one of --input and --gen")
        if not self.ranks:
            raise ConfigError("--ranks is required")
        if self.mode != "approx" and len(self.ranks) != 1:
            raise ConfigError("symmetric modes take a single rank")
        if self.m < 1 or self.max_iters < 0 or self.hooi_sweeps < 0 or not self.tol > 0:
            raise ConfigError("--m must be >= 1, --tol > 0 and counts non-negative")
        self.resolved_solver()


def _load_tensor(cfg: RunConfig) -> np.ndarray:
    if cfg.input is not None:
        try:
            return read_tensor(cfg.input)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read tensor {cfg.input}: {exc}") from exc
    spec = GenSpec.parse(cfg.gen, seed=cfg.seed)
    if cfg.mode == "approx-sym" and not spec.symmetric:
        spec = replace(spec, symmetric=True)
        spec.validate()
    return generate(spec)


def build_problem(cfg: RunConfig):
    """Objective and starting point for a configuration."""
    if cfg.mode == "multi-obj":
        if cfg.input is not None:
            raise ConfigError("multi-obj builds its tensors from --gen (n=..., seed=...)")
        spec = GenSpec.parse(cfg.gen or "", seed=cfg.seed)
        n = spec.shape[0]
        tensors = generate_symmetric_family(n, cfg.orders, spec.seed)
        r = cfg.ranks[0]
        obj = CompositeObjective.cumulant_style(tensors, r)
        # start from the dominant subspace of the order-2 term, or HOSVD of the first
        start = init_point(tensors[0], r, hooi_sweeps=cfg.hooi_sweeps, symmetric=True)
        return obj, start
    A = _load_tensor(cfg)
    if cfg.mode == "approx-sym":
        if len(set(A.shape)) != 1 or not is_symmetric(A, 1e-10):
            raise ConfigError("approx-sym needs a symmetric tensor")
        A = symmetrize(A).data
        obj = SymmetricObjective(A, cfg.ranks[0])
        start = init_point(A, cfg.ranks[0], hooi_sweeps=cfg.hooi_sweeps, symmetric=True,
                           definite=cfg.check_definite)
        return obj, start
    if len(cfg.ranks) != A.ndim:
        raise ConfigError(f"{len(cfg.ranks)} ranks given for an order-{A.ndim} tensor")
    if any(not 1 <= r <= n for r, n in zip(cfg.ranks, A.shape)):
        raise ConfigError(f"ranks {cfg.ranks} do not fit shape {A.shape}")
    obj = GeneralObjective(A, cfg.ranks)
    start = init_point(A, cfg.ranks, hooi_sweeps=cfg.hooi_sweeps, definite=cfg.check_definite)
    return obj, start


def run(cfg: RunConfig) -> tuple[int, str | None]:
    """Execute one configuration; returns ``(exit code, trace path)``."""
    try:
        cfg.validate()
        solver = cfg.resolved_solver()
        obj, start = build_problem(cfg)
        Path(cfg.out).parent.mkdir(parents=True, exist_ok=True)
        if solver == "hooi":
            if cfg.mode == "multi-obj":
                raise ConfigError("hooi does not apply to the multi-objective problem")
            res = hooi(obj, start, tol=cfg.tol, max_sweeps=cfg.max_iters, trace_path=cfg.out)
        else:
            opts = SolverOptions(tol=cfg.tol, max_iters=cfg.max_iters, init=cfg.init, m=cfg.m,
                                 trace_path=cfg.out)
            res = SOLVERS[solver](obj, start, opts)
        log.info("%s: %s after %d iterations, phi=%.16g relgrad=%.3e",
                 solver, res.status, res.iterations, res.phi, res.relgrad)
        for it, kind, msg in res.trace.events:
            log.debug("event at %d: %s %s", it, kind, msg)
        if cfg.factors:
            np.savez(cfg.factors, *[p.X for p in res.points])
        return (EXIT_OK if res.converged else EXIT_MAXITER), cfg.out
    except Exception as exc:  # noqa: BLE001 - every failure becomes exit 1
        log.error("%s", exc)
        log.debug("traceback", exc_info=True)
        return EXIT_ERROR, None


# -- self checks -------------------------------------------------------------------

def _worked_tensor() -> np.ndarray:
    slices = [
        [[9, -3, 8], [2, 7, 0], [7, 0, -1]],
        [[2, 7, 0], [-7, 5, -3], [0, -3, 1]],
        [[3, 0, -2], [0, 4, -1], [0, -2, 1]],
    ]
    return np.stack([np.array(s, dtype=float) for s in slices], axis=2)


def run_checks(seed: int = 0, cases: int = 5) -> list[tuple[str, bool, str]]:
    """Worked-example golden values plus a finite-difference battery."""
    results = []
    A = _worked_tensor()
    e1 = np.array([[1.0], [0.0], [0.0]])
    perp = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    obj = GeneralObjective(A, (1, 1, 1))
    pts = tuple(GrassmannPoint(e1, perp) for _ in range(3))
    g = obj.gradient(pts, "global")
    gl = obj.gradient(pts, "local")
    want = ([0, 18, 63], [0, -27, 72], [0, 18, 27])
    err = max(np.abs(G.ravel() - w).max() for G, w in zip(g, want))
    errl = max(np.abs(G.ravel() - w[1:]).max() for G, w in zip(gl, want))
    results.append(("worked gradient (global)", err <= 1e-12, f"max err {err:.1e}"))
    results.append(("worked gradient (local)", errl <= 1e-12, f"max err {errl:.1e}"))

    D = (np.array([[0.0], [-1.0], [0.0]]), np.array([[0.0], [0.0], [1.0]]), np.array([[0.0], [1.0], [0.0]]))
    moved = tuple(geodesic(e1, d, math.pi / 4) for d in D)
    phi0, phi1 = obj.value(pts), obj.value(moved)
    ok = abs(phi0 - 40.5) <= 1e-10 and abs(phi1 - 45.5625) <= 1e-10
    results.append(("worked geodesic step values", ok, f"{phi0:.10g} -> {phi1:.10g}"))

    rng = np.random.default_rng(seed)
    worst1 = worst2 = 0.0
    for case in range(cases):
        for kind in ("general", "symmetric"):
            if kind == "general":
                o = GeneralObjective(rng.standard_normal((4, 5, 6)), (2, 2, 3))
            else:
                o = SymmetricObjective(symmetrize(rng.standard_normal((5, 5, 5))), 2)
            e1_, e2_ = fd_errors(o, rng)
            worst1, worst2 = max(worst1, e1_), max(worst2, e2_)
    results.append(("finite-difference gradient", worst1 <= 1e-6, f"worst rel err {worst1:.1e}"))
    results.append(("finite-difference Hessian", worst2 <= 1e-4, f"worst rel err {worst2:.1e}"))
    return results


def fd_errors(obj, rng, h: float = 1e-5) -> tuple[float, float]:
    """Relative errors of gradient and Hessian against central differences along a geodesic."""
    pts = tuple(GrassmannPoint(random_point(n, r, rng)).with_complement() for n, r in obj.dims)
    D = tuple(p.complement @ rng.standard_normal((n - r, r)) for p, (n, r) in zip(pts, obj.dims))

    def f(t):
        return obj.value(tuple(geodesic(p.X, d, t) for p, d in zip(pts, D)))

    f0 = f(0.0)
    d1 = (f(h) - f(-h)) / (2 * h)

    def second(s):
        return (f(s) - 2 * f0 + f(-s)) / s ** 2

    # Richardson extrapolation keeps the error small even when <D, H D> is near zero
    d2 = (4 * second(1e-3) - second(2e-3)) / 3
    g = obj.gradient(pts, "global")
    H = obj.hessian_apply(tuple(p.X for p in pts), D, (None,) * len(pts))
    a1 = sum(float(np.vdot(x, y)) for x, y in zip(g, D))
    a2 = sum(float(np.vdot(x, y)) for x, y in zip(D, H))
    return abs(d1 - a1) / max(abs(a1), 1e-12), abs(d2 - a2) / max(abs(a2), 1e-12)


# -- argument parsing ----------------------------------------------------------------

def _int_tuple(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.replace("x", ",").split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _add_run_flags(p: argparse.ArgumentParser, sym: bool = False):
    src = p.add_mutually_exclusive_group()
    src.add_argument("--input", help="tensor file (text 'tns' or binary)")
    src.add_argument("--gen", help="generator spec, e.g. seed=7,shape=20x20x20[,ranks=2x2x2,noise=0.1]")
    p.add_argument("--ranks", type=_int_tuple, required=True,
                   help="single rank" if sym else "comma-separated multilinear ranks")
    p.add_argument("--solver", default="bfgs-local", choices=SOLVER_NAMES)
    p.add_argument("--coords", choices=("local", "global"), default=None)
    p.add_argument("--init", choices=("identity", "exact"), default="identity",
                   help="initial inverse Hessian for dense BFGS")
    p.add_argument("--m", type=int, default=10, help="L-BFGS memory")
    p.add_argument("--hooi-sweeps", type=int, default=5)
    p.add_argument("--check-definite", action="store_true",
                   help="keep sweeping until the starting Hessian is negative definite")
    p.add_argument("--tol", type=float, default=1e-13)
    p.add_argument("--max-iters", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="trace.csv", help="CSV trace path")
    p.add_argument("--factors", default=None, help="optional .npz for the final factors")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="grasstique", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    _add_run_flags(sub.add_parser("approx", help="general tensor approximation"))
    _add_run_flags(sub.add_parser("approx-sym", help="symmetric tensor approximation"), sym=True)
    p = sub.add_parser("multi-obj", help="weighted symmetric orders sharing one subspace")
    _add_run_flags(p, sym=True)
    p.add_argument("--orders", type=_int_tuple, default=(2, 3, 4))

    p = sub.add_parser("check", help="run self checks")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("gen", help="generate a tensor file")
    p.add_argument("--gen", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--binary", action="store_true")

    p = sub.add_parser("batch", help="run configurations from a JSON file")
    p.add_argument("--input", required=True, help="JSON list of run configurations")
    p.add_argument("--jobs", type=int, default=1)
    return parser


def _config_from_args(args) -> RunConfig:
    return RunConfig(
        mode=args.command, input=args.input, gen=args.gen, seed=args.seed, ranks=args.ranks,
        solver=args.solver, coords=args.coords, m=args.m, init=args.init,
        hooi_sweeps=args.hooi_sweeps, check_definite=args.check_definite, tol=args.tol,
        max_iters=args.max_iters, out=args.out,
        orders=getattr(args, "orders", (2, 3, 4)), factors=args.factors,
    )


def config_from_dict(d: dict) -> RunConfig:
    d = dict(d)
    for key in ("ranks", "orders"):
        if key in d and not isinstance(d[key], (list, tuple)):
            d[key] = _int_tuple(str(d[key]))
        if key in d:
            d[key] = tuple(int(x) for x in d[key])
    unknown = set(d) - set(RunConfig.__dataclass_fields__)
    if unknown:
        raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
    return RunConfig(**d)


def _run_dict(d: dict) -> tuple[int, str | None]:
    _setup_logging()
    try:
        cfg = config_from_dict(d)
    except (ConfigError, TypeError) as exc:
        log.error("%s", exc)
        return EXIT_ERROR, None
    return run(cfg)


def _setup_logging():
    level = os.environ.get("GRASSTIQUE_LOG", "info").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(level=levels.get(level, logging.INFO), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _setup_logging()
    args = make_parser().parse_args(argv)
    if args.command in ("approx", "approx-sym", "multi-obj"):
        code, path = run(_config_from_args(args))
        if path is not None:
            print(path)
        return code
    if args.command == "check":
        results = run_checks(args.seed)
        width = max(len(name) for name, _, _ in results)
        for name, ok, detail in results:
            print(f"{name:<{width}}  {'PASS' if ok else 'FAIL'}  {detail}", file=sys.stderr)
        return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_ERROR
    if args.command == "gen":
        try:
            A = generate(GenSpec.parse(args.gen, seed=args.seed))
            write_tensor(args.out, A, binary=args.binary)
        except (ConfigError, OSError) as exc:
            log.error("%s", exc)
            return EXIT_ERROR
        print(args.out)
        return EXIT_OK
    if args.command == "batch":
        try:
            configs = json.loads(Path(args.input).read_text())
            if not isinstance(configs, list):
                raise ConfigError("batch file must hold a JSON list")
        except (OSError, ValueError) as exc:
            log.error("%s", exc)
            return EXIT_ERROR
        if args.jobs > 1:
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                outcomes = list(pool.map(_run_dict, configs))
        else:
            outcomes = [_run_dict(c) for c in configs]
        for _, path in outcomes:
            if path is not None:
                print(path)
        return max((code for code, _ in outcomes), key=lambda c: (c == EXIT_ERROR, c), default=EXIT_OK)
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
