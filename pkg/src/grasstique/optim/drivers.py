"""Maximization drivers on products of Grassmannians.

Every driver runs the same loop: pick an ascent direction, search along the
geodesic, move the point (carrying complement bases along), update the
curvature model, repeat until ``||grad Phi|| / |Phi| <= tol``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg

from ..manifold import GrassmannPoint
from ..objectives import HESSIAN_CAP, HessianTooLarge, flatten, grad_from_partials, tangent_shapes, unflatten
from .linesearch import LineSearchParams, NonAscentError, StepData, wolfe_search
from .trace import RunTrace
from .updates import (
    DenseQNState,
    LbfgsState,
    conjugate_blocks,
    init_inverse_hessian,
    shifted_negative,
)

log = logging.getLogger(__name__)


@dataclass
class SolverOptions:
    tol: float = 1e-13
    max_iters: int = 1000
    init: str = "identity"          # "identity" (scaled) or "exact"
    m: int = 10                     # L-BFGS memory
    gamma: str = "latest"           # L-BFGS scaling policy
    linesearch: LineSearchParams = field(default_factory=LineSearchParams)
    callback: Callable[["IterInfo"], None] | None = None
    trace_path: str | None = None


@dataclass
class IterInfo:
    """Passed to ``SolverOptions.callback`` after every iteration."""

    iter: int
    points: tuple[GrassmannPoint, ...]
    phi: float
    relgrad: float
    step: float
    direction: tuple[np.ndarray, ...]    # global ascent direction used this iteration
    s: np.ndarray | None = None
    y: np.ndarray | None = None
    updated: bool = False
    state: object = None


@dataclass
class SolverResult:
    points: tuple[GrassmannPoint, ...]
    phi: float
    relgrad: float
    iterations: int
    status: str                          # "converged", "max_iters" or "stalled"
    trace: RunTrace

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    @property
    def X(self) -> tuple[np.ndarray, ...]:
        return tuple(p.X for p in self.points)


def _start_points(start, need_complement: bool) -> tuple[GrassmannPoint, ...]:
    if isinstance(start, (GrassmannPoint, np.ndarray)):
        start = (start,)
    pts = tuple(p if isinstance(p, GrassmannPoint) else GrassmannPoint(p) for p in start)
    if need_complement:
        pts = tuple(p.with_complement() for p in pts)
    return pts


def _norm(parts) -> float:
    return float(np.sqrt(sum(np.vdot(P, P) for P in parts)))


def _relgrad(g, phi) -> float:
    gn = _norm(g)
    if phi == 0:
        return 0.0 if gn == 0 else float("inf")
    return gn / abs(phi)


def _local(points, g):
    return tuple(p.complement.T @ G for p, G in zip(points, g))


class _Strategy:
    name = ""
    need_complement = False

    def __init__(self, obj, opts: SolverOptions):
        self.obj = obj
        self.opts = opts
        self.events: list[tuple[str, str]] = []

    def setup(self, points, g):
        pass

    def direction(self, points, g):
        raise NotImplementedError

    def initial_step(self, g) -> float | None:
        return None

    def update(self, points, g, direction, step: StepData):
        """Returns ``(s, y, updated)`` in the state's coordinates."""
        return None, None, False

    def reset(self, points):
        pass

    @property
    def state(self):
        return None


class _LocalBFGS(_Strategy):
    name = "bfgs-local"
    need_complement = True

    def setup(self, points, g):
        self.qn: DenseQNState = init_inverse_hessian(self.obj, points, self.opts.init, "local", self.events)
        self.first = True

    def direction(self, points, g):
        self.ghat = flatten(_local(points, g))
        self.d = self.qn.direction(self.ghat)
        return tuple(p.complement @ D for p, D in
                     zip(points, unflatten(self.d, tangent_shapes(self.obj, "local"))))

    def initial_step(self, g):
        if self.first and self.qn.pending_scale:
            return 1.0 / max(_norm(g), 1e-300)
        return None

    def update(self, points, g, direction, step):
        self.first = False
        # local coordinates of the transported direction equal the old ones
        s = step.t * self.d
        y = -(flatten(_local(step.points, step.grad)) - self.ghat)
        return s, y, self.qn.update(s, y)

    def reset(self, points):
        self.qn = DenseQNState(np.eye(self.qn.M.shape[0]), "local", pending_scale=True)
        self.first = True

    @property
    def state(self):
        return self.qn


class _GlobalBFGS(_Strategy):
    name = "bfgs-global"

    def setup(self, points, g):
        self.qn = init_inverse_hessian(self.obj, points, self.opts.init, "global", self.events)
        self.first = True

    def direction(self, points, g):
        return unflatten(self.qn.direction(flatten(g)), tangent_shapes(self.obj, "global"))

    def initial_step(self, g):
        if self.first and self.qn.pending_scale:
            return 1.0 / max(_norm(g), 1e-300)
        return None

    def update(self, points, g, direction, step):
        self.first = False
        # The transports only act isometrically on tangents, so the conjugated
        # state is restricted to the new tangent spaces (identity on normals)
        # to stop round-off from mixing the two.
        proj = [np.eye(p.n) - p.X @ p.X.T for p in step.points]
        left = [P @ T.matrix() for P, T in zip(proj, step.ops)]
        right = [T.reverse().matrix() @ P for P, T in zip(proj, step.ops)]
        M = conjugate_blocks(self.qn.M, self.obj.dims, left, right)
        M = M + scipy.linalg.block_diag(*[np.kron(np.eye(p.r), p.X @ p.X.T) for p in step.points])
        self.qn.M = 0.5 * (M + M.T)
        s = step.t * flatten(step.direction)
        y = -(flatten(step.grad) - flatten(tuple(T.apply(G) for T, G in zip(step.ops, g))))
        return s, y, self.qn.update(s, y)

    def reset(self, points):
        self.qn = DenseQNState(np.eye(self.qn.M.shape[0]), "global", pending_scale=True)
        self.first = True

    @property
    def state(self):
        return self.qn


class _LBFGS(_Strategy):
    name = "lbfgs"

    def setup(self, points, g):
        self.mem = LbfgsState(self.opts.m, self.opts.gamma)
        self.shapes = tangent_shapes(self.obj, "global")

    def direction(self, points, g):
        return unflatten(self.mem.direction(flatten(g)), self.shapes)

    def initial_step(self, g):
        if not self.mem.pairs:
            return 1.0 / max(_norm(g), 1e-300)
        return None

    def update(self, points, g, direction, step):
        ops = step.ops

        def carry(v):
            return flatten(tuple(T.apply(P) for T, P in zip(ops, unflatten(v, self.shapes))))

        self.mem.transport(carry)
        s = step.t * flatten(step.direction)
        y = -(flatten(step.grad) - carry(flatten(g)))
        return s, y, self.mem.push(s, y)

    def reset(self, points):
        self.mem = LbfgsState(self.opts.m, self.opts.gamma)

    @property
    def state(self):
        return self.mem


class _Newton(_Strategy):
    name = "newton"
    need_complement = True

    def setup(self, points, g):
        size = self.obj.tangent_dim("local")
        if size > HESSIAN_CAP:
            raise HessianTooLarge(
                f"Newton-Grassmann needs a {size} x {size} Hessian (cap {HESSIAN_CAP}); "
                "use bfgs-local, bfgs-global or lbfgs instead"
            )

    def direction(self, points, g):
        H = self.obj.hessian_matrix(points)
        A, mu = shifted_negative(H)
        if mu > 0:
            self.events.append(("hessian_shift", f"mu={mu:.6g}"))
        d = scipy.linalg.solve(A, flatten(_local(points, g)), assume_a="pos")
        return tuple(p.complement @ D for p, D in
                     zip(points, unflatten(d, tangent_shapes(self.obj, "local"))))


def _run(obj, start, opts: SolverOptions, strat: _Strategy) -> SolverResult:
    points = _start_points(start, strat.need_complement)
    trace = RunTrace(opts.trace_path, meta={
        "solver": strat.name,
        "tol": opts.tol,
        "max_iters": opts.max_iters,
        "init": opts.init,
        "m": opts.m,
        "gamma": opts.gamma,
        "linesearch": opts.linesearch.as_dict(),
    })
    try:
        ev = obj.evaluate(tuple(p.X for p in points))
        phi = ev.value
        g = grad_from_partials(points, ev.partials, "global")
        evals = 1
        relgrad = _relgrad(g, phi)
        strat.setup(points, g)
        trace.record(0, phi, relgrad, 0.0, evals)
        status = "max_iters"
        k = 0
        while True:
            _flush_events(strat, trace, k)
            if relgrad <= opts.tol:
                status = "converged"
                break
            if k >= opts.max_iters:
                break
            k += 1
            direction = strat.direction(points, g)
            try:
                ls = wolfe_search(obj, points, direction, phi, g, opts.linesearch, strat.initial_step(g))
            except (NonAscentError, RuntimeError) as exc:
                trace.event(k, "fallback", f"{exc}; restarting from the gradient direction")
                log.info("iteration %d: %s; using the gradient direction", k, exc)
                strat.reset(points)
                direction = g
                try:
                    ls = wolfe_search(obj, points, direction, phi, g, opts.linesearch,
                                      1.0 / max(_norm(g), 1e-300))
                except (NonAscentError, RuntimeError) as exc2:
                    trace.event(k, "stalled", str(exc2))
                    log.info("iteration %d: line search failed along the gradient: %s", k, exc2)
                    status = "stalled"
                    k -= 1
                    break
            if not ls.wolfe:
                trace.event(k, "armijo_only", f"t={ls.step.t:.6g}")
            step = ls.step
            evals += ls.evals
            s, y, updated = strat.update(points, g, direction, step)
            if s is not None and not updated:
                trace.event(k, "curvature_skip", f"s^T y = {float(s @ y):.3e}")
            points, g = step.points, step.grad
            phi = step.evaluation.value
            relgrad = _relgrad(g, phi)
            trace.record(k, phi, relgrad, step.t, evals)
            if opts.callback is not None:
                opts.callback(IterInfo(k, points, phi, relgrad, step.t, direction, s, y, updated, strat.state))
        _flush_events(strat, trace, k)
    finally:
        trace.close()
    return SolverResult(points, phi, relgrad, k, status, trace)


def _flush_events(strat, trace, k):
    for kind, msg in strat.events:
        trace.event(k, kind, msg)
    strat.events.clear()


def bfgs_local(obj, start, opts: SolverOptions | None = None) -> SolverResult:
    """BFGS with the state kept in local coordinates; only the bases move."""
    opts = opts or SolverOptions()
    return _run(obj, start, opts, _LocalBFGS(obj, opts))


def bfgs_global(obj, start, opts: SolverOptions | None = None) -> SolverResult:
    """BFGS in global coordinates with the state conjugated by transports."""
    opts = opts or SolverOptions()
    return _run(obj, start, opts, _GlobalBFGS(obj, opts))


def lbfgs(obj, start, opts: SolverOptions | None = None) -> SolverResult:
    """Limited-memory BFGS with transported curvature pairs."""
    opts = opts or SolverOptions()
    return _run(obj, start, opts, _LBFGS(obj, opts))


def newton_grassmann(obj, start, opts: SolverOptions | None = None) -> SolverResult:
    """Newton iteration with the local Hessian shifted to be negative definite."""
    opts = opts or SolverOptions()
    return _run(obj, start, opts, _Newton(obj, opts))


SOLVERS = {
    "bfgs-local": bfgs_local,
    "bfgs-global": bfgs_global,
    "lbfgs": lbfgs,
    "newton": newton_grassmann,
}
