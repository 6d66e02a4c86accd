"""HOSVD truncation and higher-order orthogonal iteration (HOOI).

Both serve as starting points for the quasi-Newton solvers and HOOI doubles as
a convergence baseline with the same trace format.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .manifold import GrassmannPoint
from .objectives import GeneralObjective, HessianTooLarge, SymmetricObjective, grad_from_partials
from .optim.drivers import SolverResult
from .optim.trace import RunTrace
from .tensor_core import ShapeError, as_tensor, leave_one_out, project_modes, unfold

log = logging.getLogger(__name__)


def _sign_fix(U: np.ndarray) -> np.ndarray:
    """Make the largest-magnitude entry of every column positive."""
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs


def leading_subspace(M: np.ndarray, r: int) -> np.ndarray:
    """Leading ``r`` left singular vectors of ``M`` with deterministic signs."""
    if M.shape[0] <= M.shape[1]:
        # eigen-route is much cheaper for wide unfoldings
        w, V = np.linalg.eigh(M @ M.T)
        U = V[:, ::-1][:, :r]
    else:
        # full U when M has fewer columns than r (e.g. r_i above the product of the other ranks)
        U = np.linalg.svd(M, full_matrices=M.shape[1] < r)[0][:, :r]
    return _sign_fix(U)


@dataclass
class HosvdResult:
    factors: tuple[np.ndarray, ...]
    core: np.ndarray

    def reconstruct(self) -> np.ndarray:
        out = self.core
        for i, X in enumerate(self.factors):
            out = np.moveaxis(np.tensordot(X, out, axes=(1, i)), 0, i)
        return out


def _check_ranks(shape, ranks):
    ranks = tuple(int(r) for r in ranks)
    if len(ranks) != len(shape):
        raise ShapeError(f"{len(ranks)} ranks for an order-{len(shape)} tensor")
    for n, r in zip(shape, ranks):
        if not 1 <= r <= n:
            raise ShapeError(f"rank {r} exceeds extent {n} (or is < 1)")
    return ranks


def hosvd(A, ranks) -> HosvdResult:
    """Truncated HOSVD: leading left singular vectors of each unfolding."""
    A = as_tensor(A)
    ranks = _check_ranks(A.shape, ranks)
    factors = tuple(leading_subspace(unfold(A, i), r) for i, r in enumerate(ranks))
    return HosvdResult(factors, project_modes(A, list(factors)))


def _hooi_sweep(A, Xs):
    Xs = list(Xs)
    for i in range(A.ndim):
        mats = [None if j == i else Xs[j] for j in range(A.ndim)]
        W = project_modes(A, mats)
        Xs[i] = leading_subspace(unfold(W, i), Xs[i].shape[1])
    return Xs


def hooi(obj, start, sweeps: int | None = None, tol: float | None = None,
         trace_path=None, max_sweeps: int = 1000) -> SolverResult:
    """Alternating dominant-subspace updates, one mode at a time.

    Runs ``sweeps`` sweeps, or until the relative gradient drops below ``tol``
    (at most ``max_sweeps``).  For a symmetric objective the factors of the
    underlying general problem are updated and the mode-0 factor is reported.
    """
    if sweeps is None and tol is None:
        sweeps = 50
    if isinstance(obj, SymmetricObjective):
        A = obj.S
        k = obj.k
        if isinstance(start, (GrassmannPoint, np.ndarray)):
            start = (start,)
        X0 = start[0].X if isinstance(start[0], GrassmannPoint) else np.asarray(start[0])
        Xs = [X0] * k
        report = lambda Xs: (GrassmannPoint(Xs[0]),)
    elif isinstance(obj, GeneralObjective):
        A = obj.A
        Xs = [p.X if isinstance(p, GrassmannPoint) else np.asarray(p) for p in start]
        report = lambda Xs: tuple(GrassmannPoint(X) for X in Xs)
    else:
        raise TypeError("hooi needs a GeneralObjective or SymmetricObjective")

    trace = RunTrace(trace_path, meta={"solver": "hooi", "sweeps": sweeps, "tol": tol})
    limit = sweeps if sweeps is not None else max_sweeps

    def stats(pts):
        ev = obj.evaluate(tuple(p.X for p in pts))
        g = grad_from_partials(pts, ev.partials, "global")
        gn = float(np.sqrt(sum(np.vdot(G, G) for G in g)))
        return ev.value, (gn / abs(ev.value) if ev.value else 0.0)

    try:
        pts = report(Xs)
        phi, rg = stats(pts)
        trace.record(0, phi, rg, float("nan"), 1)
        status, k = "max_iters", 0
        for k in range(1, limit + 1):
            if tol is not None and rg <= tol:
                k -= 1
                status = "converged"
                break
            Xs = _hooi_sweep(A, Xs)
            pts = report(Xs)
            phi, rg = stats(pts)
            trace.record(k, phi, rg, float("nan"), k + 1)
        else:
            if tol is not None and rg <= tol:
                status = "converged"
    finally:
        trace.close()
    return SolverResult(pts, phi, rg, k, status, trace)


def init_point(A, ranks, hooi_sweeps: int = 5, symmetric: bool = False,
               definite: bool = False, max_extra_sweeps: int = 50) -> tuple[GrassmannPoint, ...]:
    """HOSVD followed by a few HOOI sweeps.

    In symmetric mode ``ranks`` may be a single integer and the single
    factor returned is the mode-0 factor of the (general) sweeps.  With
    ``definite=True`` sweeping continues (at most ``max_extra_sweeps`` more)
    until the local Hessian is negative definite; a warning is logged if it
    never is or the Hessian is too large to form.
    """
    A = as_tensor(A)
    if symmetric:
        r = ranks if np.isscalar(ranks) else ranks[0]
        ranks = (int(r),) * A.ndim
    Xs = list(hosvd(A, ranks).factors)
    for _ in range(hooi_sweeps):
        Xs = _hooi_sweep(A, Xs)

    def wrap(Xs):
        if symmetric:
            return (GrassmannPoint(Xs[0]),)
        return tuple(GrassmannPoint(X) for X in Xs)

    if not definite:
        return wrap(Xs)
    obj = SymmetricObjective(A, ranks[0]) if symmetric else GeneralObjective(A, ranks)
    for extra in range(max_extra_sweeps + 1):
        try:
            top = hessian_max_eigenvalue(obj, wrap(Xs))
        except HessianTooLarge as exc:
            log.warning("skipping the definiteness check: %s", exc)
            break
        if top < 0:
            log.info("Hessian negative definite after %d sweeps", hooi_sweeps + extra)
            break
        if extra < max_extra_sweeps:
            Xs = _hooi_sweep(A, Xs)
    else:
        log.warning("Hessian still not negative definite after %d sweeps", hooi_sweeps + max_extra_sweeps)
    return wrap(Xs)


def hessian_max_eigenvalue(obj, points) -> float:
    """Largest eigenvalue of the local Hessian; negative at a strict local maximizer."""
    return float(np.linalg.eigvalsh(obj.hessian_matrix(points))[-1])
