"""Objectives ``Phi = 1/2 ||A . (X_1, ..., X_k)||_F^2`` and their derivatives.

All objectives share one interface working on tuples of orthonormal
matrices (one per Grassmann factor; a symmetric objective has a single
factor):

``evaluate(Xs)``
    value and the Euclidean partials ``dPhi/dX_i`` (an :class:`Evaluation`).
``value_delta(Xs, dXs)``
    ``Phi(X + dX) - Phi(X)`` without catastrophic cancellation.
``hessian_apply(Xs, Ds, bases)``
    Grassmann Hessian action.  ``bases[i]`` is the complement basis for local
    coordinates, or ``None`` for global coordinates.

Gradients are obtained from the partials: ``(I - X X^T) G`` globally and
``X_perp^T G`` locally.
"""
from __future__ import annotations

import math
import string
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .manifold import GrassmannPoint
from .tensor_core import (
    ShapeError,
    SymmetricTensor,
    as_tensor,
    leave_one_out,
    matricize,
    mode_dot,
    project_modes,
    vec,
)

HESSIAN_CAP = 10_000


class HessianTooLarge(RuntimeError):
    pass


@dataclass
class Evaluation:
    value: float
    partials: tuple[np.ndarray, ...]
    F: np.ndarray | None = None


def _as_points(point) -> tuple[GrassmannPoint, ...]:
    if isinstance(point, GrassmannPoint):
        return (point,)
    return tuple(p if isinstance(p, GrassmannPoint) else GrassmannPoint(p) for p in point)


def _matrices(point) -> tuple[np.ndarray, ...]:
    if isinstance(point, np.ndarray):
        return (point,)
    if isinstance(point, GrassmannPoint):
        return (point.X,)
    return tuple(p.X if isinstance(p, GrassmannPoint) else np.asarray(p) for p in point)


def _basis(X: np.ndarray, B: np.ndarray | None) -> np.ndarray:
    """Matrix placed in a mode for the B/C products: X_perp or the projector."""
    if B is None:
        return np.eye(X.shape[0]) - X @ X.T
    return B


def _others(k, *skip):
    return [m for m in range(k) if m not in skip]


def _letters(n):
    return string.ascii_letters[:n]


def _pair_terms(Cij, F, Bi, Bj, Dj, i, j, k):
    """Off-diagonal Hessian block ``H_ij(D_j)``.

    ``<<C_ij, F>_{-(i,j)}, D_j>`` plus ``<<B_i, B_j>_{-(i,j)}, D_j>`` with the
    index pairing worked out explicitly so that ``i > j`` needs no special
    casing.
    """
    L = _letters(k)
    a, al, b, be = "wxyz"
    c_idx = [L[m] for m in range(k)]
    f_idx = list(c_idx)
    c_idx[i], c_idx[j] = a, b
    f_idx[i], f_idx[j] = al, be
    t1 = np.einsum(f"{''.join(c_idx)},{''.join(f_idx)},{b}{be}->{a}{al}", Cij, F, Dj, optimize=True)
    bi_idx = [L[m] for m in range(k)]
    bj_idx = list(bi_idx)
    bi_idx[i], bi_idx[j] = a, be
    bj_idx[i], bj_idx[j] = al, b
    t2 = np.einsum(f"{''.join(bi_idx)},{''.join(bj_idx)},{b}{be}->{a}{al}", Bi, Bj, Dj, optimize=True)
    return t1 + t2


def _pair_tensors(Cij, F, Bi, Bj, i, j, k):
    """The two 4-tensors of the (i, j) block, modes ordered (a, b, alpha, beta)
    and (a, beta, alpha, b) respectively."""
    L = _letters(k)
    a, al, b, be = "wxyz"
    c_idx = [L[m] for m in range(k)]
    f_idx = list(c_idx)
    c_idx[i], c_idx[j] = a, b
    f_idx[i], f_idx[j] = al, be
    H2 = np.einsum(f"{''.join(c_idx)},{''.join(f_idx)}->{a}{b}{al}{be}", Cij, F, optimize=True)
    bi_idx = [L[m] for m in range(k)]
    bj_idx = list(bi_idx)
    bi_idx[i], bi_idx[j] = a, be
    bj_idx[i], bj_idx[j] = al, b
    H3 = np.einsum(f"{''.join(bi_idx)},{''.join(bj_idx)}->{a}{be}{al}{b}", Bi, Bj, optimize=True)
    return H2, H3


def _gram_except(T, mode):
    """``<T, T>_{-mode}``."""
    rest = _others(T.ndim, mode)
    return np.tensordot(T, T, axes=(rest, rest))


def _block_matrix(H2, H3):
    """Matricize an off-diagonal block under column-wise vec on both sides."""
    return matricize(H2, (2, 0), (3, 1)) + matricize(H3, (2, 0), (1, 3))


def _diag_block(Bi, F, i):
    BB = _gram_except(Bi, i)
    FF = _gram_except(F, i)
    return np.kron(np.eye(FF.shape[0]), BB) - np.kron(FF.T, np.eye(BB.shape[0]))


class _Base:
    dims: tuple[tuple[int, int], ...]

    @property
    def ncomponents(self) -> int:
        return len(self.dims)

    def tangent_dim(self, coords: str = "local") -> int:
        if coords == "local":
            return sum((n - r) * r for n, r in self.dims)
        return sum(n * r for n, r in self.dims)

    def _check(self, Xs):
        if len(Xs) != len(self.dims):
            raise ShapeError(f"expected {len(self.dims)} factors, got {len(Xs)}")
        for X, (n, r) in zip(Xs, self.dims):
            if X.shape != (n, r):
                raise ShapeError(f"factor has shape {X.shape}, expected {(n, r)}")

    def value(self, point) -> float:
        return self.evaluate(_matrices(point)).value

    def gradient(self, point, coords: str = "global") -> tuple[np.ndarray, ...]:
        """Grassmann gradient of Phi, global or local (needs complements)."""
        pts = _as_points(point)
        ev = self.evaluate(tuple(p.X for p in pts))
        return grad_from_partials(pts, ev.partials, coords)

    def hessian_matrix(self, point, cap: int = HESSIAN_CAP) -> np.ndarray:
        """Dense local-coordinate Hessian (column-wise vec, components in order)."""
        pts = [p.with_complement() for p in _as_points(point)]
        size = self.tangent_dim("local")
        if size > cap:
            raise HessianTooLarge(
                f"local Hessian would be {size} x {size} (cap {cap}); use a quasi-Newton solver"
            )
        Xs = tuple(p.X for p in pts)
        bases = tuple(p.complement for p in pts)
        return self._hessian_matrix(Xs, bases)


def grad_from_partials(points: Sequence[GrassmannPoint], partials, coords: str = "global"):
    if coords == "global":
        return tuple(G - p.X @ (p.X.T @ G) for p, G in zip(points, partials))
    if coords == "local":
        if any(p.complement is None for p in points):
            raise ValueError("local coordinates need a complement basis on every point")
        return tuple(p.complement.T @ G for p, G in zip(points, partials))
    raise ValueError(f"unknown coordinates {coords!r}")


class GeneralObjective(_Base):
    """Best multilinear rank-(r_1, ..., r_k) approximation of a dense tensor."""

    def __init__(self, A, ranks: Sequence[int]):
        self.A = as_tensor(A)
        ranks = tuple(int(r) for r in ranks)
        if len(ranks) != self.A.ndim:
            raise ShapeError(f"{len(ranks)} ranks given for an order-{self.A.ndim} tensor")
        for n, r in zip(self.A.shape, ranks):
            if not 1 <= r <= n:
                raise ShapeError(f"rank {r} outside [1, {n}]")
        self.ranks = ranks
        self.dims = tuple(zip(self.A.shape, ranks))
        self.norm2 = float(np.vdot(self.A, self.A))

    def evaluate(self, Xs) -> Evaluation:
        Xs = _matrices(Xs)
        self._check(Xs)
        k = self.A.ndim
        W = leave_one_out(self.A, Xs)
        F = mode_dot(W[0], Xs[0].T, 0)
        partials = tuple(
            np.tensordot(W[i], F, axes=(_others(k, i), _others(k, i))) for i in range(k)
        )
        return Evaluation(0.5 * float(np.vdot(F, F)), partials, F)

    def core(self, Xs) -> np.ndarray:
        return project_modes(self.A, list(_matrices(Xs)))

    def value_delta(self, Xs, dXs) -> float:
        Xs = _matrices(Xs)
        F0 = project_modes(self.A, list(Xs))
        dF = np.zeros_like(F0)
        k = len(Xs)
        for i in range(k):
            mats = [Xs[j] + dXs[j] if j < i else (dXs[j] if j == i else Xs[j]) for j in range(k)]
            dF += project_modes(self.A, mats)
        return float(np.vdot(dF, F0) + 0.5 * np.vdot(dF, dF))

    def _products(self, Xs, bases, with_pairs=True):
        k = self.A.ndim
        P = [_basis(X, B) for X, B in zip(Xs, bases)]
        W = leave_one_out(self.A, Xs)
        F = mode_dot(W[0], Xs[0].T, 0)
        Bt = [mode_dot(W[i], P[i].T, i) for i in range(k)]
        C = {}
        if with_pairs:
            for i in range(k):
                for j in range(i + 1, k):
                    mats = [None if m in (i, j) else Xs[m] for m in range(k)]
                    V = project_modes(self.A, mats)
                    C[i, j] = mode_dot(mode_dot(V, P[i].T, i), P[j].T, j)
        return F, Bt, C

    def hessian_apply(self, Xs, Ds, bases) -> tuple[np.ndarray, ...]:
        Xs = _matrices(Xs)
        self._check(Xs)
        k = self.A.ndim
        F, Bt, C = self._products(Xs, bases)
        out = []
        for i in range(k):
            Hi = _gram_except(Bt[i], i) @ Ds[i] - Ds[i] @ _gram_except(F, i)
            for j in range(k):
                if j == i:
                    continue
                Cij = C[min(i, j), max(i, j)]
                Hi = Hi + _pair_terms(Cij, F, Bt[i], Bt[j], Ds[j], i, j, k)
            if bases[i] is None:
                Hi = Hi - Xs[i] @ (Xs[i].T @ Hi)
            out.append(Hi)
        return tuple(out)

    def _hessian_matrix(self, Xs, bases):
        k = self.A.ndim
        F, Bt, C = self._products(Xs, bases)
        sizes = [(n - r) * r for n, r in self.dims]
        offs = np.concatenate([[0], np.cumsum(sizes)])
        H = np.zeros((offs[-1], offs[-1]))
        for i in range(k):
            H[offs[i]:offs[i + 1], offs[i]:offs[i + 1]] = _diag_block(Bt[i], F, i)
            for j in range(k):
                if j == i:
                    continue
                H2, H3 = _pair_tensors(C[min(i, j), max(i, j)], F, Bt[i], Bt[j], i, j, k)
                H[offs[i]:offs[i + 1], offs[j]:offs[j + 1]] = _block_matrix(H2, H3)
        return H


class SymmetricObjective(_Base):
    """Best symmetric multilinear rank-r approximation ``Phi(X) = 1/2 ||S.(X,...,X)||^2``."""

    def __init__(self, S, rank: int):
        if not isinstance(S, SymmetricTensor):
            S = SymmetricTensor(S)
        self.S = S.data
        self.k = S.order
        n = S.n
        if not 1 <= rank <= n:
            raise ShapeError(f"rank {rank} outside [1, {n}]")
        self.rank = int(rank)
        self.dims = ((n, self.rank),)
        self.norm2 = float(np.vdot(self.S, self.S))

    def _slot_tensor(self, X):
        """``S`` projected by X on every mode except the first."""
        return project_modes(self.S, [None] + [X] * (self.k - 1))

    def evaluate(self, Xs) -> Evaluation:
        Xs = _matrices(Xs)
        self._check(Xs)
        (X,) = Xs
        W = self._slot_tensor(X)
        F = mode_dot(W, X.T, 0)
        rest = _others(self.k, 0)
        G = self.k * np.tensordot(W, F, axes=(rest, rest))
        return Evaluation(0.5 * float(np.vdot(F, F)), (G,), F)

    def slot_terms(self, X, coords_basis=None) -> list[np.ndarray]:
        """``<S.(.., P at slot i, ..), F>_{-i}`` for each slot i (all equal by symmetry)."""
        P = _basis(X, coords_basis)
        F = project_modes(self.S, [X] * self.k)
        out = []
        for i in range(self.k):
            mats = [X] * self.k
            mats[i] = P
            B = project_modes(self.S, mats)
            rest = _others(self.k, i)
            out.append(np.tensordot(B, F, axes=(rest, rest)))
        return out

    def value_delta(self, Xs, dXs) -> float:
        (X,), (dX,) = _matrices(Xs), dXs
        F0 = project_modes(self.S, [X] * self.k)
        dF = np.zeros_like(F0)
        for i in range(self.k):
            mats = [X + dX] * i + [dX] + [X] * (self.k - i - 1)
            dF += project_modes(self.S, mats)
        return float(np.vdot(dF, F0) + 0.5 * np.vdot(dF, dF))

    def _products(self, X, basis):
        k = self.k
        P = _basis(X, basis)
        W = self._slot_tensor(X)
        F = mode_dot(W, X.T, 0)
        B1 = mode_dot(W, P.T, 0)
        if k >= 2:
            V = project_modes(self.S, [None, None] + [X] * (k - 2))
            B2 = mode_dot(mode_dot(V, X.T, 0), P.T, 1)
            C12 = mode_dot(mode_dot(V, P.T, 0), P.T, 1)
        else:
            B2 = C12 = None
        return F, B1, B2, C12

    def hessian_apply(self, Xs, Ds, bases) -> tuple[np.ndarray, ...]:
        (X,) = _matrices(Xs)
        (D,) = Ds
        (basis,) = bases
        k = self.k
        F, B1, B2, C12 = self._products(X, basis)
        H = k * (_gram_except(B1, 0) @ D - D @ _gram_except(F, 0))
        if k >= 2:
            H = H + k * (k - 1) * _pair_terms(C12, F, B1, B2, D, 0, 1, k)
        if basis is None:
            H = H - X @ (X.T @ H)
        return (H,)

    def _hessian_matrix(self, Xs, bases):
        (X,), (basis,) = Xs, bases
        k = self.k
        F, B1, B2, C12 = self._products(X, basis)
        H = k * _diag_block(B1, F, 0)
        if k >= 2:
            H2, H3 = _pair_tensors(C12, F, B1, B2, 0, 1, k)
            H = H + k * (k - 1) * _block_matrix(H2, H3)
        return H


class CompositeObjective(_Base):
    """Weighted sum of objectives over the same Grassmann factors."""

    def __init__(self, terms: Sequence[tuple[float, _Base]]):
        if not terms:
            raise ValueError("need at least one term")
        dims = terms[0][1].dims
        if any(obj.dims != dims for _, obj in terms):
            raise ShapeError("all terms must live on the same Grassmann factors")
        self.terms = [(float(w), obj) for w, obj in terms]
        self.dims = dims

    @classmethod
    def cumulant_style(cls, tensors: Sequence, rank: int) -> "CompositeObjective":
        """``sum_k (1/k!) ||S_k . (X, ..., X)||^2`` over symmetric tensors of any orders."""
        terms = []
        for S in tensors:
            obj = SymmetricObjective(S, rank)
            terms.append((2.0 / math.factorial(obj.k), obj))
        return cls(terms)

    def evaluate(self, Xs) -> Evaluation:
        value = 0.0
        partials = None
        for w, obj in self.terms:
            ev = obj.evaluate(Xs)
            value += w * ev.value
            scaled = tuple(w * G for G in ev.partials)
            partials = scaled if partials is None else tuple(a + b for a, b in zip(partials, scaled))
        return Evaluation(value, partials)

    def value_delta(self, Xs, dXs) -> float:
        return sum(w * obj.value_delta(Xs, dXs) for w, obj in self.terms)

    def hessian_apply(self, Xs, Ds, bases):
        out = None
        for w, obj in self.terms:
            h = tuple(w * H for H in obj.hessian_apply(Xs, Ds, bases))
            out = h if out is None else tuple(a + b for a, b in zip(out, h))
        return out

    def _hessian_matrix(self, Xs, bases):
        return sum(w * obj._hessian_matrix(Xs, bases) for w, obj in self.terms)


def phi_invariance_check(obj, point, Qs) -> tuple[float, float]:
    """``(Phi(X), Phi(X Q))`` for orthogonal ``Q`` per factor."""
    Xs = _matrices(point)
    if isinstance(Qs, np.ndarray):
        Qs = (Qs,)
    rotated = tuple(X @ Q for X, Q in zip(Xs, Qs))
    return obj.evaluate(Xs).value, obj.evaluate(rotated).value


def flatten(parts: Sequence[np.ndarray]) -> np.ndarray:
    """Concatenate column-wise vecs of the components of a product tangent."""
    return np.concatenate([vec(P) for P in parts]) if parts else np.zeros(0)


def unflatten(v: np.ndarray, shapes: Sequence[tuple[int, int]]) -> tuple[np.ndarray, ...]:
    out, pos = [], 0
    for m, r in shapes:
        out.append(np.asarray(v[pos:pos + m * r]).reshape((m, r), order="F"))
        pos += m * r
    return tuple(out)


def tangent_shapes(obj, coords: str) -> list[tuple[int, int]]:
    if coords == "local":
        return [(n - r, r) for n, r in obj.dims]
    return [(n, r) for n, r in obj.dims]


# -- functional entry points ----------------------------------------------------

def value(obj, point) -> float:
    return obj.value(point)


def gradient(obj, point, coords: str = "global"):
    return obj.gradient(point, coords)


def hessian_apply(obj, point, deltas, coords: str = "global"):
    """Hessian action on a product tangent given in ``coords``."""
    pts = _as_points(point)
    if coords == "local":
        pts = [p.with_complement() for p in pts]
        bases = tuple(p.complement for p in pts)
    elif coords == "global":
        bases = (None,) * len(pts)
    else:
        raise ValueError(f"unknown coordinates {coords!r}")
    if isinstance(deltas, np.ndarray):
        deltas = (deltas,)
    return obj.hessian_apply(tuple(p.X for p in pts), tuple(deltas), bases)


def hessian_matrix(obj, point, cap: int = HESSIAN_CAP) -> np.ndarray:
    return obj.hessian_matrix(point, cap=cap)


def _single(point):
    return point if isinstance(point, GrassmannPoint) else GrassmannPoint(np.asarray(point))


def sym_value(obj: SymmetricObjective, X) -> float:
    return obj.value(_single(X))


def sym_gradient(obj: SymmetricObjective, X, coords: str = "global") -> np.ndarray:
    return obj.gradient(_single(X), coords)[0]


def sym_hessian_apply(obj: SymmetricObjective, X, D, coords: str = "global") -> np.ndarray:
    return hessian_apply(obj, _single(X), (D,), coords)[0]


def sym_hessian_matrix(obj: SymmetricObjective, X, cap: int = HESSIAN_CAP) -> np.ndarray:
    return obj.hessian_matrix(_single(X), cap=cap)
