"""Grassmann geometry on orthonormal matrix representatives.

A point is an ``n x r`` matrix ``X`` with orthonormal columns, optionally
paired with a complement ``X_perp`` so that ``[X X_perp]`` is orthogonal.
Tangents at ``X`` are ``n x r`` matrices with ``X.T @ D == 0`` (global
coordinates) or ``(n - r) x r`` matrices relative to ``X_perp`` (local
coordinates).
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

ORTHO_TOL = 1e-10
TANGENT_TOL = 1e-8


class ValidationError(ValueError):
    pass


def _ortho_defect(Q: np.ndarray) -> float:
    if Q.shape[1] == 0:
        return 0.0
    return float(np.max(np.abs(Q.T @ Q - np.eye(Q.shape[1]))))


def _sign_fixed_qr(M: np.ndarray) -> np.ndarray:
    Q, R = np.linalg.qr(M)
    d = np.sign(np.diag(R))
    d[d == 0] = 1.0
    return Q * d


def polish(Q: np.ndarray) -> np.ndarray:
    """Restore orthonormal columns without changing their span.

    One Newton-Schulz step for nearly orthonormal input (squares the defect),
    QR otherwise.  Keeping iterates orthonormal to working precision matters:
    a defect d perturbs directional derivatives of Phi by about d * Phi.
    """
    if Q.shape[1] == 0:
        return Q
    G = Q.T @ Q
    if np.max(np.abs(G - np.eye(G.shape[0]))) > 1e-3:
        return _sign_fixed_qr(Q)
    return Q @ (1.5 * np.eye(G.shape[0]) - 0.5 * G)


@dataclass(frozen=True)
class GrassmannPoint:
    X: np.ndarray
    complement: np.ndarray | None = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim != 2 or X.shape[1] > X.shape[0]:
            raise ValidationError(f"point must be a tall n x r matrix, got {X.shape}")
        if _ortho_defect(X) > ORTHO_TOL:
            raise ValidationError("columns of X are not orthonormal")
        object.__setattr__(self, "X", X)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def r(self) -> int:
        return self.X.shape[1]

    def with_complement(self) -> "GrassmannPoint":
        if self.complement is not None:
            return self
        return replace(self, complement=complement(self.X))

    def check_complement(self, tol: float = ORTHO_TOL) -> None:
        Xp = self.complement
        if Xp is None:
            raise ValidationError("point has no complement basis")
        if Xp.shape != (self.n, self.n - self.r):
            raise ValidationError(f"complement has shape {Xp.shape}, expected {(self.n, self.n - self.r)}")
        if _ortho_defect(Xp) > tol or (Xp.size and np.max(np.abs(self.X.T @ Xp)) > tol):
            raise ValidationError("[X X_perp] is not orthogonal")


def random_point(n: int, r: int, rng: np.random.Generator) -> np.ndarray:
    return _sign_fixed_qr(rng.standard_normal((n, r)))


def complement(X: np.ndarray) -> np.ndarray:
    """An orthonormal basis of the orthogonal complement of ``span(X)``."""
    X = np.asarray(X, dtype=float)
    if _ortho_defect(X) > ORTHO_TOL:
        raise ValidationError("columns of X are not orthonormal")
    n, r = X.shape
    if n == r:
        return np.zeros((n, 0))
    Q, _ = np.linalg.qr(X, mode="complete")
    return Q[:, r:]


def project_tangent(X: np.ndarray, W: np.ndarray) -> np.ndarray:
    """Global tangent ``(I - X X^T) W``."""
    return W - X @ (X.T @ W)


def to_local(X_perp: np.ndarray, Delta: np.ndarray) -> np.ndarray:
    return X_perp.T @ Delta


def to_global(X_perp: np.ndarray, D: np.ndarray) -> np.ndarray:
    return X_perp @ D


def check_tangent(X: np.ndarray, W: np.ndarray, tol: float = TANGENT_TOL) -> None:
    scale = max(1.0, float(np.max(np.abs(W)))) if W.size else 1.0
    if W.size and np.max(np.abs(X.T @ W)) > tol * scale:
        raise ValidationError("matrix is not tangent at X (X^T W != 0)")


@dataclass(frozen=True)
class TransportOperator:
    """Geodesic from ``X`` along ``Delta = U diag(sigma) V^T`` evaluated at ``t``.

    Besides the end point it carries parallel transport of tangents along the
    same geodesic.
    """

    X: np.ndarray
    U: np.ndarray
    sigma: np.ndarray
    V: np.ndarray
    t: float
    strict: bool = True

    @classmethod
    def build(cls, X, Delta, t, strict: bool = True) -> "TransportOperator":
        X = np.asarray(X, dtype=float)
        Delta = np.asarray(Delta, dtype=float)
        if strict:
            check_tangent(X, Delta)
        U, sigma, Vt = np.linalg.svd(Delta, full_matrices=False)
        return cls(X, U, sigma, Vt.T, float(t), strict)

    @property
    def _angles(self):
        return self.sigma * self.t

    def displacement(self) -> np.ndarray:
        """``X(t) - X`` computed without cancellation."""
        th = self._angles
        XV = self.X @ self.V
        # cos(th) - 1 = -2 sin^2(th/2)
        return (XV * (-2.0 * np.sin(th / 2) ** 2) + self.U * np.sin(th)) @ self.V.T

    def point(self) -> np.ndarray:
        return polish(self.X + self.displacement())

    def apply(self, W: np.ndarray) -> np.ndarray:
        """Parallel transport of the tangent(s) ``W`` (any column count)."""
        W = np.asarray(W, dtype=float)
        if self.strict:
            check_tangent(self.X, W)
        else:
            W = project_tangent(self.X, W)
        th = self._angles
        UtW = self.U.T @ W
        return (
            W
            - (self.X @ self.V) @ (np.sin(th)[:, None] * UtW)
            + self.U @ ((-2.0 * np.sin(th / 2) ** 2)[:, None] * UtW)
        )

    def matrix(self) -> np.ndarray:
        """The explicit ``n x n`` transport matrix."""
        n = self.X.shape[0]
        th = self._angles
        return (
            np.eye(n)
            - (self.X @ self.V) @ (np.sin(th)[:, None] * self.U.T)
            + self.U @ ((-2.0 * np.sin(th / 2) ** 2)[:, None] * self.U.T)
        )

    def reverse(self) -> "TransportOperator":
        """Transport from ``X(t)`` back to ``X`` along the same geodesic."""
        return TransportOperator.build(self.point(), -self.apply(self.U * self.sigma @ self.V.T),
                                       self.t, strict=False)


def geodesic(X, Delta, t: float) -> np.ndarray:
    return TransportOperator.build(X, Delta, t).point()


def transport_operator(X, Delta, t: float, strict: bool = True) -> TransportOperator:
    return TransportOperator.build(X, Delta, t, strict=strict)


def transport_basis(X_perp: np.ndarray, T: TransportOperator) -> np.ndarray:
    return T.apply(X_perp)


def fix_complement(X: np.ndarray, X_perp: np.ndarray) -> np.ndarray:
    """Remove drift of a transported complement against ``X``."""
    if X_perp.shape[1] == 0:
        return X_perp
    return polish(X_perp - X @ (X.T @ X_perp))


def step_point(p: GrassmannPoint, T: TransportOperator) -> GrassmannPoint:
    """Move ``p`` along ``T`` carrying the complement basis with it."""
    X_t = T.point()
    if p.complement is None:
        return GrassmannPoint(X_t)
    return GrassmannPoint(X_t, fix_complement(X_t, T.apply(p.complement)))


# -- products of Grassmannians -------------------------------------------------

def _same_arity(a, b):
    if len(a) != len(b):
        raise ValidationError(f"arity mismatch: {len(a)} vs {len(b)}")


def inner(D1: np.ndarray, D2: np.ndarray) -> float:
    """Canonical metric ``tr(D1^T D2)``."""
    return float(np.vdot(D1, D2))


def inner_product_tuple(D1: Sequence[np.ndarray], D2: Sequence[np.ndarray]) -> float:
    _same_arity(D1, D2)
    return sum(inner(a, b) for a, b in zip(D1, D2))


def transport_tuple(points: Sequence[GrassmannPoint], deltas, t: float, strict: bool = True):
    _same_arity(points, deltas)
    return tuple(transport_operator(p.X, d, t, strict=strict) for p, d in zip(points, deltas))


def geodesic_tuple(points: Sequence[GrassmannPoint], deltas, t: float) -> tuple[GrassmannPoint, ...]:
    ops = transport_tuple(points, deltas, t)
    return tuple(step_point(p, T) for p, T in zip(points, ops))
