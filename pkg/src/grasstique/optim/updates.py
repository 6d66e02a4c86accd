"""BFGS / L-BFGS algebra for the minimized function ``f = -Phi``.

All vectors here are flat: product tangents are vectorized column-wise per
component and concatenated in mode order.
"""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg

log = logging.getLogger(__name__)

CURVATURE_TOL = 1e-12
SHIFT_FACTOR = 1.1
# relative eigenvalue floor so the shifted Hessian is never numerically singular
SHIFT_FLOOR = 1e-10


def curvature_ok(s: np.ndarray, y: np.ndarray, tol: float = CURVATURE_TOL) -> bool:
    return float(s @ y) > tol * np.linalg.norm(s) * np.linalg.norm(y)


def bfgs_inverse_update(M: np.ndarray, s: np.ndarray, y: np.ndarray) -> np.ndarray:
    """``M_+ = (I - rho s y^T) M (I - rho y s^T) + rho s s^T`` written out."""
    rho = 1.0 / float(s @ y)
    My = M @ y
    out = M - rho * (np.outer(s, My) + np.outer(My, s)) + (rho * rho * float(y @ My) + rho) * np.outer(s, s)
    return 0.5 * (out + out.T)


def bfgs_direct_update(B: np.ndarray, s: np.ndarray, y: np.ndarray) -> np.ndarray:
    """``B_+ = B - B s s^T B / (s^T B s) + y y^T / (y^T s)``."""
    Bs = B @ s
    out = B - np.outer(Bs, Bs) / float(s @ Bs) + np.outer(y, y) / float(y @ s)
    return 0.5 * (out + out.T)


def shifted_negative(H: np.ndarray) -> tuple[np.ndarray, float]:
    """``mu I - H_sym`` with ``mu = 1.1 max(0, lambda_max)`` and a small floor.

    The result is positive definite; it is the Hessian of ``f = -Phi`` made
    safe for a descent step.
    """
    Hs = 0.5 * (H + H.T)
    lam = np.linalg.eigvalsh(Hs)
    mu = SHIFT_FACTOR * max(0.0, lam[-1])
    scale = max(1.0, float(np.max(np.abs(lam)))) if lam.size else 1.0
    if mu - lam[-1] < SHIFT_FLOOR * scale:
        mu = lam[-1] + SHIFT_FLOOR * scale
    return mu * np.eye(H.shape[0]) - Hs, mu


@dataclass
class DenseQNState:
    """Inverse-Hessian approximation ``M`` of ``f = -Phi``.

    ``pending_scale`` marks a scaled-identity start: the first accepted pair
    rescales ``M`` by ``s^T y / y^T y`` before it is applied.
    """

    M: np.ndarray
    coords: str
    pending_scale: bool = False
    updates: int = 0
    skipped: int = 0

    def direction(self, g: np.ndarray) -> np.ndarray:
        """Ascent direction for Phi given the (flat) gradient of Phi."""
        return self.M @ g

    def update(self, s: np.ndarray, y: np.ndarray) -> bool:
        if not curvature_ok(s, y):
            self.skipped += 1
            return False
        if self.pending_scale:
            self.M = (float(s @ y) / float(y @ y)) * self.M
            self.pending_scale = False
        self.M = bfgs_inverse_update(self.M, s, y)
        self.updates += 1
        return True


def init_inverse_hessian(obj, points, policy: str = "identity", coords: str = "local",
                         events: list | None = None) -> DenseQNState:
    """Initial inverse-Hessian state for a dense BFGS run.

    ``policy`` is ``"identity"`` (scaled identity) or ``"exact"`` (inverse of
    the shifted negative Hessian at ``points``).  In global coordinates the
    exact choice acts through the complement bases and as the identity on the
    normal directions.
    """
    dims = obj.dims
    if coords == "local":
        size = sum((n - r) * r for n, r in dims)
    elif coords == "global":
        size = sum(n * r for n, r in dims)
    else:
        raise ValueError(f"unknown coordinates {coords!r}")
    if policy in ("identity", "scaled-identity"):
        return DenseQNState(np.eye(size), coords, pending_scale=True)
    if policy not in ("exact", "exact-hessian"):
        raise ValueError(f"unknown initial Hessian policy {policy!r}")
    H = obj.hessian_matrix(points)
    A, mu = shifted_negative(H)
    try:
        c = scipy.linalg.cho_factor(A)
        Mloc = scipy.linalg.cho_solve(c, np.eye(A.shape[0]))
        Mloc = 0.5 * (Mloc + Mloc.T)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
        msg = "shifted Hessian not positive definite; falling back to scaled identity"
        log.warning(msg)
        if events is not None:
            events.append(("init_fallback", msg))
        return DenseQNState(np.eye(size), coords, pending_scale=True)
    if events is not None and mu > 0:
        events.append(("hessian_shift", f"mu={mu:.6g}"))
    if coords == "local":
        return DenseQNState(Mloc, coords)
    E = _embedding([p.with_complement() for p in points])
    M = E @ Mloc @ E.T + (np.eye(size) - E @ E.T)
    return DenseQNState(0.5 * (M + M.T), coords)


def _embedding(points) -> np.ndarray:
    """Block-diagonal map from local to global coordinates, ``I_r (x) X_perp``."""
    blocks = [np.kron(np.eye(p.r), p.complement) for p in points]
    return scipy.linalg.block_diag(*blocks)


def conjugate_blocks(M: np.ndarray, dims: Sequence[tuple[int, int]], left, right) -> np.ndarray:
    """``blockdiag(I (x) L_i) M blockdiag(I (x) R_i)`` without forming Kronecker products."""
    sizes = [n * r for n, r in dims]
    offs = np.concatenate([[0], np.cumsum(sizes)])
    out = np.empty_like(M)
    for i, (n, r) in enumerate(dims):
        rows = M[offs[i]:offs[i + 1], :].reshape(r, n, -1)
        out[offs[i]:offs[i + 1], :] = np.einsum("ab,rbN->raN", left[i], rows).reshape(n * r, -1)
    res = np.empty_like(out)
    for j, (n, r) in enumerate(dims):
        cols = out[:, offs[j]:offs[j + 1]].reshape(-1, r, n)
        res[:, offs[j]:offs[j + 1]] = np.einsum("Nra,ab->Nrb", cols, right[j]).reshape(-1, n * r)
    return res


@dataclass
class LbfgsState:
    """Ring buffer of curvature pairs for the two-loop recursion.

    ``gamma`` is ``"latest"`` (scale from the newest pair) or ``"first"``
    (scale fixed by the first stored pair, matching a dense run started from a
    scaled identity).
    """

    m: int
    gamma: str = "latest"
    pairs: deque = field(default_factory=deque)
    first_scale: float | None = None
    skipped: int = 0

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("memory m must be at least 1")
        if self.gamma not in ("latest", "first"):
            raise ValueError(f"unknown gamma policy {self.gamma!r}")
        self.pairs = deque(self.pairs, maxlen=self.m)

    def scale(self) -> float:
        if not self.pairs:
            return 1.0
        if self.gamma == "first":
            return self.first_scale
        s, y, _ = self.pairs[-1]
        return float(s @ y) / float(y @ y)

    def push(self, s: np.ndarray, y: np.ndarray) -> bool:
        if not curvature_ok(s, y):
            self.skipped += 1
            return False
        if self.first_scale is None:
            self.first_scale = float(s @ y) / float(y @ y)
        self.pairs.append((s, y, 1.0 / float(s @ y)))
        return True

    def transport(self, fn) -> None:
        """Replace every stored pair by its image under ``fn`` (a flat-vector map)."""
        self.pairs = deque(((fn(s), fn(y), rho) for s, y, rho in self.pairs), maxlen=self.m)

    def direction(self, g: np.ndarray) -> np.ndarray:
        """Two-loop recursion: the inverse-Hessian approximation applied to ``g``."""
        q = np.array(g, dtype=float)
        alphas = []
        for s, y, rho in reversed(self.pairs):
            a = rho * float(s @ q)
            q -= a * y
            alphas.append(a)
        r = self.scale() * q
        for (s, y, rho), a in zip(self.pairs, reversed(alphas)):
            b = rho * float(y @ r)
            r += (a - b) * s
        return r
