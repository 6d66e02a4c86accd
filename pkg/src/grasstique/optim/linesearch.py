"""Strong-Wolfe line search along product geodesics.

The search minimizes ``f = -Phi`` along ``t -> X(t)``.  Slopes use the
parallel-transported direction, ``phi'(t) = -<grad Phi(X(t)), T(t) Delta>``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from typing import Sequence

import numpy as np

from ..manifold import (
    GrassmannPoint,
    TransportOperator,
    inner_product_tuple,
    project_tangent,
    step_point,
    transport_tuple,
)
from ..objectives import Evaluation, grad_from_partials

# below this relative size the plain difference of two values is replaced by the
# cancellation-free difference computed from the displacement
ACCURATE_DELTA_RATIO = 1e-6
# below this the value difference is rounding noise and the trapezoid estimate
# t (f'(0) + f'(t)) / 2 from the slopes stands in for it
FLAT_RATIO = 1e-14


class NonAscentError(ValueError):
    """The search direction does not increase Phi."""


@dataclass(frozen=True)
class LineSearchParams:
    c1: float = 1e-4
    c2: float = 0.9
    initial_step: float = 1.0
    growth: float = 2.0
    max_expansions: int = 20
    max_zoom: int = 30

    def __post_init__(self):
        if not 0 < self.c1 < self.c2 < 1:
            raise ValueError(f"need 0 < c1 < c2 < 1, got c1={self.c1}, c2={self.c2}")
        if self.growth <= 1 or self.initial_step <= 0:
            raise ValueError("growth must exceed 1 and the initial step must be positive")

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class StepData:
    """Everything known about the product point reached at step ``t``."""

    t: float
    points: tuple[GrassmannPoint, ...]
    ops: tuple[TransportOperator, ...]
    direction: tuple[np.ndarray, ...]     # transported direction T(t) Delta
    evaluation: Evaluation
    grad: tuple[np.ndarray, ...]          # global Grassmann gradient of Phi
    dphi: float                           # Phi(X(t)) - Phi(X)
    slope: float                          # d/dt of f = -Phi


@dataclass
class LineSearchResult:
    step: StepData
    evals: int
    wolfe: bool


class GeodesicLine:
    """Evaluates ``f(t) - f(0)`` and ``f'(t)`` for ``f = -Phi`` along a geodesic."""

    def __init__(self, obj, points: Sequence[GrassmannPoint], direction, phi0: float):
        self.obj = obj
        self.points = tuple(points)
        # a normal component, even at round-off level, would bend the curve off
        # the manifold and bias the computed value differences
        self.direction = tuple(project_tangent(p.X, D) for p, D in zip(self.points, direction))
        self.phi0 = phi0
        self.X0 = tuple(p.X for p in self.points)
        self.evals = 0
        self.slope0: float | None = None

    def at(self, t: float) -> StepData:
        ops = transport_tuple(self.points, self.direction, t, strict=False)
        pts = tuple(step_point(p, T) for p, T in zip(self.points, ops))
        ev = self.obj.evaluate(tuple(p.X for p in pts))
        self.evals += 1
        grad = grad_from_partials(pts, ev.partials, "global")
        moved = tuple(T.apply(D) for T, D in zip(ops, self.direction))
        dphi = ev.value - self.phi0
        if abs(dphi) < ACCURATE_DELTA_RATIO * abs(self.phi0):
            dphi = self.obj.value_delta(self.X0, tuple(T.displacement() for T in ops))
        slope = -inner_product_tuple(grad, moved)
        if self.slope0 is not None and abs(dphi) <= FLAT_RATIO * abs(self.phi0):
            dphi = -0.5 * t * (self.slope0 + slope)
        return StepData(t, pts, ops, moved, ev, grad, dphi, slope)


def _cubic_min(a, fa, ga, b, fb, gb):
    """Minimizer of the cubic interpolating values and slopes at a and b, or None."""
    d1 = ga + gb - 3 * (fa - fb) / (a - b)
    disc = d1 * d1 - ga * gb
    if disc < 0:
        return None
    d2 = math.copysign(math.sqrt(disc), b - a)
    denom = gb - ga + 2 * d2
    if denom == 0:
        return None
    return b - (b - a) * (gb + d2 - d1) / denom


def wolfe_search(obj, points, direction, phi0: float, grad0, params: LineSearchParams = LineSearchParams(),
                 t_init: float | None = None) -> LineSearchResult:
    """Find a step satisfying the strong Wolfe conditions for ``f = -Phi``.

    ``direction`` must be an ascent direction for Phi at ``points`` (global
    coordinates).  Bracketing expands the step by ``params.growth``; the
    bracket is then shrunk by safeguarded cubic interpolation.  If no Wolfe
    point is found, the best point satisfying the sufficient-decrease
    condition is returned with ``wolfe=False``; if there is none a
    ``RuntimeError`` is raised.
    """
    line = GeodesicLine(obj, points, direction, phi0)
    g0 = -inner_product_tuple(grad0, line.direction)
    if not g0 < 0:
        raise NonAscentError(f"direction is not an ascent direction (slope {-g0:.3e})")
    line.slope0 = g0
    c1, c2 = params.c1, params.c2
    best: list[StepData] = []

    def trial(t: float) -> StepData:
        s = line.at(t)
        if -s.dphi <= c1 * t * g0 and s.dphi > 0 and (not best or s.dphi > best[0].dphi):
            best[:] = [s]
        return s

    def curvature(s: StepData) -> bool:
        return abs(s.slope) <= -c2 * g0

    # bracket ends are (t, f(t) - f(0), f'(t))
    def zoom(lo, hi):
        for _ in range(params.max_zoom):
            (tl, fl, gl), (th, fh, gh) = lo, hi
            width = th - tl
            if abs(width) <= 1e-14 * max(abs(th), abs(tl)):
                return None
            a, b = sorted((tl + 0.1 * width, th - 0.1 * width))
            t = _cubic_min(tl, fl, gl, th, fh, gh)
            # clamp rather than bisect: the minimizer may sit far inside the bracket
            t = 0.5 * (tl + th) if t is None or not math.isfinite(t) else min(max(t, a), b)
            s = trial(t)
            f = -s.dphi
            if f > c1 * t * g0 or f >= fl:
                hi = (t, f, s.slope)
            else:
                if curvature(s):
                    return s
                if s.slope * width >= 0:
                    hi = lo
                lo = (t, f, s.slope)
        return None

    prev = (0.0, 0.0, g0)
    t = params.initial_step if t_init is None else float(t_init)
    found = None
    for i in range(params.max_expansions + 1):
        s = trial(t)
        f = -s.dphi
        if f > c1 * t * g0 or (i > 0 and f >= prev[1]):
            found = zoom(prev, (t, f, s.slope))
            break
        if curvature(s):
            found = s
            break
        if s.slope >= 0:
            found = zoom((t, f, s.slope), prev)
            break
        prev = (t, f, s.slope)
        t *= params.growth
    if found is not None:
        return LineSearchResult(found, line.evals, True)
    if not best:
        raise RuntimeError("line search found no point with sufficient increase")
    return LineSearchResult(best[0], line.evals, False)


def forced_step(obj, points, direction, phi0: float, t: float) -> StepData:
    """Take the step ``t`` without any search."""
    return GeodesicLine(obj, points, direction, phi0).at(t)
