import sys

import numpy as np
import pytest
from hypothesis import settings

from grasstique.manifold import GrassmannPoint, random_point

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def worked_tensor():
    """The 3x3x3 integer tensor of the worked gradient example, A[:, :, k] = slice k."""
    slices = [
        [[9, -3, 8], [2, 7, 0], [7, 0, -1]],
        [[2, 7, 0], [-7, 5, -3], [0, -3, 1]],
        [[3, 0, -2], [0, 4, -1], [0, -2, 1]],
    ]
    return np.stack([np.array(s, dtype=float) for s in slices], axis=2)


@pytest.fixture
def e1_point():
    X = np.array([[1.0], [0.0], [0.0]])
    perp = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    return GrassmannPoint(X, perp)


def random_points(dims, rng, complement=True):
    pts = tuple(GrassmannPoint(random_point(n, r, rng)) for n, r in dims)
    return tuple(p.with_complement() for p in pts) if complement else pts


def random_tangents(points, rng):
    return tuple(p.complement @ rng.standard_normal((p.n - p.r, p.r)) for p in points)


def planted(shape, ranks, rng):
    """``(X_1, ..., X_k) . C`` with orthonormal X_i; returns the tensor and the factors."""
    factors = [random_point(n, r, rng) for n, r in zip(shape, ranks)]
    T = rng.standard_normal(ranks)
    for i, X in enumerate(factors):
        T = np.moveaxis(np.tensordot(X, T, axes=(1, i)), 0, i)
    return T, factors


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n, (ok, detail) in sorted(mod.RESULTS.items()):
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
