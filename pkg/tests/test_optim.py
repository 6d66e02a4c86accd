import csv
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from grasstique.baselines import init_point
from grasstique.manifold import GrassmannPoint, random_point
from grasstique.objectives import GeneralObjective, HessianTooLarge, SymmetricObjective, flatten
from grasstique.optim import (
    DenseQNState,
    LbfgsState,
    LineSearchParams,
    NonAscentError,
    SolverOptions,
    bfgs_direct_update,
    bfgs_global,
    bfgs_inverse_update,
    bfgs_local,
    forced_step,
    init_inverse_hessian,
    lbfgs,
    newton_grassmann,
    read_trace,
    wolfe_search,
)
from grasstique.optim.trace import COLUMNS, RunTrace
from grasstique.optim.updates import conjugate_blocks, curvature_ok
from grasstique.tensor_core import symmetrize

from conftest import planted, random_points


def _problem(seed=3, shape=(6, 6, 6), ranks=(2, 2, 2)):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal(shape)
    obj = GeneralObjective(A, ranks)
    return obj, init_point(A, ranks)


def _spd(n, rng):
    G = rng.standard_normal((n, n))
    return G @ G.T + n * np.eye(n)


# line search

def test_line_search_params_validate():
    with pytest.raises(ValueError):
        LineSearchParams(c1=0.5, c2=0.4)
    with pytest.raises(ValueError):
        LineSearchParams(growth=1.0)


def test_wolfe_conditions_hold(rng):
    obj, x0 = _problem()
    ev = obj.evaluate([p.X for p in x0])
    g = obj.gradient(x0)
    params = LineSearchParams()
    res = wolfe_search(obj, x0, g, ev.value, g, params)
    s = res.step
    g0 = -sum(np.vdot(a, a) for a in g)
    assert res.wolfe and s.t > 0
    assert -s.dphi <= params.c1 * s.t * g0
    assert abs(s.slope) <= -params.c2 * g0
    assert s.dphi > 0


def test_non_ascent_direction_rejected(rng):
    obj, x0 = _problem()
    ev = obj.evaluate([p.X for p in x0])
    g = obj.gradient(x0)
    with pytest.raises(NonAscentError):
        wolfe_search(obj, x0, tuple(-G for G in g), ev.value, g)


def test_forced_worked_step(worked_tensor, e1_point):
    obj = GeneralObjective(worked_tensor, (1, 1, 1))
    D = (np.array([[0.0], [-1.0], [0.0]]), np.array([[0.0], [0.0], [1.0]]), np.array([[0.0], [1.0], [0.0]]))
    s = forced_step(obj, (e1_point,) * 3, D, 40.5, math.pi / 4)
    assert abs(s.evaluation.value - 45.5625) < 1e-10
    assert abs(s.dphi - 5.0625) < 1e-10


def test_unit_step_accepted_near_convergence():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((10, 10, 10))
    obj = GeneralObjective(A, (3, 3, 3))
    steps = []
    bfgs_local(obj, init_point(A, (3, 3, 3)), SolverOptions(callback=lambda i: steps.append(i.step)))
    tail = steps[-10:]
    assert sum(t == 1.0 for t in tail) >= 8


def test_search_below_value_resolution_uses_slopes():
    # near the optimum the attainable increase (~1e-24) is far below the rounding of Phi (~11)
    from grasstique.cli import GenSpec, generate
    A = generate(GenSpec(seed=7, shape=(20, 20, 20), ranks=(3, 3, 3), noise=0.3))
    obj = GeneralObjective(A, (3, 3, 3))
    x0 = init_point(A, (3, 3, 3))
    ev = obj.evaluate([p.X for p in x0])
    g = obj.gradient(x0)
    gn = math.sqrt(sum(np.vdot(G, G) for G in g))
    assert gn / ev.value > 1e-13
    res = wolfe_search(obj, x0, g, ev.value, g, t_init=1.0 / gn)
    assert res.wolfe and res.step.t < 1e-6 / gn
    assert bfgs_local(obj, x0).converged


def test_zoom_reaches_maximizer_near_bracket_end():
    # a first trial 1e8 times too long must still be pulled back within the zoom budget
    obj, x0 = _problem()
    ev = obj.evaluate([p.X for p in x0])
    g = obj.gradient(x0)
    res = wolfe_search(obj, x0, g, ev.value, g, t_init=1e8)
    assert res.wolfe and res.step.dphi > 0


# update algebra

@given(st.integers(2, 6), st.integers(0, 2**32 - 1))
def test_inverse_update_secant_and_spd(n, seed):
    rng = np.random.default_rng(seed)
    M = np.linalg.inv(_spd(n, rng))
    s = rng.standard_normal(n)
    y = _spd(n, rng) @ s
    Mp = bfgs_inverse_update(M, s, y)
    assert np.allclose(Mp @ y, s, rtol=1e-9, atol=1e-12)
    assert np.allclose(Mp, Mp.T)
    np.linalg.cholesky(Mp)


@given(st.integers(2, 6), st.integers(0, 2**32 - 1))
def test_direct_and_inverse_updates_agree(n, seed):
    rng = np.random.default_rng(seed)
    B = _spd(n, rng)
    s = rng.standard_normal(n)
    y = _spd(n, rng) @ s
    Bp = bfgs_direct_update(B, s, y)
    Mp = bfgs_inverse_update(np.linalg.inv(B), s, y)
    assert np.allclose(Bp @ Mp, np.eye(n), atol=1e-8)
    assert np.allclose(Bp @ s, y)


def test_curvature_skip():
    st_ = DenseQNState(np.eye(2), "local")
    assert not st_.update(np.array([1.0, 0.0]), np.array([-1.0, 0.0]))
    assert st_.skipped == 1 and np.array_equal(st_.M, np.eye(2))
    assert not curvature_ok(np.array([1.0, 0.0]), np.array([0.0, 1.0]))


def test_scaled_identity_rescales_before_first_update():
    st_ = DenseQNState(np.eye(2), "local", pending_scale=True)
    s, y = np.array([1.0, 0.0]), np.array([4.0, 0.0])
    st_.update(s, y)
    # gamma = 1/4, and the update then fixes the s-direction exactly
    assert np.allclose(st_.M, np.diag([0.25, 0.25]))


def test_two_loop_equals_dense_inverse(rng):
    n = 6
    pairs = []
    M = np.eye(n)
    lb = LbfgsState(m=10, gamma="first")
    for k in range(5):
        s = rng.standard_normal(n)
        y = _spd(n, rng) @ s
        if k == 0:
            M = (s @ y) / (y @ y) * M
        M = bfgs_inverse_update(M, s, y)
        lb.push(s, y)
    g = rng.standard_normal(n)
    assert np.allclose(lb.direction(g), M @ g, rtol=1e-10)


def test_two_loop_empty_history_is_gradient(rng):
    g = rng.standard_normal(4)
    assert np.array_equal(LbfgsState(m=3).direction(g), g)


def test_lbfgs_evicts_oldest(rng):
    lb = LbfgsState(m=2)
    for k in range(4):
        lb.push(np.eye(3)[k % 3] + 0.1, np.eye(3)[k % 3] + 0.1)
    assert len(lb.pairs) == 2


def test_lbfgs_state_validation():
    with pytest.raises(ValueError):
        LbfgsState(m=0)
    with pytest.raises(ValueError):
        LbfgsState(m=2, gamma="median")


def test_conjugate_blocks_matches_kron(rng):
    dims = [(3, 2), (4, 1)]
    N = sum(n * r for n, r in dims)
    M = rng.standard_normal((N, N))
    L = [rng.standard_normal((n, n)) for n, _ in dims]
    R = [rng.standard_normal((n, n)) for n, _ in dims]
    from scipy.linalg import block_diag
    left = block_diag(*[np.kron(np.eye(r), A) for A, (_, r) in zip(L, dims)])
    right = block_diag(*[np.kron(np.eye(r), A) for A, (_, r) in zip(R, dims)])
    assert np.allclose(conjugate_blocks(M, dims, L, R), left @ M @ right)


def test_exact_init_is_spd_and_inverts_shifted_hessian(rng):
    obj, x0 = _problem()
    st_ = init_inverse_hessian(obj, x0, "exact", "local")
    np.linalg.cholesky(st_.M)
    H = obj.hessian_matrix(x0)
    lam = np.linalg.eigvalsh(H)
    if lam[-1] < 0:
        assert np.allclose(st_.M @ (-H), np.eye(H.shape[0]), atol=1e-8)


def test_exact_init_global_acts_through_complement(rng):
    obj, x0 = _problem()
    loc = init_inverse_hessian(obj, x0, "exact", "local")
    glo = init_inverse_hessian(obj, x0, "exact", "global")
    pts = [p.with_complement() for p in x0]
    d = rng.standard_normal(loc.M.shape[0])
    from grasstique.objectives import tangent_shapes, unflatten
    D = tuple(p.complement @ x for p, x in zip(pts, unflatten(d, tangent_shapes(obj, "local"))))
    out = unflatten(glo.M @ flatten(D), tangent_shapes(obj, "global"))
    back = flatten(tuple(p.complement.T @ x for p, x in zip(pts, out)))
    assert np.allclose(back, loc.M @ d, atol=1e-10)


def test_unknown_init_policy(rng):
    obj, x0 = _problem()
    with pytest.raises(ValueError):
        init_inverse_hessian(obj, x0, "diagonal")


# drivers

def test_bfgs_local_converges_to_negative_definite_maximizer():
    rng = np.random.default_rng(5)
    A = rng.standard_normal((5, 5, 5))
    obj = GeneralObjective(A, (2, 2, 2))
    res = bfgs_local(obj, init_point(A, (2, 2, 2)), SolverOptions(tol=1e-12))
    assert res.converged and res.relgrad <= 1e-12
    lam = np.linalg.eigvalsh(obj.hessian_matrix(res.points))
    assert lam.max() < 0


def test_exact_rank_recovery():
    rng = np.random.default_rng(8)
    A, _ = planted((8, 8, 8), (2, 2, 2), rng)
    obj = GeneralObjective(A, (2, 2, 2))
    start = tuple(GrassmannPoint(random_point(8, 2, rng)) for _ in range(3))
    res = bfgs_local(obj, start)
    fit = A
    for i, X in enumerate(res.X):
        fit = np.moveaxis(np.tensordot(X @ X.T, fit, axes=(1, i)), 0, i)
    assert np.linalg.norm(A - fit) <= 1e-8 * np.linalg.norm(A)


def test_local_and_global_bfgs_agree():
    obj, x0 = _problem()
    a = bfgs_local(obj, x0, SolverOptions(max_iters=25))
    b = bfgs_global(obj, x0, SolverOptions(max_iters=25))
    n = min(len(a.trace.phi), len(b.trace.phi))
    assert n > 10
    assert np.allclose(a.trace.phi[:n], b.trace.phi[:n], rtol=0, atol=1e-8)


def test_global_state_maps_tangents_to_tangents(rng):
    obj, x0 = _problem()
    worst = []

    def cb(info):
        M = info.state.M
        v = flatten(tuple(p.X @ np.zeros((p.r, p.r)) + (np.eye(p.n) - p.X @ p.X.T) @ rng.standard_normal((p.n, p.r))
                          for p in info.points))
        out = M @ v
        pos = 0
        for p in info.points:
            block = out[pos:pos + p.n * p.r].reshape((p.n, p.r), order="F")
            worst.append(np.abs(p.X.T @ block).max())
            pos += p.n * p.r

    bfgs_global(obj, x0, SolverOptions(max_iters=15, callback=cb))
    assert max(worst) <= 1e-9


def test_lbfgs_directions_stay_tangent():
    obj, x0 = _problem()
    prev = [x0]
    worst = []

    def cb(info):
        worst.append(max(np.abs(p.X.T @ D).max() for p, D in zip(prev[0], info.direction)))
        prev[0] = info.points

    res = lbfgs(obj, x0, SolverOptions(callback=cb, m=5))
    assert res.converged
    assert max(worst) <= 1e-9


def test_lbfgs_transport_preserves_pair_products():
    obj, x0 = _problem()
    before = []
    worst = []

    def cb(info):
        pairs = list(info.state.pairs)
        if before:
            # pairs stored at the previous iterate were transported; compare s_i^T y_j
            old = before[-1]
            new = [(s, y) for s, y, _ in pairs][-len(old) - 1:-1] if info.updated else [(s, y) for s, y, _ in pairs][-len(old):]
            for (s0, y0), (s1, y1) in zip(old, new):
                worst.append(abs(s0 @ y0 - s1 @ y1) / max(1e-300, abs(s0 @ y0)))
        before.append([(s.copy(), y.copy()) for s, y, _ in pairs])

    lbfgs(obj, x0, SolverOptions(callback=cb, m=30, max_iters=15))
    assert worst and max(worst) <= 1e-10


def test_newton_converges_quadratically():
    obj, x0 = _problem(seed=4)
    res = newton_grassmann(obj, x0)
    assert res.converged
    g = [r.relgrad * abs(r.phi) for r in res.trace.rows]
    ratios = [g[k + 1] / g[k] ** 2 for k in range(len(g) - 1) if g[k] < 1e-2 and g[k + 1] > 1e-12]
    assert all(r < 1e3 for r in ratios)
    ref = bfgs_local(obj, x0)
    assert abs(res.phi - ref.phi) <= 1e-10 * abs(ref.phi)


def test_newton_step_vanishes_at_optimum():
    obj, x0 = _problem(seed=4)
    res = newton_grassmann(obj, x0)
    again = newton_grassmann(obj, res.points, SolverOptions(tol=1e-13))
    assert again.iterations <= 1


def test_newton_refuses_large_problems():
    rng = np.random.default_rng(0)
    obj = GeneralObjective(rng.standard_normal((400, 400, 2)), (20, 20, 1))
    start = tuple(GrassmannPoint(random_point(n, r, rng)) for n, r in [(400, 20), (400, 20), (2, 1)])
    with pytest.raises(HessianTooLarge, match="bfgs"):
        newton_grassmann(obj, start)


def test_exact_init_near_optimum_takes_unit_step():
    obj, x0 = _problem()
    near = bfgs_local(obj, x0, SolverOptions(tol=1e-6))
    steps = []
    bfgs_local(obj, near.points, SolverOptions(init="exact", callback=lambda i: steps.append(i.step)))
    assert steps[0] == 1.0


def test_monotone_phi_and_trace_consistency():
    obj, x0 = _problem()
    opts = SolverOptions()
    for solver in (bfgs_local, bfgs_global, lbfgs, newton_grassmann):
        res = solver(obj, x0, opts)
        phi = res.trace.phi
        assert all(b >= a - 1e-13 * abs(a) for a, b in zip(phi, phi[1:]))
        last = res.trace.rows[-1]
        assert last.relgrad <= opts.tol or last.iter == opts.max_iters


def test_symmetric_problem_solvers():
    rng = np.random.default_rng(2)
    S = symmetrize(rng.standard_normal((8, 8, 8)))
    obj = SymmetricObjective(S, 3)
    x0 = init_point(S.data, 3, symmetric=True)
    a = bfgs_local(obj, x0, SolverOptions(init="exact"))
    b = lbfgs(obj, x0)
    assert a.converged and b.converged


def test_rotated_start_gives_same_values():
    obj, x0 = _problem()
    rng = np.random.default_rng(11)
    Qs = [np.linalg.qr(rng.standard_normal((p.r, p.r)))[0] for p in x0]
    rotated = tuple(GrassmannPoint(p.X @ Q) for p, Q in zip(x0, Qs))
    a = bfgs_global(obj, x0, SolverOptions(max_iters=20))
    b = bfgs_global(obj, rotated, SolverOptions(max_iters=20))
    n = min(len(a.trace.phi), len(b.trace.phi))
    assert np.allclose(a.trace.phi[:n], b.trace.phi[:n], rtol=0, atol=1e-6)


def test_seeded_runs_are_bitwise_reproducible():
    runs = []
    for _ in range(2):
        obj, x0 = _problem()
        runs.append(lbfgs(obj, x0).trace.phi)
    assert runs[0] == runs[1]


def test_trace_streams_csv(tmp_path):
    obj, x0 = _problem()
    path = tmp_path / "run.csv"
    res = bfgs_local(obj, x0, SolverOptions(trace_path=str(path)))
    with open(path) as fh:
        assert next(csv.reader(fh)) == list(COLUMNS)
    rows = read_trace(path)
    assert len(rows) == len(res.trace.rows)
    assert rows[-1].relgrad == res.relgrad
    meta = (tmp_path / "run.csv.meta.json").read_text()
    assert '"c1": 0.0001' in meta


def test_trace_first_below():
    tr = RunTrace()
    for k, g in enumerate([1e-1, 1e-5, 1e-11]):
        tr.record(k, 1.0, g, 1.0, k)
    assert tr.first_below(1e-10) == 2 and tr.first_below(1e-20) is None
