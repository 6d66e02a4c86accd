import string

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from grasstique.tensor_core import (
    ContractionSpec,
    ShapeError,
    SymmetricTensor,
    as_tensor,
    contract,
    is_symmetric,
    leave_one_out,
    matricize,
    mode_dot,
    multilinear_multiply,
    multilinear_rank,
    project_modes,
    read_tensor,
    symmetrize,
    tensorize,
    unfold,
    unvec,
    vec,
    write_tensor,
)

from conftest import planted

small_shapes = st.lists(st.integers(1, 4), min_size=1, max_size=4).map(tuple)
finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def _einsum_project(A, mats):
    """Independent oracle: contract mode i with X_i via one einsum."""
    letters = string.ascii_lowercase
    src = letters[:A.ndim]
    out = string.ascii_uppercase[:A.ndim]
    ops = [A]
    terms = [src]
    for i, X in enumerate(mats):
        ops.append(X)
        terms.append(src[i] + out[i])
    return np.einsum(",".join(terms) + "->" + out, *ops)


def test_as_tensor_reshapes_and_validates():
    T = as_tensor(range(24), (2, 3, 4))
    assert T.shape == (2, 3, 4) and T.dtype == np.float64
    with pytest.raises(ShapeError):
        as_tensor(range(5), (2, 3))
    with pytest.raises(ShapeError):
        as_tensor(range(6), (0, 6))


def test_vec_is_columnwise():
    M = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert vec(M).tolist() == [1.0, 3.0, 2.0, 4.0]
    assert np.array_equal(unvec(vec(M), (2, 2)), M)


def test_mode_dot_matches_einsum(rng):
    A = rng.standard_normal((3, 4, 5))
    M = rng.standard_normal((2, 4))
    assert np.allclose(mode_dot(A, M, 1), np.einsum("ijk,aj->iak", A, M))


def test_mode_dot_names_the_mode_on_mismatch(rng):
    with pytest.raises(ShapeError, match="mode 2"):
        mode_dot(rng.standard_normal((3, 4, 5)), np.eye(3), 2)


def test_multilinear_multiply_rejects_repeated_mode(rng):
    A = rng.standard_normal((3, 3))
    with pytest.raises(ShapeError):
        multilinear_multiply(A, [(np.eye(3), 0), (np.eye(3), 0)])


def test_project_modes_matches_einsum(rng):
    A = rng.standard_normal((4, 5, 6, 3))
    mats = [rng.standard_normal((n, 2)) for n in A.shape]
    assert np.allclose(project_modes(A, mats), _einsum_project(A, mats))


def test_project_modes_skips_none(rng):
    A = rng.standard_normal((4, 5, 6))
    X = rng.standard_normal((5, 2))
    assert np.allclose(project_modes(A, [None, X, None]), np.einsum("ijk,ja->iak", A, X))


@pytest.mark.parametrize("order", [2, 3, 4, 5])
def test_leave_one_out_matches_naive(order, rng):
    shape = tuple(range(3, 3 + order))
    A = rng.standard_normal(shape)
    mats = [rng.standard_normal((n, 2)) for n in shape]
    W = leave_one_out(A, mats)
    for i in range(order):
        naive = project_modes(A, [None if j == i else mats[j] for j in range(order)])
        assert np.allclose(W[i], naive)


def test_contract_pairs_and_complement_form(rng):
    A = rng.standard_normal((3, 4, 5))
    B = rng.standard_normal((3, 6, 5))
    C = contract(A, B, ContractionSpec.over([0, 2]))
    assert np.allclose(C, np.einsum("ijk,iak->ja", A, B))
    B2 = rng.standard_normal((3, 4, 5))
    D = contract(A, B2, ContractionSpec.all_but(1))
    assert np.allclose(D, np.einsum("ijk,iak->ja", A, B2))


def test_contract_extent_mismatch_is_reported(rng):
    with pytest.raises(ShapeError, match="extent"):
        contract(rng.standard_normal((3, 4)), rng.standard_normal((5, 4)), ContractionSpec.over([0]))


def test_contract_repeated_mode_rejected(rng):
    with pytest.raises(ShapeError):
        ContractionSpec(pairs=((0, 0), (0, 1))).resolve((3, 3), (3, 3))


@given(arrays(np.float64, small_shapes, elements=finite), st.randoms())
def test_matricize_tensorize_roundtrip(A, rnd):
    modes = list(range(A.ndim))
    rnd.shuffle(modes)
    cut = rnd.randint(0, A.ndim)
    rows, cols = modes[:cut], modes[cut:]
    M = matricize(A, rows, cols)
    assert M.shape[0] * M.shape[1] == A.size
    assert np.array_equal(tensorize(M, A.shape, rows, cols), A)


def test_unfold_rows_are_mode_fibres(rng):
    A = rng.standard_normal((2, 3, 4))
    U = unfold(A, 1)
    assert U.shape == (3, 8)
    assert np.allclose(U[2], A[:, 2, :].ravel())


def test_multilinear_rank_of_planted_tensor(rng):
    A, _ = planted((6, 7, 8), (2, 3, 4), rng)
    assert multilinear_rank(A) == (2, 3, 4)


def test_symmetrize_produces_symmetric(rng):
    S = symmetrize(rng.standard_normal((4, 4, 4)))
    assert isinstance(S, SymmetricTensor)
    assert is_symmetric(S.data)
    assert np.allclose(S.data, np.transpose(S.data, (2, 0, 1)))


def test_symmetric_tensor_rejects_asymmetric(rng):
    with pytest.raises(ValueError):
        SymmetricTensor(rng.standard_normal((3, 3, 3)))


def test_is_symmetric_needs_cubical(rng):
    with pytest.raises(ShapeError):
        is_symmetric(rng.standard_normal((3, 4)))


@given(st.integers(2, 4), st.integers(2, 4), st.integers(0, 2**32 - 1))
def test_symmetric_unfoldings_coincide(order, n, seed):
    S = symmetrize(np.random.default_rng(seed).standard_normal((n,) * order)).data
    first = unfold(S, 0)
    for i in range(1, order):
        assert np.allclose(unfold(S, i), first, atol=1e-12)


@pytest.mark.parametrize("binary", [False, True])
def test_tensor_file_roundtrip(tmp_path, rng, binary):
    A = rng.standard_normal((3, 4, 2))
    path = tmp_path / "a.tns"
    write_tensor(path, A, binary=binary)
    assert np.array_equal(read_tensor(path), A)


def test_read_tensor_rejects_garbage(tmp_path):
    path = tmp_path / "bad.tns"
    path.write_text("hello 3\n1 2 3\n")
    with pytest.raises(ValueError, match="header"):
        read_tensor(path)


def test_read_tensor_rejects_short_payload(tmp_path):
    path = tmp_path / "short.tns"
    path.write_text("tns 2 2 2\n1 2 3\n")
    with pytest.raises(ShapeError):
        read_tensor(path)
