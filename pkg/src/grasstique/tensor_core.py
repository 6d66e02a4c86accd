"""Dense tensors, multilinear products and contracted products.

Tensors are plain ``numpy.ndarray`` objects in C (row-major) order.  Modes are
numbered from 0 throughout the Python API.

Two flattening conventions coexist and are never mixed implicitly:

* :func:`matricize` linearizes multi-indices row-major over the given mode
  order (last listed mode varies fastest).
* :func:`vec` stacks the columns of a matrix (Fortran order), which is the
  convention used for tangent vectors and Hessian matrices.
"""
from __future__ import annotations

import itertools
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

DEFAULT_TOL = 1e-12


class ShapeError(ValueError):
    """Raised when tensor or matrix dimensions do not conform."""


def as_tensor(data, shape=None) -> np.ndarray:
    """Return ``data`` as a float64 C-ordered tensor, optionally reshaped."""
    arr = np.ascontiguousarray(data, dtype=np.float64)
    if shape is not None:
        shape = tuple(int(n) for n in shape)
        if any(n < 1 for n in shape):
            raise ShapeError(f"extents must be positive, got {shape}")
        if arr.size != math.prod(shape):
            raise ShapeError(f"{arr.size} values do not fill shape {shape}")
        arr = arr.reshape(shape)
    if arr.ndim < 1:
        raise ShapeError("tensor order must be at least 1")
    return arr


def vec(M: np.ndarray) -> np.ndarray:
    """Column-wise vectorization of a matrix."""
    return np.asarray(M).reshape(-1, order="F")


def unvec(v: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    return np.asarray(v).reshape(shape, order="F")


def mode_dot(T: np.ndarray, M: np.ndarray, mode: int) -> np.ndarray:
    """Multiply mode ``mode`` of ``T`` by the matrix ``M`` (rows replace extent)."""
    if M.shape[1] != T.shape[mode]:
        raise ShapeError(
            f"mode {mode}: matrix has {M.shape[1]} columns but tensor extent is {T.shape[mode]}"
        )
    return np.moveaxis(np.tensordot(M, T, axes=(1, mode)), 0, mode)


def multilinear_multiply(A: np.ndarray, factors: Iterable[tuple[np.ndarray, int]]) -> np.ndarray:
    """Compute ``(M_1, ..., M_k) . A`` for the given ``(matrix, mode)`` pairs.

    Each mode listed is replaced by the row count of its matrix; unlisted modes
    are left alone.
    """
    out = np.asarray(A, dtype=float)
    seen = set()
    for M, mode in factors:
        if mode in seen:
            raise ShapeError(f"mode {mode} given twice")
        if not 0 <= mode < out.ndim:
            raise ShapeError(f"mode {mode} out of range for order {out.ndim}")
        seen.add(mode)
        out = mode_dot(out, np.asarray(M, dtype=float), mode)
    return out


def project_modes(A: np.ndarray, mats: Sequence[np.ndarray | None]) -> np.ndarray:
    """``A . (X_1, ..., X_k)``, i.e. mode i contracted with the rows of ``X_i``.

    ``None`` entries leave that mode untouched.
    """
    if len(mats) != A.ndim:
        raise ShapeError(f"need {A.ndim} factors, got {len(mats)}")
    # contract the mode that shrinks the tensor most first
    order = sorted(
        (i for i, M in enumerate(mats) if M is not None),
        key=lambda i: mats[i].shape[1] / mats[i].shape[0],
    )
    out = A
    for i in order:
        out = mode_dot(out, mats[i].T, i)
    return out


def leave_one_out(A: np.ndarray, mats: Sequence[np.ndarray]) -> list[np.ndarray]:
    """For every mode i, ``A`` projected on all modes except i.

    Uses recursive halving so that the work for order k is O(log k) full
    tensor passes instead of O(k).
    """
    k = A.ndim
    out: list[np.ndarray | None] = [None] * k

    def rec(T, modes):
        if len(modes) == 1:
            out[modes[0]] = T
            return
        half = len(modes) // 2
        left, right = modes[:half], modes[half:]
        TL = T
        for j in sorted(right, key=lambda j: mats[j].shape[1] / mats[j].shape[0]):
            TL = mode_dot(TL, mats[j].T, j)
        rec(TL, left)
        TR = T
        for j in sorted(left, key=lambda j: mats[j].shape[1] / mats[j].shape[0]):
            TR = mode_dot(TR, mats[j].T, j)
        rec(TR, right)

    rec(A, list(range(k)))
    return out  # type: ignore[return-value]


@dataclass(frozen=True)
class ContractionSpec:
    """Which modes of two tensors are summed over.

    Either explicit ``(mode of A, mode of B)`` pairs, or the complement form
    ``excluding`` where every mode except the listed ones is contracted with
    the identically numbered mode of B.
    """

    pairs: tuple[tuple[int, int], ...] = ()
    excluding: tuple[int, ...] | None = None

    @classmethod
    def over(cls, a_modes: Sequence[int], b_modes: Sequence[int] | None = None):
        b_modes = a_modes if b_modes is None else b_modes
        if len(a_modes) != len(b_modes):
            raise ShapeError("contraction mode lists differ in length")
        return cls(pairs=tuple(zip(map(int, a_modes), map(int, b_modes))))

    @classmethod
    def all_but(cls, *modes: int):
        return cls(excluding=tuple(int(m) for m in modes))

    def resolve(self, a_shape, b_shape) -> tuple[list[int], list[int]]:
        if self.excluding is not None:
            if len(a_shape) != len(b_shape):
                raise ShapeError("complement-form contraction needs equal orders")
            a_modes = [m for m in range(len(a_shape)) if m not in self.excluding]
            b_modes = list(a_modes)
        else:
            a_modes = [p[0] for p in self.pairs]
            b_modes = [p[1] for p in self.pairs]
        for side, modes, shape in (("A", a_modes, a_shape), ("B", b_modes, b_shape)):
            if len(set(modes)) != len(modes):
                raise ShapeError(f"mode repeated on side {side}: {modes}")
            if any(not 0 <= m < len(shape) for m in modes):
                raise ShapeError(f"mode out of range on side {side}: {modes}")
        for a, b in zip(a_modes, b_modes):
            if a_shape[a] != b_shape[b]:
                raise ShapeError(
                    f"cannot contract mode {a} (extent {a_shape[a]}) with mode {b} (extent {b_shape[b]})"
                )
        return a_modes, b_modes


def contract(A: np.ndarray, B: np.ndarray, spec: ContractionSpec) -> np.ndarray:
    """Contracted product; free modes of A (in order) then free modes of B."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    a_modes, b_modes = spec.resolve(A.shape, B.shape)
    return np.tensordot(A, B, axes=(a_modes, b_modes))


def _check_split(ndim, row_modes, col_modes):
    modes = list(row_modes) + list(col_modes)
    if sorted(modes) != list(range(ndim)):
        raise ShapeError(f"row/col modes {row_modes}/{col_modes} are not a permutation of {ndim} modes")


def matricize(A: np.ndarray, row_modes: Sequence[int], col_modes: Sequence[int]) -> np.ndarray:
    A = np.asarray(A)
    _check_split(A.ndim, row_modes, col_modes)
    nrows = math.prod(A.shape[m] for m in row_modes)
    return np.transpose(A, list(row_modes) + list(col_modes)).reshape(nrows, -1)


def tensorize(M: np.ndarray, shape: Sequence[int], row_modes: Sequence[int], col_modes: Sequence[int]) -> np.ndarray:
    """Inverse of :func:`matricize`."""
    shape = tuple(shape)
    _check_split(len(shape), row_modes, col_modes)
    perm = list(row_modes) + list(col_modes)
    T = np.asarray(M).reshape([shape[m] for m in perm])
    return np.transpose(T, np.argsort(perm))


def unfold(A: np.ndarray, mode: int) -> np.ndarray:
    """Mode-``mode`` unfolding, an ``n_mode x prod(others)`` matrix."""
    rest = [m for m in range(A.ndim) if m != mode]
    return matricize(A, [mode], rest)


def multilinear_rank(A: np.ndarray, tol: float = DEFAULT_TOL) -> tuple[int, ...]:
    if not 0 < tol < 1:
        raise ValueError("tol must lie in (0, 1)")
    ranks = []
    for mode in range(A.ndim):
        s = np.linalg.svd(unfold(A, mode), compute_uv=False)
        if s.size == 0 or s[0] == 0:
            ranks.append(0)
        else:
            ranks.append(int(np.sum(s > tol * s[0])))
    return tuple(ranks)


def _require_cubical(A):
    if len(set(A.shape)) != 1:
        raise ShapeError(f"symmetric operations need equal extents, got {A.shape}")


def is_symmetric(A: np.ndarray, tol: float = DEFAULT_TOL) -> bool:
    """True if ``A`` is invariant under index permutations to within ``tol``.

    Checking the adjacent transpositions suffices since they generate the
    symmetric group.
    """
    A = np.asarray(A)
    _require_cubical(A)
    scale = max(1.0, float(np.max(np.abs(A)))) if A.size else 1.0
    for i in range(A.ndim - 1):
        if np.max(np.abs(np.swapaxes(A, i, i + 1) - A)) > tol * scale:
            return False
    return True


def symmetrize(A: np.ndarray) -> "SymmetricTensor":
    """Average of ``A`` over all k! index permutations."""
    A = np.asarray(A, dtype=float)
    _require_cubical(A)
    acc = np.zeros_like(A)
    perms = list(itertools.permutations(range(A.ndim)))
    for p in perms:
        acc += np.transpose(A, p)
    return SymmetricTensor(acc / len(perms))


@dataclass(frozen=True)
class SymmetricTensor:
    data: np.ndarray

    def __post_init__(self):
        arr = as_tensor(self.data)
        if not is_symmetric(arr):
            raise ValueError("tensor is not symmetric")
        object.__setattr__(self, "data", arr)

    @property
    def order(self) -> int:
        return self.data.ndim

    @property
    def n(self) -> int:
        return self.data.shape[0]


# -- file formats ------------------------------------------------------------

_MAGIC = b"TNSB"


def write_tensor(path, A: np.ndarray, binary: bool = False) -> None:
    A = as_tensor(A)
    path = Path(path)
    if binary:
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<I", A.ndim))
            fh.write(struct.pack(f"<{A.ndim}Q", *A.shape))
            fh.write(A.astype("<f8").tobytes(order="C"))
        return
    with open(path, "w") as fh:
        fh.write("tns %d %s\n" % (A.ndim, " ".join(str(n) for n in A.shape)))
        flat = A.reshape(-1)
        for start in range(0, flat.size, 8):
            fh.write(" ".join(repr(float(x)) for x in flat[start:start + 8]))
            fh.write("\n")


def read_tensor(path) -> np.ndarray:
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(4)
        if head == _MAGIC:
            (k,) = struct.unpack("<I", fh.read(4))
            shape = struct.unpack(f"<{k}Q", fh.read(8 * k))
            payload = np.frombuffer(fh.read(), dtype="<f8")
            return as_tensor(payload.astype(np.float64), shape)
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) < 2 or header[0] != "tns":
            raise ValueError(f"{path}: not a tensor file (missing 'tns' header)")
        k = int(header[1])
        shape = tuple(int(n) for n in header[2:2 + k])
        if len(shape) != k:
            raise ValueError(f"{path}: header declares order {k} but lists {len(shape)} extents")
        values = np.array(fh.read().split(), dtype=np.float64)
    return as_tensor(values, shape)
