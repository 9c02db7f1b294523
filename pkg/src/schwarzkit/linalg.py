"""Sparse and dense linear algebra kernels shared by the whole package.

The sparse type is a plain CSR triple so that smoother kernels can run
directly on the arrays; scipy backs the bulk operations (products,
factorizations) behind that surface.  Vectors and dense matrices are bare
numpy arrays throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.io
import scipy.linalg
import scipy.sparse

__all__ = [
    "SparseMatrix",
    "InnerProduct",
    "NonlinearOperatorError",
    "SmokeResult",
    "spmv",
    "inner",
    "a_norm_of_vector",
    "dense_solve",
    "materialize",
    "a_adjoint",
    "lanczos_extremes",
    "spd_smoke_test",
    "require_spd",
    "save_matrix",
    "load_matrix",
    "save_vector",
    "load_vector",
]

# Relative floor used for "eigenvalue is nonnegative" style checks.
NONNEG_TOL = 1e-12


class NonlinearOperatorError(ValueError):
    """An operator probed as nonlinear where a linear one is required."""


@dataclass
class SparseMatrix:
    """Compressed sparse row matrix.

    Fields are the raw CSR triple.  ``shape`` is (rows, cols); square
    matrices expose ``n``.  ``symmetric`` is a structural promise made by
    the constructor, checked by :func:`SparseMatrix.validate`.
    """

    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray
    shape: tuple[int, int]
    symmetric: bool = False
    _csr: scipy.sparse.csr_matrix | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.row_ptr = np.ascontiguousarray(self.row_ptr, dtype=np.int64)
        self.col_idx = np.ascontiguousarray(self.col_idx, dtype=np.int64)
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        self.shape = (int(self.shape[0]), int(self.shape[1]))
        self.validate()

    # -- constructors -------------------------------------------------

    @classmethod
    def from_scipy(cls, m, symmetric: bool = False) -> "SparseMatrix":
        csr = scipy.sparse.csr_matrix(m)
        csr.sum_duplicates()
        csr.sort_indices()
        out = cls(csr.indptr, csr.indices, csr.data, csr.shape, symmetric)
        return out

    @classmethod
    def from_coo(cls, rows, cols, vals, shape, symmetric: bool = False) -> "SparseMatrix":
        coo = scipy.sparse.coo_matrix((vals, (rows, cols)), shape=shape)
        return cls.from_scipy(coo, symmetric)

    @classmethod
    def from_dense(cls, a, symmetric: bool = False) -> "SparseMatrix":
        return cls.from_scipy(scipy.sparse.csr_matrix(np.asarray(a, dtype=float)), symmetric)

    @classmethod
    def identity(cls, n: int) -> "SparseMatrix":
        return cls.from_scipy(scipy.sparse.identity(n, format="csr"), symmetric=True)

    # -- basic structure ----------------------------------------------

    @property
    def n(self) -> int:
        if self.shape[0] != self.shape[1]:
            raise ValueError(f"matrix is not square: shape {self.shape}")
        return self.shape[0]

    @property
    def nnz(self) -> int:
        return len(self.values)

    def validate(self):
        nr, nc = self.shape
        if len(self.row_ptr) != nr + 1 or self.row_ptr[0] != 0 or self.row_ptr[-1] != len(self.values):
            raise ValueError("malformed row_ptr")
        if np.any(np.diff(self.row_ptr) < 0):
            raise ValueError("row_ptr must be nondecreasing")
        if len(self.col_idx) and (self.col_idx.min() < 0 or self.col_idx.max() >= nc):
            raise ValueError("column index out of range")
        for i in range(nr):
            lo, hi = self.row_ptr[i], self.row_ptr[i + 1]
            if hi - lo > 1 and np.any(np.diff(self.col_idx[lo:hi]) <= 0):
                raise ValueError(f"row {i} has unsorted or duplicate column indices")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("nonfinite matrix entries")
        if self.symmetric:
            if nr != nc:
                raise ValueError("rectangular matrix flagged symmetric")
            d = self.to_scipy()
            if (d - d.T).nnz and abs(d - d.T).max() > 0:
                raise ValueError("matrix flagged symmetric is not structurally symmetric")

    def to_scipy(self) -> scipy.sparse.csr_matrix:
        if self._csr is None:
            self._csr = scipy.sparse.csr_matrix(
                (self.values, self.col_idx, self.row_ptr), shape=self.shape
            )
        return self._csr

    def to_dense(self) -> np.ndarray:
        return self.to_scipy().toarray()

    def transpose(self) -> "SparseMatrix":
        return SparseMatrix.from_scipy(self.to_scipy().T.tocsr(), self.symmetric)

    def diagonal(self) -> np.ndarray:
        return self.to_scipy().diagonal()

    def principal_submatrix(self, idx: np.ndarray, symmetric: bool | None = None) -> "SparseMatrix":
        idx = np.asarray(idx, dtype=np.int64)
        sub = self.to_scipy()[idx][:, idx].tocsr()
        return SparseMatrix.from_scipy(sub, self.symmetric if symmetric is None else symmetric)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return spmv(self, x)

    def __matmul__(self, x):
        return spmv(self, x)


def spmv(a: SparseMatrix, x: np.ndarray) -> np.ndarray:
    """Sparse matrix-vector product y = A x.

    The accumulation order per row is the CSR storage order, so repeated
    calls are bitwise reproducible.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (a.shape[1],):
        raise ValueError(f"shape mismatch: matrix {a.shape}, vector {x.shape}")
    return a.to_scipy() @ x


@dataclass
class InnerProduct:
    """Euclidean or A-weighted inner product.

    The weighted form is constructed through :func:`InnerProduct.a_weighted`,
    which smoke-tests the weight for symmetric positive definiteness first.
    """

    kind: str = "euclidean"
    weight: SparseMatrix | None = None

    @classmethod
    def a_weighted(cls, a: SparseMatrix) -> "InnerProduct":
        require_spd(a, what="inner product weight")
        return cls(kind="a", weight=a)

    def __call__(self, x, y):
        return inner(self, x, y)


def inner(ip: InnerProduct, x: np.ndarray, y: np.ndarray) -> float:
    """Inner product (x, y) under ``ip``; (x, Ay) for the weighted form."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError("vector length mismatch")
    if ip.kind == "euclidean":
        return float(np.dot(x, y))
    if ip.kind == "a":
        return float(np.dot(x, spmv(ip.weight, y)))
    raise ValueError(f"unknown inner product kind {ip.kind!r}")


def a_norm_of_vector(a: SparseMatrix, x: np.ndarray) -> float:
    """sqrt((x, Ax)); negative rounding is clipped at zero."""
    q = float(np.dot(x, spmv(a, x)))
    return float(np.sqrt(max(q, 0.0)))


def dense_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve a dense square system by LU with partial pivoting.

    Parameters
    ----------
    a : (n, n) ndarray
    b : (n,) or (n, k) ndarray

    Returns
    -------
    x : ndarray
        Solution with the shape of ``b``.  A pivot that is zero to
        relative tolerance raises, and the residual is checked against
        ``1e-10 * ||b||`` after the solve.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("matrix must be square")
    lu, piv = scipy.linalg.lu_factor(a)
    diag = np.abs(np.diag(lu))
    if n and diag.min() <= 1e-14 * max(diag.max(), 1e-300):
        raise ValueError("matrix is singular to working tolerance")
    x = scipy.linalg.lu_solve((lu, piv), b)
    bnorm = np.linalg.norm(b)
    res = np.linalg.norm(a @ x - b)
    if res > 1e-10 * bnorm and bnorm > 0:
        raise ValueError(f"dense solve residual {res:.3e} exceeds 1e-10 * ||b|| = {1e-10 * bnorm:.3e}")
    return x


def materialize(op, n: int, check: bool = True, seed: int = 1234) -> np.ndarray:
    """Build the dense matrix of a linear operator by applying it to basis vectors.

    ``op`` may be a callable or anything with ``matvec``.  A seeded random
    probe afterwards checks that ``op`` acted linearly; a mismatch raises
    :class:`NonlinearOperatorError`.
    """
    apply_ = op.matvec if hasattr(op, "matvec") else op
    m = np.empty((n, n), dtype=float)
    e = np.zeros(n)
    for j in range(n):
        e[j] = 1.0
        col = np.asarray(apply_(e.copy()), dtype=float)
        if col.shape != (n,):
            raise ValueError("operator output has wrong length")
        m[:, j] = col
        e[j] = 0.0
    if check and n:
        rng = np.random.default_rng(seed)
        x = rng.standard_normal(n)
        got = np.asarray(apply_(x.copy()), dtype=float)
        want = m @ x
        scale = np.linalg.norm(m, ord=np.inf) * np.linalg.norm(x, ord=np.inf) + np.linalg.norm(want)
        if np.linalg.norm(got - want) > 1e-12 * max(scale, 1e-300):
            raise NonlinearOperatorError(
                f"operator failed the linearity probe: |op(x) - Mx| = {np.linalg.norm(got - want):.3e}"
            )
    return m


def a_adjoint(m: np.ndarray, a: SparseMatrix | np.ndarray) -> np.ndarray:
    """Adjoint of ``m`` in the A-inner product: inv(A) m^T A."""
    m = np.asarray(m, dtype=float)
    ad = a.to_dense() if isinstance(a, SparseMatrix) else np.asarray(a, dtype=float)
    return dense_solve(ad, m.T @ ad)


def lanczos_extremes(matvec, n: int, steps: int = 50, seed: int = 0):
    """Extreme Ritz values of a symmetric operator by Lanczos iteration.

    Full reorthogonalization; the start vector is seeded, so the result is
    deterministic.  Returns (smallest, largest) Ritz value.
    """
    steps = min(steps, n)
    rng = np.random.default_rng(seed)
    q = rng.standard_normal(n)
    q /= np.linalg.norm(q)
    basis = np.empty((steps, n))
    alphas, betas = [], []
    beta = 0.0
    q_prev = np.zeros(n)
    for j in range(steps):
        basis[j] = q
        w = np.asarray(matvec(q.copy()), dtype=float)
        alpha = float(np.dot(q, w))
        w -= alpha * q + beta * q_prev
        # full reorthogonalization keeps the Ritz values trustworthy
        w -= basis[: j + 1].T @ (basis[: j + 1] @ w)
        alphas.append(alpha)
        beta = float(np.linalg.norm(w))
        if beta < 1e-14:
            break
        betas.append(beta)
        q_prev = q
        q = w / beta
    t = np.diag(alphas)
    if betas:
        k = len(alphas)
        off = np.array(betas[: k - 1])
        t[np.arange(k - 1), np.arange(1, k)] = off
        t[np.arange(1, k), np.arange(k - 1)] = off
    ritz = np.linalg.eigvalsh(t)
    return float(ritz[0]), float(ritz[-1])


@dataclass
class SmokeResult:
    symmetry_defect: float
    min_ritz: float

    @property
    def passed(self) -> bool:
        return self.symmetry_defect < 1e-12 and self.min_ritz > 0.0


def spd_smoke_test(a: SparseMatrix, steps: int = 50) -> SmokeResult:
    """Cheap SPD check: relative symmetry defect plus Lanczos smallest Ritz value."""
    csr = a.to_scipy()
    scale = abs(csr).max() if csr.nnz else 0.0
    d = csr - csr.T
    defect = (abs(d).max() / scale) if (d.nnz and scale > 0) else 0.0
    sym = (csr + csr.T) * 0.5
    lo, _ = lanczos_extremes(lambda v: sym @ v, a.n, steps=steps)
    return SmokeResult(symmetry_defect=float(defect), min_ritz=lo)


def require_spd(a: SparseMatrix, what: str = "matrix"):
    r = spd_smoke_test(a)
    if not r.passed:
        raise ValueError(
            f"{what} failed the SPD smoke test "
            f"(symmetry defect {r.symmetry_defect:.3e}, smallest Ritz value {r.min_ritz:.3e})"
        )
    return r


def save_matrix(path, a: SparseMatrix):
    """Write a matrix in MatrixMarket coordinate format.

    Symmetric matrices are stored in symmetric (lower-triangle) form.
    """
    sym = "symmetric" if a.symmetric else "general"
    scipy.io.mmwrite(str(path), a.to_scipy(), symmetry=sym)


def load_matrix(path) -> SparseMatrix:
    """Read a MatrixMarket coordinate file; symmetric storage is expanded."""
    _, _, _, _, _, sym = scipy.io.mminfo(str(path))
    m = scipy.io.mmread(str(path))
    return SparseMatrix.from_scipy(scipy.sparse.csr_matrix(m), symmetric=(sym == "symmetric"))


def save_vector(path, x: np.ndarray):
    """Write a vector as one value per line."""
    np.savetxt(str(path), np.asarray(x, dtype=float), fmt="%.17g")


def load_vector(path) -> np.ndarray:
    v = np.loadtxt(str(path), dtype=float, ndmin=1)
    if v.ndim != 1:
        raise ValueError(f"expected one value per line in {path}, got shape {v.shape}")
    return v
