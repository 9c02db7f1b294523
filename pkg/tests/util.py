"""Small shared helpers for the test modules."""

import numpy as np

from schwarzkit.linalg import SparseMatrix


def tridiag(n: int, lo: float = -1.0, di: float = 2.0, up: float = -1.0) -> SparseMatrix:
    a = np.zeros((n, n))
    np.fill_diagonal(a, di)
    idx = np.arange(n - 1)
    a[idx, idx + 1] = up
    a[idx + 1, idx] = lo
    return SparseMatrix.from_dense(a, symmetric=(lo == up))


def random_spd(n: int, rng: np.random.Generator, shift: float = 0.1) -> SparseMatrix:
    m = rng.standard_normal((n, n))
    a = m @ m.T + shift * n * np.eye(n)
    return SparseMatrix.from_dense(a, symmetric=True)
