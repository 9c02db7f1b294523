"""Gauss-Seidel sweeps and sweep schedules.

A schedule is a string over {f, b}, applied left to right; the empty
schedule is the identity (zero smoother).  Sweeps are lexicographic in
the unknown index, forward or backward, with the classic in-place update,
compiled with numba over the raw CSR arrays.
"""

from __future__ import annotations

import numba
import numpy as np

from .linalg import SparseMatrix

__all__ = [
    "SmootherSchedule",
    "SubdomainSolverKind",
    "gs_sweep",
    "apply_schedule",
    "adjoint_schedule",
    "solver_schedules",
]


class SmootherSchedule(str):
    """Sweep schedule string; characters restricted to 'f' and 'b'."""

    def __new__(cls, s: str = ""):
        s = str(s)
        bad = set(s) - {"f", "b"}
        if bad:
            raise ValueError(f"schedule may contain only 'f' and 'b', got {sorted(bad)}")
        return super().__new__(cls, s)


@numba.njit(cache=True)
def _gs_forward(row_ptr, col_idx, values, x, b):
    n = len(x)
    for i in range(n):
        s = b[i]
        d = 0.0
        for p in range(row_ptr[i], row_ptr[i + 1]):
            j = col_idx[p]
            if j == i:
                d = values[p]
            else:
                s -= values[p] * x[j]
        x[i] = s / d


@numba.njit(cache=True)
def _gs_backward(row_ptr, col_idx, values, x, b):
    n = len(x)
    for i in range(n - 1, -1, -1):
        s = b[i]
        d = 0.0
        for p in range(row_ptr[i], row_ptr[i + 1]):
            j = col_idx[p]
            if j == i:
                d = values[p]
            else:
                s -= values[p] * x[j]
        x[i] = s / d


def _check_diagonal(a: SparseMatrix):
    # cached per matrix object; a zero diagonal entry would divide by zero
    if getattr(a, "_gs_diag_checked", False):
        return
    d = a.diagonal()
    if np.any(d == 0.0):
        raise ValueError("matrix has a zero diagonal entry, Gauss-Seidel sweep undefined")
    a._gs_diag_checked = True


def gs_sweep(a: SparseMatrix, x: np.ndarray, b: np.ndarray, direction: str) -> np.ndarray:
    """One lexicographic Gauss-Seidel sweep.

    Parameters
    ----------
    a : SparseMatrix
        Square matrix with nonzero diagonal.
    x : ndarray
        Current iterate; not modified.
    b : ndarray
        Right hand side.
    direction : str
        "f" sweeps ascending indices, "b" descending.

    Returns
    -------
    ndarray
        The updated iterate.
    """
    if direction not in ("f", "b"):
        raise ValueError(f"direction must be 'f' or 'b', got {direction!r}")
    _check_diagonal(a)
    out = np.array(x, dtype=float)
    b = np.asarray(b, dtype=float)
    if out.shape != (a.n,) or b.shape != (a.n,):
        raise ValueError("vector length mismatch")
    kernel = _gs_forward if direction == "f" else _gs_backward
    kernel(a.row_ptr, a.col_idx, a.values, out, b)
    return out


def apply_schedule(schedule: str, a: SparseMatrix, x: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Apply a sweep schedule left to right starting from x."""
    schedule = SmootherSchedule(schedule)
    out = np.array(x, dtype=float)
    if not schedule:
        return out
    _check_diagonal(a)
    b = np.asarray(b, dtype=float)
    for ch in schedule:
        kernel = _gs_forward if ch == "f" else _gs_backward
        kernel(a.row_ptr, a.col_idx, a.values, out, b)
    return out


def adjoint_schedule(schedule: str) -> SmootherSchedule:
    """Reverse the sweep order and swap directions.

    For symmetric matrices the smoother of the adjoint schedule is the
    transpose of the smoother of the original schedule.
    """
    schedule = SmootherSchedule(schedule)
    swap = {"f": "b", "b": "f"}
    return SmootherSchedule("".join(swap[ch] for ch in reversed(schedule)))


class SubdomainSolverKind:
    """Approximate subdomain solvers for the decomposition methods.

    exact        direct factorization of the local operator
    symmetric    two symmetric Gauss-Seidel iterations ("fbfb")
    nonsymmetric four forward sweeps ("ffff")
    adjointed    "ffff" on the first pass, "bbbb" on the reversed pass;
                 only legal inside a two-pass multiplicative sweep
    """

    EXACT = "exact"
    SYMMETRIC = "symmetric"
    NONSYMMETRIC = "nonsymmetric"
    ADJOINTED = "adjointed"

    ALL = (EXACT, SYMMETRIC, NONSYMMETRIC, ADJOINTED)


def solver_schedules(kind: str) -> tuple[str | None, str | None]:
    """Forward-pass and reverse-pass schedules of a subdomain solver kind.

    Returns (None, None) for the exact solver.
    """
    if kind == SubdomainSolverKind.EXACT:
        return None, None
    if kind == SubdomainSolverKind.SYMMETRIC:
        return "fbfb", "fbfb"
    if kind == SubdomainSolverKind.NONSYMMETRIC:
        return "ffff", "ffff"
    if kind == SubdomainSolverKind.ADJOINTED:
        return "ffff", "bbbb"
    raise ValueError(f"unknown subdomain solver kind {kind!r}")
