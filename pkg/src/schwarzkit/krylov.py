"""Stationary and Krylov solvers driven by a preconditioner action.

All solvers start from the zero initial guess and report per-iteration
convergence histories.  The default stopping rule tracks the energy-norm
error against a reference solution (the benchmark problems carry an
exact discrete solution for this purpose); a residual-based rule is
available when no reference exists.

The Krylov methods always apply the preconditioner action with its
damping factor pinned to 1, so a rescaled additive action yields
identical iteration histories.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import SparseMatrix, a_norm_of_vector, spmv
from .schwarz import PreconditionerAction, Work

__all__ = ["StoppingRule", "SolveReport", "stationary_solve", "pcg_solve", "bicgstab_solve"]


@dataclass
class StoppingRule:
    """Termination control for the iterative solvers.

    mode "a_norm_error" compares ||u - reference||_A against its initial
    value; mode "residual" uses euclidean residual reduction.  A relative
    measure above divergence_factor stops the run as divergent.
    """

    mode: str = "a_norm_error"
    tol: float = 1e-10
    max_iterations: int = 100
    divergence_factor: float = 1e6
    reference: np.ndarray | None = None

    def __post_init__(self):
        if self.mode not in ("a_norm_error", "residual"):
            raise ValueError(f"unknown stopping mode {self.mode!r}")
        if self.mode == "a_norm_error" and self.reference is None:
            raise ValueError("a_norm_error stopping needs a reference solution")


@dataclass
class SolveReport:
    """Outcome of one solver run.

    ``history`` holds the relative convergence measure per iteration,
    starting at 1.0 for the zero initial guess, so its length is always
    iterations + 1.  ``reason`` is one of tolerance, max_iterations,
    divergence, breakdown.
    """

    method: str
    iterations: int
    converged: bool
    reason: str
    history: np.ndarray
    residual_history: np.ndarray
    warnings: list = field(default_factory=list)

    def validate(self):
        if len(self.history) != self.iterations + 1:
            raise ValueError("history length must be iterations + 1")
        if np.any(np.asarray(self.history) < 0):
            raise ValueError("history ratios must be nonnegative")
        return self


class _Monitor:
    """Tracks the stopping measure and the residual norm per iterate."""

    def __init__(self, a: SparseMatrix, f: np.ndarray, rule: StoppingRule):
        self.a = a
        self.f = f
        self.rule = rule
        if rule.mode == "a_norm_error":
            self.e0 = a_norm_of_vector(a, rule.reference)
        else:
            self.e0 = float(np.linalg.norm(f))
        self.history = [1.0]
        self.residual_history = [float(np.linalg.norm(f))]

    def measure(self, u: np.ndarray, r: np.ndarray | None = None) -> float:
        res = self.f - spmv(self.a, u) if r is None else r
        self.residual_history.append(float(np.linalg.norm(res)))
        if self.rule.mode == "a_norm_error":
            val = a_norm_of_vector(self.a, u - self.rule.reference)
        else:
            val = self.residual_history[-1]
        ratio = val / self.e0 if self.e0 > 0 else 0.0
        self.history.append(ratio)
        return ratio

    def verdict(self, ratio: float) -> str | None:
        if not np.isfinite(ratio) or ratio > self.rule.divergence_factor:
            return "divergence"
        if ratio <= self.rule.tol:
            return "tolerance"
        return None

    def report(self, method: str, iterations: int, reason: str, warnings=None) -> SolveReport:
        return SolveReport(
            method=method,
            iterations=iterations,
            converged=(reason == "tolerance"),
            reason=reason,
            history=np.asarray(self.history),
            residual_history=np.asarray(self.residual_history),
            warnings=list(warnings or []),
        ).validate()


def _apply(b, r: np.ndarray) -> np.ndarray:
    if isinstance(b, PreconditionerAction):
        return b.apply(r, omega=1.0)
    return b(r)


def stationary_solve(a: SparseMatrix, b, f: np.ndarray, omega: float = 1.0,
                     rule: StoppingRule | None = None, work: Work | None = None) -> SolveReport:
    """Relaxed stationary iteration u <- u + omega * B(f - A u) from zero.

    Parameters
    ----------
    a : SparseMatrix
        System operator.
    b : PreconditionerAction or callable
        Preconditioner action applied to the current residual; action
        level damping is pinned to 1 and only ``omega`` scales the
        correction.
    f : ndarray
        Right hand side.
    omega : float
        Relaxation factor for the correction.
    rule : StoppingRule
    work : Work, optional
        Flop counter shared with the action.

    Returns
    -------
    SolveReport
    """
    rule = rule or StoppingRule()
    f = np.asarray(f, dtype=float)
    mon = _Monitor(a, f, rule)
    u = np.zeros(a.n)
    r = f.copy()
    reason = "max_iterations"
    it = 0
    while it < rule.max_iterations:
        z = _apply(b, r)
        u = u + omega * z
        r = f - spmv(a, u)
        if work:
            work.add(2.0 * len(u) + 2.0 * a.nnz + len(u))
        it += 1
        ratio = mon.measure(u, r)
        stop = mon.verdict(ratio)
        if stop:
            reason = stop
            break
    return mon.report("stationary", it, reason)


def pcg_solve(a: SparseMatrix, b, f: np.ndarray, rule: StoppingRule | None = None,
              certified: bool = False, work: Work | None = None) -> SolveReport:
    """Preconditioned conjugate gradients from the zero initial guess.

    The preconditioner must be symmetric positive definite for the
    recurrence to be meaningful; ``certified=False`` records a warning
    on the report rather than refusing, since applying CG to an
    uncertified action and watching it fail is a legitimate experiment.
    Loss of positivity in the (r, Br) or (p, Ap) products stops the run
    with reason "breakdown".
    """
    rule = rule or StoppingRule()
    f = np.asarray(f, dtype=float)
    warnings = [] if certified else ["preconditioner used without an SPD certificate"]
    mon = _Monitor(a, f, rule)
    n = a.n
    u = np.zeros(n)
    r = f.copy()
    z = _apply(b, r)
    rz = float(np.dot(r, z))
    p = z.copy()
    reason = "max_iterations"
    it = 0
    while it < rule.max_iterations:
        ap = spmv(a, p)
        pap = float(np.dot(p, ap))
        if work:
            work.add(2.0 * a.nnz + 4.0 * n)
        if pap <= 0.0 or not np.isfinite(pap):
            reason = "breakdown"
            break
        alpha = rz / pap
        u = u + alpha * p
        r = r - alpha * ap
        if work:
            work.add(4.0 * n)
        it += 1
        ratio = mon.measure(u, r)
        stop = mon.verdict(ratio)
        if stop:
            reason = stop
            break
        z = _apply(b, r)
        rz_new = float(np.dot(r, z))
        if work:
            work.add(2.0 * n)
        if rz_new <= 0.0 or not np.isfinite(rz_new):
            reason = "breakdown"
            it += 0
            break
        p = z + (rz_new / rz) * p
        if work:
            work.add(2.0 * n)
        rz = rz_new
    return mon.report("cg", it, reason, warnings)


def bicgstab_solve(a: SparseMatrix, b, f: np.ndarray, rule: StoppingRule | None = None,
                   work: Work | None = None) -> SolveReport:
    """Stabilized bi-conjugate gradients on the left-preconditioned system.

    Runs the standard recurrence on B A u = B f, which needs two matrix
    and two preconditioner applications per iteration and no transpose
    of either.  A vanishing shadow product (|rho| below 1e-30 times the
    squared initial residual norm) or a vanishing stabilization step
    stops the run with reason "breakdown".
    """
    rule = rule or StoppingRule()
    f = np.asarray(f, dtype=float)
    mon = _Monitor(a, f, rule)
    n = a.n

    def mv(x):
        out = _apply(b, spmv(a, x))
        if work:
            work.add(2.0 * a.nnz)
        return out

    u = np.zeros(n)
    r = _apply(b, f)
    r0sq = float(np.dot(r, r))
    rhat = r.copy()
    rho_prev = r0sq
    p = r.copy()
    reason = "max_iterations"
    it = 0
    if r0sq == 0.0:
        return mon.report("bicgstab", 0, "tolerance")
    while it < rule.max_iterations:
        v = mv(p)
        rhat_v = float(np.dot(rhat, v))
        if rhat_v == 0.0 or not np.isfinite(rhat_v):
            reason = "breakdown"
            break
        alpha = rho_prev / rhat_v
        s = r - alpha * v
        t = mv(s)
        tt = float(np.dot(t, t))
        if tt == 0.0 or not np.isfinite(tt):
            reason = "breakdown"
            break
        om = float(np.dot(t, s)) / tt
        if om == 0.0:
            reason = "breakdown"
            break
        u = u + alpha * p + om * s
        r = s - om * t
        if work:
            work.add(18.0 * n)
        it += 1
        ratio = mon.measure(u)
        stop = mon.verdict(ratio)
        if stop:
            reason = stop
            break
        rho = float(np.dot(rhat, r))
        if abs(rho) < 1e-30 * r0sq:
            reason = "breakdown"
            break
        beta = (rho / rho_prev) * (alpha / om)
        p = r + beta * (p - om * v)
        if work:
            work.add(6.0 * n)
        rho_prev = rho
    return mon.report("bicgstab", it, reason)
