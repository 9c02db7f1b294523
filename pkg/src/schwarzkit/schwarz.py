"""Multiplicative and additive Schwarz preconditioner actions.

Two families act on a level hierarchy (multigrid V-cycles, additive
multilevel sums) and two on an overlapping decomposition of the finest
mesh into subdomains below coarse elements (multiplicative sweeps,
additive sums, both optionally with a coarse-space solve).

Every preconditioner is defined through one application to a residual
from a zero initial guess, so the same action serves the stationary
iteration and the Krylov accelerators.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse

from .fem import Hierarchy
from .linalg import SparseMatrix
from .smooth import SmootherSchedule, SubdomainSolverKind, apply_schedule, solver_schedules

__all__ = [
    "MgConfig",
    "Decomposition",
    "Subdomain",
    "PreconditionerAction",
    "Work",
    "build_decomposition",
    "apply_mult_mg",
    "apply_add_mg",
    "apply_mult_dd",
    "apply_add_dd",
    "mg_action",
    "dd_action",
    "smoother_action",
    "dd_pass_propagator",
]

SWEEPS = ("forw", "forw_back", "forw_forw")


@dataclass
class Work:
    """Flop-style work counter.

    Matrix and smoother applications add 2 * nnz, dense local solves
    2 * n^2, vector operations 2 * n.  Instrumentation such as error
    monitoring is never counted.
    """

    flops: float = 0.0

    def add(self, amount: float):
        self.flops += amount


@dataclass
class MgConfig:
    """Multigrid cycle configuration.

    pre and post are the smoother schedules applied on every level above
    the coarsest (the additive method uses only ``pre`` as its per-level
    schedule).  The coarsest solve is always exact.  omega scales the
    additive action; the multiplicative cycles ignore it.
    """

    pre: str = "f"
    post: str = ""
    omega: float = 1.0
    coarsest_solve: str = "exact"

    def __post_init__(self):
        self.pre = SmootherSchedule(self.pre)
        self.post = SmootherSchedule(self.post)
        if self.coarsest_solve != "exact":
            raise ValueError("only the exact coarsest solve is supported")


# ---------------------------------------------------------------------------
# multigrid actions


def _sweep_work(a: SparseMatrix, schedule: str) -> float:
    return 2.0 * a.nnz * len(schedule)


def _vcycle(h: Hierarchy, cfg: MgConfig, k: int, r: np.ndarray, work: Work | None) -> np.ndarray:
    lvl = h.levels[k]
    if k == 0:
        if work:
            work.add(2.0 * lvl.a.n ** 2)
        return h.coarse_solve(r)
    a = lvl.a
    if cfg.pre:
        x = apply_schedule(cfg.pre, a, np.zeros(a.n), r)
        resid = r - a.to_scipy() @ x
        if work:
            work.add(_sweep_work(a, cfg.pre) + 2.0 * a.nnz + a.n)
    else:
        x = np.zeros(a.n)
        resid = r
    rst = lvl.restriction_matrix()
    rc = rst @ resid
    ec = _vcycle(h, cfg, k - 1, rc, work)
    x = x + lvl.p.to_scipy() @ ec
    if work:
        work.add(2.0 * rst.nnz + 2.0 * lvl.p.nnz + a.n)
    if cfg.post:
        x = apply_schedule(cfg.post, a, x, r)
        if work:
            work.add(_sweep_work(a, cfg.post))
    return x


def apply_mult_mg(h: Hierarchy, cfg: MgConfig, r: np.ndarray, work: Work | None = None) -> np.ndarray:
    """One V-cycle on the finest level from a zero initial guess.

    Per level: pre-schedule, restricted-residual coarse correction
    through the stored transfer, post-schedule; exact solve on the
    coarsest level.
    """
    return _vcycle(h, cfg, h.num_levels - 1, np.asarray(r, dtype=float), work)


def apply_add_mg(h: Hierarchy, cfg: MgConfig, r: np.ndarray, work: Work | None = None,
                 omega: float | None = None) -> np.ndarray:
    """Additive multilevel action: omega times the sum of per-level
    smoother contributions (schedule ``pre`` applied from zero) plus the
    exact coarsest-level solve, all transferred from the same residual.
    """
    om = cfg.omega if omega is None else omega
    residuals = [None] * h.num_levels
    residuals[-1] = np.asarray(r, dtype=float)
    for k in range(h.num_levels - 1, 0, -1):
        rst = h.levels[k].restriction_matrix()
        residuals[k - 1] = rst @ residuals[k]
        if work:
            work.add(2.0 * rst.nnz)
    u = h.coarse_solve(residuals[0])
    if work:
        work.add(2.0 * h.coarsest.a.n ** 2)
    for k in range(1, h.num_levels):
        lvl = h.levels[k]
        u = lvl.p.to_scipy() @ u
        if cfg.pre:
            u += apply_schedule(cfg.pre, lvl.a, np.zeros(lvl.a.n), residuals[k])
        if work:
            work.add(2.0 * lvl.p.nnz + lvl.a.n + _sweep_work(lvl.a, cfg.pre))
    if om != 1.0:
        u = om * u
        if work:
            work.add(float(len(u)))
    return u


# ---------------------------------------------------------------------------
# overlapping decomposition


@dataclass
class Subdomain:
    indices: np.ndarray
    a_local: SparseMatrix
    rows: scipy.sparse.csr_matrix = field(repr=False)
    lu: tuple | None = field(default=None, repr=False)


class Decomposition:
    """Overlapping subdomains of the finest level plus an optional coarse space."""

    def __init__(self, a: SparseMatrix, subdomains: list[Subdomain], solver: str,
                 overlap: int, coarse_p: scipy.sparse.csr_matrix | None,
                 coarse_a: SparseMatrix | None, coarse_c: float = 1.0,
                 retained: np.ndarray | None = None):
        self.a = a
        self.subdomains = subdomains
        self.solver = solver
        self.overlap = overlap
        self.coarse_p = coarse_p
        self.coarse_a = coarse_a
        self.coarse_c = coarse_c
        # rows kept as trivial unit equations by the boundary elimination;
        # they decouple from the rest and are solved exactly in every sweep
        self.retained = (np.zeros(a.n, dtype=bool) if retained is None
                         else np.asarray(retained, dtype=bool))
        self._coarse_lu = None

    @property
    def num_subdomains(self) -> int:
        return len(self.subdomains)

    @property
    def has_coarse(self) -> bool:
        return self.coarse_p is not None

    def coarse_solve(self, rc: np.ndarray) -> np.ndarray:
        if self._coarse_lu is None:
            self._coarse_lu = scipy.linalg.lu_factor(self.coarse_a.to_dense())
        return scipy.linalg.lu_solve(self._coarse_lu, rc)


def _fine_triangle_owners(h: Hierarchy) -> np.ndarray:
    """Coarse element owning each finest triangle, located by centroid."""
    fine = h.finest.mesh
    coarse = h.coarsest.mesh
    cent = fine.vertices[fine.triangles].mean(axis=1)
    p = coarse.vertices[coarse.triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    det = d1[:, 0] * d2[:, 1] - d2[:, 0] * d1[:, 1]
    owner = np.full(len(cent), -1, dtype=np.int64)
    for k in range(coarse.num_triangles):
        rx = cent[:, 0] - p[k, 0, 0]
        ry = cent[:, 1] - p[k, 0, 1]
        l1 = (rx * d2[k, 1] - ry * d2[k, 0]) / det[k]
        l2 = (ry * d1[k, 0] - rx * d1[k, 1]) / det[k]
        inside = (l1 >= -1e-12) & (l2 >= -1e-12) & (1.0 - l1 - l2 >= -1e-12)
        owner[inside & (owner < 0)] = k
    if np.any(owner < 0):
        raise ValueError("a fine triangle has no containing coarse element; meshes not nested")
    return owner


def build_decomposition(h: Hierarchy, overlap: int = 1,
                        solver: str = SubdomainSolverKind.EXACT,
                        coarse: bool = True) -> Decomposition:
    """One subdomain per coarsest element, expanded by overlap layers.

    The base triangle set of a subdomain is the finest triangles inside
    its coarse element; each overlap layer adds the edge-adjacent fine
    triangles (one triangle deep).  The index set is the set of
    non-Dirichlet vertices of the triangle set.  Local operators are
    principal submatrices, factorized once for the exact solver.  The
    coarse space is the coarsest level reached through the composite
    transfer with scaling 1.
    """
    if solver not in SubdomainSolverKind.ALL:
        raise ValueError(f"unknown subdomain solver {solver!r}")
    if overlap < 0:
        raise ValueError("overlap must be nonnegative")
    fine = h.finest.mesh
    owner = _fine_triangle_owners(h)

    edges_of = {}
    for t, (i, j, k) in enumerate(fine.triangles):
        for a_, b_ in ((i, j), (j, k), (k, i)):
            key = (min(a_, b_), max(a_, b_))
            edges_of.setdefault(key, []).append(t)
    neighbors = [[] for _ in range(fine.num_triangles)]
    for ts in edges_of.values():
        if len(ts) == 2:
            neighbors[ts[0]].append(ts[1])
            neighbors[ts[1]].append(ts[0])

    a_csr = h.finest.a.to_scipy()
    interior = ~fine.boundary
    subs = []
    covered = np.zeros(fine.num_vertices, dtype=bool)
    for k in range(h.coarsest.mesh.num_triangles):
        tset = set(np.nonzero(owner == k)[0].tolist())
        for _ in range(overlap):
            layer = set()
            for t in tset:
                layer.update(neighbors[t])
            tset |= layer
        verts = np.unique(fine.triangles[sorted(tset)])
        idx = verts[interior[verts]]
        if len(idx) == 0:
            raise ValueError(f"subdomain {k} is empty after Dirichlet elimination")
        covered[idx] = True
        a_loc = h.finest.a.principal_submatrix(idx, symmetric=True)
        lu = scipy.linalg.lu_factor(a_loc.to_dense()) if solver == SubdomainSolverKind.EXACT else None
        subs.append(Subdomain(indices=idx, a_local=a_loc, rows=a_csr[idx, :].tocsr(), lu=lu))
    if not np.array_equal(np.nonzero(covered)[0], np.nonzero(interior)[0]):
        raise ValueError("subdomain index sets do not cover the interior unknowns")

    coarse_p = coarse_a = None
    if coarse:
        coarse_p = h.composite_prolongation()
        coarse_a = h.coarsest.a
    return Decomposition(h.finest.a, subs, solver, overlap, coarse_p, coarse_a,
                         coarse_c=1.0, retained=fine.boundary)


def _local_solve(sub: Subdomain, rloc: np.ndarray, schedule: str | None,
                 work: Work | None) -> np.ndarray:
    if schedule is None:
        if work:
            work.add(2.0 * len(sub.indices) ** 2)
        return scipy.linalg.lu_solve(sub.lu, rloc)
    if work:
        work.add(_sweep_work(sub.a_local, schedule))
    return apply_schedule(schedule, sub.a_local, np.zeros(len(rloc)), rloc)


def _coarse_correction(d: Decomposition, x: np.ndarray, r: np.ndarray, work: Work | None):
    resid = r - d.a.to_scipy() @ x
    rc = d.coarse_c * (d.coarse_p.T @ resid)
    ec = d.coarse_solve(rc)
    if work:
        work.add(2.0 * d.a.nnz + 4.0 * d.coarse_p.nnz + 2.0 * d.coarse_a.n ** 2 + 2.0 * len(x))
    return x + d.coarse_p @ ec


def apply_mult_dd(d: Decomposition, sweep: str, r: np.ndarray,
                  work: Work | None = None) -> np.ndarray:
    """Multiplicative overlapping sweep applied to a residual from zero.

    forw       one ascending pass, then the coarse solve
    forw_back  ascending pass, coarse solve, descending pass with the
               reverse-pass local solver
    forw_forw  two ascending passes, a coarse solve after each

    The adjointed local solver needs a two-pass sweep; requesting it with
    "forw" raises.
    """
    if sweep not in SWEEPS:
        raise ValueError(f"unknown sweep {sweep!r}")
    fwd, rev = solver_schedules(d.solver)
    if d.solver == SubdomainSolverKind.ADJOINTED and sweep == "forw":
        raise ValueError("the adjointed subdomain solver requires a two-pass sweep")
    r = np.asarray(r, dtype=float)
    x = np.zeros_like(r)
    # the retained unit equations decouple: one exact assignment solves them
    x[d.retained] = r[d.retained]

    def pass_(order, schedule):
        nonlocal x
        for k in order:
            sub = d.subdomains[k]
            rloc = r[sub.indices] - sub.rows @ x
            if work:
                work.add(2.0 * sub.rows.nnz)
            x[sub.indices] += _local_solve(sub, rloc, schedule, work)

    asc = range(d.num_subdomains)
    desc = range(d.num_subdomains - 1, -1, -1)
    if sweep == "forw":
        pass_(asc, fwd)
        if d.has_coarse:
            x = _coarse_correction(d, x, r, work)
    elif sweep == "forw_forw":
        pass_(asc, fwd)
        if d.has_coarse:
            x = _coarse_correction(d, x, r, work)
        pass_(asc, rev if d.solver == SubdomainSolverKind.ADJOINTED else fwd)
        if d.has_coarse:
            x = _coarse_correction(d, x, r, work)
    else:  # forw_back
        pass_(asc, fwd)
        if d.has_coarse:
            x = _coarse_correction(d, x, r, work)
        pass_(desc, rev)
    return x


def apply_add_dd(d: Decomposition, r: np.ndarray, omega: float = 1.0,
                 work: Work | None = None) -> np.ndarray:
    """Additive overlapping action: local solves of the same residual on
    every subdomain plus the coarse-space solve, summed and scaled."""
    if d.solver == SubdomainSolverKind.ADJOINTED:
        raise ValueError("the adjointed solver has no additive form")
    fwd, _ = solver_schedules(d.solver)
    r = np.asarray(r, dtype=float)
    x = np.zeros_like(r)
    x[d.retained] = r[d.retained]
    for sub in d.subdomains:
        x[sub.indices] += _local_solve(sub, r[sub.indices], fwd, work)
    if d.has_coarse:
        rc = d.coarse_c * (d.coarse_p.T @ r)
        x += d.coarse_p @ d.coarse_solve(rc)
        if work:
            work.add(4.0 * d.coarse_p.nnz + 2.0 * d.coarse_a.n ** 2 + len(x))
    if omega != 1.0:
        x = omega * x
        if work:
            work.add(float(len(x)))
    return x


# ---------------------------------------------------------------------------
# action wrapper


class PreconditionerAction:
    """A preconditioner as a linear action on residual vectors.

    ``omega`` scales the output (additive damping); callers that must be
    damping-free, such as the Krylov solvers, pass ``omega=1`` to apply.
    Linearity is a contract probed by the verification layer rather than
    assumed.
    """

    def __init__(self, method: str, n: int, fn, omega: float = 1.0, work: Work | None = None,
                 label: str = ""):
        self.method = method
        self.n = n
        self._fn = fn
        self.omega = omega
        self.work = work
        self.label = label or method

    def apply(self, r: np.ndarray, omega: float | None = None) -> np.ndarray:
        om = self.omega if omega is None else omega
        out = self._fn(np.asarray(r, dtype=float))
        if om != 1.0:
            out = om * out
            if self.work:
                self.work.add(float(self.n))
        return out

    def matvec(self, r: np.ndarray) -> np.ndarray:
        return self.apply(r)

    def __call__(self, r: np.ndarray) -> np.ndarray:
        return self.apply(r)


def mg_action(h: Hierarchy, cfg: MgConfig, method: str = "mult_mg",
              work: Work | None = None) -> PreconditionerAction:
    """Bind a hierarchy and cycle configuration into an action."""
    n = h.finest.a.n
    if method == "mult_mg":
        fn = lambda r: apply_mult_mg(h, cfg, r, work)
        omega = 1.0
    elif method == "add_mg":
        fn = lambda r: apply_add_mg(h, cfg, r, work, omega=1.0)
        omega = cfg.omega
    else:
        raise ValueError(f"unknown multigrid method {method!r}")
    label = f"{method}({cfg.pre!s},{cfg.post!s})" if method == "mult_mg" else f"{method}({cfg.pre!s})"
    return PreconditionerAction(method, n, fn, omega=omega, work=work, label=label)


def dd_action(d: Decomposition, sweep: str = "forw_back", method: str = "mult_dd",
              omega: float = 1.0, work: Work | None = None) -> PreconditionerAction:
    """Bind a decomposition into an action."""
    n = d.a.n
    if method == "mult_dd":
        if d.solver == SubdomainSolverKind.ADJOINTED and sweep == "forw":
            raise ValueError("the adjointed subdomain solver requires a two-pass sweep")
        fn = lambda r: apply_mult_dd(d, sweep, r, work)
        return PreconditionerAction(method, n, fn, omega=1.0, work=work,
                                    label=f"mult_dd({d.solver},{sweep})")
    if method == "add_dd":
        fn = lambda r: apply_add_dd(d, r, omega=1.0, work=work)
        return PreconditionerAction(method, n, fn, omega=omega, work=work,
                                    label=f"add_dd({d.solver})")
    raise ValueError(f"unknown decomposition method {method!r}")


def smoother_action(a: SparseMatrix, schedule: str):
    """The level smoother as an operator: the schedule applied from zero."""
    return lambda r: apply_schedule(schedule, a, np.zeros(a.n), r)


def dd_pass_propagator(d: Decomposition, reverse: bool = False):
    """Error propagator of one coarse-free multiplicative pass.

    Applies the product of single-subdomain propagators in visiting
    order; used by the theorem-condition checklist.
    """
    fwd, rev = solver_schedules(d.solver)
    order = range(d.num_subdomains - 1, -1, -1) if reverse else range(d.num_subdomains)
    schedule = rev if (reverse and d.solver == SubdomainSolverKind.ADJOINTED) else fwd

    def apply_(v):
        e = np.array(v, dtype=float)
        for k in order:
            sub = d.subdomains[k]
            rloc = sub.rows @ e
            e[sub.indices] -= _local_solve(sub, rloc, schedule, None)
        return e

    return apply_
