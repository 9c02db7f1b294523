"""Numerical certification of preconditioner operator properties.

Everything here works at desk scale: operators are materialized column
by column and compared against dense linear algebra, which serves as the
reference for the iterative estimators.  The certification surface
covers symmetry and positivity of a preconditioner, energy norms and
spectral radii of error propagators, condition numbers of the
preconditioned operator, the symmetrization-penalty chain, and
per-method checklists of the sufficient conditions under which a
Schwarz preconditioner is guaranteed symmetric positive definite.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .fem import Hierarchy
from .linalg import SparseMatrix, a_adjoint, materialize
from .schwarz import (
    Decomposition,
    MgConfig,
    SWEEPS,
    _local_solve,
    dd_action,
    mg_action,
    smoother_action,
)
from .smooth import solver_schedules

__all__ = [
    "SpdCertificate",
    "PenaltyReport",
    "ConditionEstimate",
    "CheckItem",
    "ConditionChecklist",
    "certify_spd",
    "a_norm",
    "dense_a_norm",
    "spectral_radius",
    "penalty_report",
    "condition_estimate",
    "check_theorem_conditions",
]

SYMMETRY_PASS_TOL = 1e-10
VARIATIONAL_TOL = 1e-12
NONEXPANSIVE_SLACK = 1e-10
NONNEG_SLACK = 1e-12
DENSE_LIMIT = 2000


def _as_dense(a) -> np.ndarray:
    if isinstance(a, SparseMatrix):
        return a.to_dense()
    return np.asarray(a, dtype=float)


def _as_operator_matrix(op, n: int) -> np.ndarray:
    if isinstance(op, np.ndarray):
        return op
    if isinstance(op, SparseMatrix):
        return op.to_dense()
    return materialize(op, n)


def _rel_defect(m: np.ndarray, target: np.ndarray) -> float:
    scale = max(np.abs(target).max(), np.abs(m).max(), 1e-300)
    return float(np.abs(m - target).max() / scale)


# ---------------------------------------------------------------------------
# certificates


@dataclass
class SpdCertificate:
    """Symmetry and positivity evidence for a preconditioner.

    ``symmetry_defect`` is the largest entrywise asymmetry relative to
    the spectral norm of the symmetrized operator; ``min_eig`` is the
    smallest eigenvalue of the symmetrized operator (in probe mode, the
    smallest observed Rayleigh quotient, which is evidence rather than
    proof).  ``passed`` iff defect < 1e-10 and min_eig > 0.
    """

    n: int
    mode: str
    symmetry_defect: float
    min_eig: float
    passed: bool
    detail: str = ""


@dataclass
class PenaltyReport:
    """Symmetrization penalty quantities for an error propagator E.

    The chain rho(EE) <= ||EE||_A <= ||E||_A^2 = rho(EE*) must hold up
    to ``tol``; validate() raises when it does not.
    """

    rho_ee: float
    norm_ee: float
    norm_e_sq: float
    rho_eestar: float
    tol: float = 1e-8

    def validate(self):
        if self.rho_ee > self.norm_ee + self.tol:
            raise ValueError(
                f"penalty chain violated: rho(EE)={self.rho_ee} > ||EE||_A={self.norm_ee}")
        if self.norm_ee > self.norm_e_sq + self.tol:
            raise ValueError(
                f"penalty chain violated: ||EE||_A={self.norm_ee} > ||E||_A^2={self.norm_e_sq}")
        if abs(self.norm_e_sq - self.rho_eestar) > self.tol * max(self.norm_e_sq, 1.0):
            raise ValueError(
                f"penalty chain violated: ||E||_A^2={self.norm_e_sq} != rho(EE*)={self.rho_eestar}")
        return self


@dataclass
class ConditionEstimate:
    """Extreme eigenvalues of the preconditioned operator in the energy
    inner product, and their ratio."""

    lambda_min: float
    lambda_max: float
    kappa: float

    def validate(self):
        if self.lambda_min > 0 and self.kappa < 1.0 - 1e-12:
            raise ValueError(f"condition number below one: {self.kappa}")
        return self


def certify_spd(op, n: int, mode: str | None = None, seed: int = 2024,
                probes: int = 64) -> SpdCertificate:
    """Certify that an action is symmetric positive definite.

    Dense mode (n <= 2000, the default there) materializes the operator,
    measures the worst entrywise asymmetry, and takes the smallest
    eigenvalue of the symmetrized matrix.  Probe mode, for larger n,
    draws ``probes`` random vector pairs and checks the bilinear-form
    asymmetry |(Bu, v) - (u, Bv)| together with Rayleigh-quotient
    positivity; it also probes linearity.  Nonlinearity raises.
    """
    if mode is None:
        mode = "dense" if n <= DENSE_LIMIT else "probe"
    if mode == "dense":
        b = _as_operator_matrix(op, n)
        sym = 0.5 * (b + b.T)
        eigs = scipy.linalg.eigvalsh(sym)
        scale = max(np.abs(eigs).max(), 1e-300)
        defect = float(np.abs(b - b.T).max() / scale)
        min_eig = float(eigs[0])
        passed = defect < SYMMETRY_PASS_TOL and min_eig > 0.0
        return SpdCertificate(n=n, mode=mode, symmetry_defect=defect, min_eig=min_eig,
                              passed=passed,
                              detail=f"dense eigensolve, scale {scale:.3e}")
    if mode != "probe":
        raise ValueError(f"unknown certification mode {mode!r}")

    rng = np.random.default_rng(seed)
    apply_ = op if callable(op) else (lambda r: _as_dense(op) @ r)
    # linearity probe: B(alpha u + v) must match alpha Bu + Bv
    u = rng.standard_normal(n)
    v = rng.standard_normal(n)
    bu, bv = apply_(u), apply_(v)
    comb = apply_(1.7 * u - 0.3 * v)
    lin_scale = max(np.abs(comb).max(), np.abs(bu).max(), 1.0)
    from .linalg import NonlinearOperatorError

    if np.abs(comb - (1.7 * bu - 0.3 * bv)).max() > 1e-10 * lin_scale:
        raise NonlinearOperatorError("operator failed the linearity probe")

    worst = 0.0
    scale = 1e-300
    min_rq = np.inf
    for _ in range(probes):
        u = rng.standard_normal(n)
        v = rng.standard_normal(n)
        u /= np.linalg.norm(u)
        v /= np.linalg.norm(v)
        bu = apply_(u)
        bv = apply_(v)
        worst = max(worst, abs(float(u @ bv) - float(v @ bu)))
        scale = max(scale, abs(float(u @ bv)), abs(float(u @ bu)), abs(float(v @ bv)))
        min_rq = min(min_rq, float(u @ bu), float(v @ bv))
    defect = worst / scale
    passed = defect < SYMMETRY_PASS_TOL and min_rq > 0.0
    return SpdCertificate(n=n, mode=mode, symmetry_defect=defect, min_eig=float(min_rq),
                          passed=passed,
                          detail=f"{probes} random pairs; positivity is evidence, not proof")


# ---------------------------------------------------------------------------
# norms and spectra


def dense_a_norm(m, a) -> float:
    """Energy operator norm by dense congruence: with A = L L^T, the
    norm equals the spectral norm of L^T M L^{-T}.  Desk-scale reference
    for the iterative estimator."""
    md = _as_dense(m)
    ad = _as_dense(a)
    l = scipy.linalg.cholesky(ad, lower=True)
    right = scipy.linalg.solve_triangular(l.T, md.T, lower=False, trans="T").T
    return float(np.linalg.norm(l.T @ right, 2))


def a_norm(op, a, tol: float = 1e-8, max_steps: int = 5000, seed: int = 31) -> float:
    """Energy norm of a propagator by power iteration on E*E.

    The operator is materialized once, its energy-adjoint formed
    densely, and the iteration runs in the energy inner product from a
    normalized random start until the Rayleigh quotient settles to
    ``tol`` relative change.  Non-convergence raises with the last two
    Ritz values.
    """
    ad = _as_dense(a)
    n = ad.shape[0]
    e = _as_operator_matrix(op, n)
    estar = a_adjoint(e, ad)
    g = estar @ e
    rng = np.random.default_rng(seed)
    y = rng.standard_normal(n)
    ny = float(np.sqrt(y @ ad @ y))
    y /= ny
    lam_prev = None
    for _ in range(max_steps):
        z = g @ y
        lam = float(y @ ad @ z)
        nz = float(np.sqrt(max(z @ ad @ z, 0.0)))
        if nz < 1e-300:
            return 0.0
        y = z / nz
        if lam_prev is not None and abs(lam - lam_prev) <= tol * max(abs(lam), 1e-300):
            return float(np.sqrt(max(lam, 0.0)))
        lam_prev = lam
    raise RuntimeError(
        f"power iteration did not settle in {max_steps} steps; "
        f"last Ritz values {lam_prev} and {lam}")


def spectral_radius(op, n: int | None = None) -> float:
    """Largest eigenvalue magnitude of a materialized operator, by dense
    nonsymmetric eigensolve.  The reference oracle at desk scale."""
    if isinstance(op, (np.ndarray, SparseMatrix)):
        m = _as_dense(op)
    else:
        if n is None:
            raise ValueError("n is required to materialize a callable operator")
        m = materialize(op, n)
    if m.shape[0] > DENSE_LIMIT:
        raise ValueError(f"dense spectral radius limited to n <= {DENSE_LIMIT}")
    return float(np.abs(scipy.linalg.eigvals(m)).max())


def penalty_report(e_op, a, tol: float = 1e-8) -> PenaltyReport:
    """Quantify the cost of symmetrizing a propagator E.

    Materializes E, its energy-adjoint E*, and the products EE and EE*,
    then reports the spectral radius of EE, the energy norms of EE and
    E squared, and the spectral radius of EE*.  The report's ordering
    chain is asserted before returning: two plain steps are never slower
    than one symmetrized step.
    """
    ad = _as_dense(a)
    n = ad.shape[0]
    e = _as_operator_matrix(e_op, n)
    estar = a_adjoint(e, ad)
    ee = e @ e
    eestar = e @ estar
    rep = PenaltyReport(
        rho_ee=float(np.abs(scipy.linalg.eigvals(ee)).max()),
        norm_ee=dense_a_norm(ee, ad),
        norm_e_sq=dense_a_norm(e, ad) ** 2,
        rho_eestar=float(np.abs(scipy.linalg.eigvals(eestar)).max()),
        tol=tol,
    )
    return rep.validate()


def condition_estimate(b_op, a) -> ConditionEstimate:
    """Extreme eigenvalues of B A in the energy inner product.

    Dense generalized symmetric eigensolve on the materialized
    operators; meaningful when B is certified symmetric.
    """
    ad = _as_dense(a)
    n = ad.shape[0]
    b = _as_operator_matrix(b_op, n)
    w = ad @ b @ ad
    eigs = scipy.linalg.eigh(0.5 * (w + w.T), ad, eigvals_only=True)
    lmin, lmax = float(eigs[0]), float(eigs[-1])
    kappa = lmax / lmin if lmin > 0 else np.inf
    return ConditionEstimate(lambda_min=lmin, lambda_max=lmax, kappa=kappa).validate()


# ---------------------------------------------------------------------------
# sufficient-condition checklists


@dataclass
class CheckItem:
    name: str
    passed: bool
    value: float | None
    threshold: str
    required: bool
    detail: str = ""


@dataclass
class ConditionChecklist:
    """Outcome of checking one method configuration against the
    sufficient conditions for a symmetric positive definite
    preconditioner.  Failed conditions are reported, never raised."""

    label: str
    items: list[CheckItem] = field(default_factory=list)

    @property
    def all_passed(self) -> bool:
        return all(it.passed for it in self.items if it.required)

    def add(self, name, passed, value, threshold, required, detail=""):
        self.items.append(CheckItem(name, bool(passed), value, threshold, required, detail))

    def to_text(self) -> str:
        lines = [f"checklist {self.label}: {'PASS' if self.all_passed else 'FAIL'}"]
        for it in self.items:
            tag = "PASS" if it.passed else "FAIL"
            req = "required" if it.required else "info"
            val = "n/a" if it.value is None else f"{it.value:.6e}"
            line = f"  [{tag}] {it.name} ({req}): value {val}, threshold {it.threshold}"
            if it.detail:
                line += f" ({it.detail})"
            lines.append(line)
        return "\n".join(lines)


def _smoother_matrix(a: SparseMatrix, schedule: str) -> np.ndarray:
    if not schedule:
        return np.zeros((a.n, a.n))
    return materialize(smoother_action(a, schedule), a.n, check=False)


def _transfer_defects(h: Hierarchy):
    rs = 0.0
    var = 0.0
    for k in range(1, h.num_levels):
        lvl = h.levels[k]
        target = (lvl.c * lvl.p.to_scipy().T).toarray()
        rs = max(rs, _rel_defect(lvl.restriction_matrix().toarray(), target))
        ak = lvl.a.to_scipy()
        coarse = (lvl.restriction_matrix() @ ak @ lvl.p.to_scipy()).toarray()
        var = max(var, _rel_defect(h.levels[k - 1].a.to_dense(), coarse))
    return rs, var


def _check_multilevel(h: Hierarchy, cfg: MgConfig, additive: bool,
                      include_cycle_norm: bool) -> ConditionChecklist:
    mode = h.coarse_mode
    label = f"{'add_mg' if additive else 'mult_mg'}/{mode}"
    variational = mode == "galerkin"
    cl = ConditionChecklist(label=label)

    rs_defect, var_defect = _transfer_defects(h)
    cl.add("restriction_is_scaled_transpose", rs_defect <= VARIATIONAL_TOL, rs_defect,
           f"<= {VARIATIONAL_TOL}", required=True)
    cl.add("coarse_operators_variational", var_defect <= VARIATIONAL_TOL, var_defect,
           f"<= {VARIATIONAL_TOL}", required=(variational and not additive),
           detail="coarse operator equals scaled triple product")

    a0 = h.coarsest.a.to_dense()
    c0_defect = _rel_defect(a0, a0.T)
    cl.add("coarsest_solve_symmetric", c0_defect <= VARIATIONAL_TOL, c0_defect,
           f"<= {VARIATIONAL_TOL}", required=True, detail="exact solve of a symmetric operator")

    min_ak = np.inf
    for lvl in h.levels:
        min_ak = min(min_ak, float(scipy.linalg.eigvalsh(lvl.a.to_dense())[0]))
    cl.add("level_operators_spd", min_ak > 0.0, min_ak, "> 0", required=True)

    r1 = scipy.linalg.inv(a0)
    r1_min = float(scipy.linalg.eigvalsh(0.5 * (r1 + r1.T))[0])
    r1_scale = max(np.abs(r1).max(), 1e-300)
    cl.add("coarsest_inverse_nonnegative", r1_min >= -NONNEG_SLACK * r1_scale, r1_min,
           f">= -{NONNEG_SLACK}*scale", required=True)

    pre_mats = {}
    for k in range(1, h.num_levels):
        pre_mats[k] = _smoother_matrix(h.levels[k].a, cfg.pre)

    if additive:
        sym_defect = 0.0
        min_smoother = np.inf
        for k in range(1, h.num_levels):
            m = pre_mats[k]
            sym_defect = max(sym_defect, _rel_defect(m, m.T))
            min_smoother = min(min_smoother,
                               float(scipy.linalg.eigvalsh(0.5 * (m + m.T))[0]))
        cl.add("level_smoothers_symmetric", sym_defect <= SYMMETRY_PASS_TOL, sym_defect,
               f"<= {SYMMETRY_PASS_TOL}", required=True)
        cl.add("level_smoothers_positive", min_smoother > 0.0, min_smoother, "> 0",
               required=True, detail="each summand definite on its level")
    else:
        adj_defect = 0.0
        for k in range(1, h.num_levels):
            post = _smoother_matrix(h.levels[k].a, cfg.post)
            adj_defect = max(adj_defect, _rel_defect(post, pre_mats[k].T))
        cl.add("post_schedule_adjoint_of_pre", adj_defect <= SYMMETRY_PASS_TOL, adj_defect,
               f"<= {SYMMETRY_PASS_TOL}",
               required=True, detail="materialized descending sweep vs transposed ascending")

        lvl = h.levels[-1]
        ej = np.eye(lvl.a.n) - pre_mats[h.num_levels - 1] @ lvl.a.to_dense()
        finest = dense_a_norm(ej, lvl.a.to_dense())
        cl.add("finest_smoother_contracts", finest < 1.0, finest, "< 1",
               required=variational)

        middle = 0.0
        for k in range(1, h.num_levels - 1):
            ek = np.eye(h.levels[k].a.n) - pre_mats[k] @ h.levels[k].a.to_dense()
            middle = max(middle, dense_a_norm(ek, h.levels[k].a.to_dense()))
        cl.add("middle_smoothers_nonexpansive", middle <= 1.0 + NONEXPANSIVE_SLACK,
               middle, "<= 1", required=variational,
               detail="no middle levels" if h.num_levels <= 2 else "")

    if include_cycle_norm:
        method = "add_mg" if additive else "mult_mg"
        act = mg_action(h, cfg, method)
        bm = materialize(act, h.finest.a.n, check=False)
        ad = h.finest.a.to_dense()
        val = dense_a_norm(np.eye(ad.shape[0]) - bm @ ad, ad)
        # for the multiplicative cycle on non-variational coarse operators this
        # contraction is the operative sufficient condition; otherwise it is
        # informational evidence
        cl.add("whole_cycle_contraction", val < 1.0, val, "< 1",
               required=(not additive and not variational),
               detail=f"omega {act.omega}" if additive else "")
    return cl


def _local_solver_matrices(d: Decomposition, schedule: str | None):
    mats = []
    for sub in d.subdomains:
        nloc = len(sub.indices)
        if schedule is None:
            mats.append(scipy.linalg.lu_solve(sub.lu, np.eye(nloc)))
        else:
            mats.append(materialize(
                lambda r: _local_solve(sub, r, schedule, None), nloc, check=False))
    return mats


def _check_decomposition(d: Decomposition, sweep: str | None, additive: bool,
                         include_cycle_norm: bool) -> ConditionChecklist:
    label = f"{'add_dd' if additive else 'mult_dd'}/{d.solver}"
    if not additive:
        label += f"/{sweep}"
    cl = ConditionChecklist(label=label)
    fwd, rev = solver_schedules(d.solver)
    fwd_mats = _local_solver_matrices(d, fwd)

    min_aloc = min(float(scipy.linalg.eigvalsh(sub.a_local.to_dense())[0])
                   for sub in d.subdomains)
    cl.add("local_operators_spd", min_aloc > 0.0, min_aloc, "> 0", required=True)

    nonexp = 0.0
    for sub, m in zip(d.subdomains, fwd_mats):
        aloc = sub.a_local.to_dense()
        nonexp = max(nonexp, dense_a_norm(np.eye(aloc.shape[0]) - m @ aloc, aloc))
    cl.add("local_solves_nonexpansive", nonexp <= 1.0 + NONEXPANSIVE_SLACK, nonexp,
           "<= 1", required=True)

    if additive:
        sym_defect = 0.0
        min_local = np.inf
        for m in fwd_mats:
            sym_defect = max(sym_defect, _rel_defect(m, m.T))
            min_local = min(min_local, float(scipy.linalg.eigvalsh(0.5 * (m + m.T))[0]))
        cl.add("local_solvers_symmetric", sym_defect <= SYMMETRY_PASS_TOL, sym_defect,
               f"<= {SYMMETRY_PASS_TOL}", required=True)
        cl.add("local_solvers_positive", min_local > 0.0, min_local, "> 0", required=True)
    else:
        if sweep not in SWEEPS:
            raise ValueError(f"unknown sweep {sweep!r}")
        palindromic = sweep == "forw_back"
        cl.add("sweep_palindromic", palindromic, None,
               "descending pass mirrors ascending", required=True,
               detail=f"sweep {sweep}")
        if palindromic:
            rev_mats = _local_solver_matrices(d, rev)
            adj_defect = max(_rel_defect(mr, mf.T)
                             for mf, mr in zip(fwd_mats, rev_mats))
            cl.add("descending_solver_adjoint_of_ascending",
                   adj_defect <= SYMMETRY_PASS_TOL, adj_defect,
                   f"<= {SYMMETRY_PASS_TOL}", required=True)
        else:
            cl.add("descending_solver_adjoint_of_ascending", False, None,
                   f"<= {SYMMETRY_PASS_TOL}", required=True,
                   detail="sweep has no descending pass")

    if d.has_coarse:
        a0 = d.coarse_a.to_dense()
        c0_defect = _rel_defect(a0, a0.T)
        cl.add("coarse_solve_symmetric", c0_defect <= VARIATIONAL_TOL and d.coarse_c > 0,
               c0_defect, f"<= {VARIATIONAL_TOL}", required=True,
               detail=f"scaling {d.coarse_c}")
    else:
        cl.add("coarse_solve_symmetric", True, None, "no coarse space", required=True,
               detail="method runs without a coarse space")

    covered = d.retained.copy()
    for sub in d.subdomains:
        covered[sub.indices] = True
    cl.add("subdomains_cover_unknowns", bool(covered.all()), float(covered.sum()),
           f"= {d.a.n}", required=True,
           detail="retained unit equations count as exactly solved")

    if include_cycle_norm:
        if additive:
            act = dd_action(d, method="add_dd", omega=1.0)
        else:
            act = dd_action(d, sweep=sweep, method="mult_dd")
        bm = materialize(act, d.a.n, check=False)
        ad = d.a.to_dense()
        val = dense_a_norm(np.eye(d.a.n) - bm @ ad, ad)
        cl.add("whole_sweep_contraction", val < 1.0, val, "< 1", required=False)
    return cl


def check_theorem_conditions(method: str, hierarchy: Hierarchy | None = None,
                             cfg: MgConfig | None = None,
                             decomposition: Decomposition | None = None,
                             sweep: str | None = None,
                             include_cycle_norm: bool = True) -> ConditionChecklist:
    """Check a bound method configuration against the sufficient
    conditions for its preconditioner to be symmetric positive definite.

    Multilevel methods check the transfer structure (restriction equals
    the scaled transpose, coarse operators variational where claimed),
    the smoother pairing (descending schedule adjoint to ascending for
    the multiplicative cycle, per-level symmetric definite smoothers for
    the additive one), coarsest-solve symmetry, per-level operator
    definiteness, and the smoother contraction bounds.  For the
    multiplicative cycle on non-variational coarse operators the
    measured whole-cycle contraction takes over as the operative
    condition.  Decomposition methods check the analogous local-solver
    pairing, the palindromic sweep structure, coarse-solve symmetry,
    and covering.  All failures are reported in the checklist; nothing
    raises on a failed condition.
    """
    if method in ("mult_mg", "add_mg"):
        if hierarchy is None or cfg is None:
            raise ValueError(f"{method} checklist needs hierarchy and cfg")
        return _check_multilevel(hierarchy, cfg, additive=(method == "add_mg"),
                                 include_cycle_norm=include_cycle_norm)
    if method in ("mult_dd", "add_dd"):
        if decomposition is None:
            raise ValueError(f"{method} checklist needs a decomposition")
        if method == "mult_dd" and sweep is None:
            raise ValueError("mult_dd checklist needs the sweep")
        return _check_decomposition(decomposition, sweep, additive=(method == "add_dd"),
                                    include_cycle_norm=include_cycle_norm)
    raise ValueError(f"unknown method {method!r}")
