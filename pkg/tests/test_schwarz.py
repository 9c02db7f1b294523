"""The four preconditioner actions against dense operator oracles.

Every multiplicative cycle and overlapping sweep is checked by
materializing its error propagator and rebuilding the same operator
from dense factors, so a structural mistake in the recursion cannot
hide behind convergence that merely looks plausible.
"""

import numpy as np
import pytest
import scipy.linalg

from schwarzkit.fem import build_hierarchy
from schwarzkit.linalg import SparseMatrix, materialize
from schwarzkit.problems import pbe_problem, unit_square, unit_square_problem
from schwarzkit.schwarz import (
    Decomposition,
    MgConfig,
    Subdomain,
    apply_add_dd,
    apply_add_mg,
    apply_mult_dd,
    apply_mult_mg,
    build_decomposition,
    dd_action,
    mg_action,
)
from schwarzkit.smooth import SubdomainSolverKind
from util import random_spd


# ---------------------------------------------------------------------------
# dense reference constructions


def schedule_propagator(a: np.ndarray, schedule: str) -> np.ndarray:
    """Dense error propagator of a sweep schedule, left-to-right order."""
    n = len(a)
    e = np.eye(n)
    for ch in schedule:
        part = np.tril(a) if ch == "f" else np.triu(a)
        e = (np.eye(n) - np.linalg.solve(part, a)) @ e
    return e


def schedule_solver(a: np.ndarray, schedule: str) -> np.ndarray:
    """Dense operator mapping a rhs to the schedule iterate from zero."""
    return (np.eye(len(a)) - schedule_propagator(a, schedule)) @ np.linalg.inv(a)


def dense_mult_mg_error(h, pre: str, post: str) -> np.ndarray:
    """Finest-level error propagator rebuilt from dense per-level factors."""
    b = np.linalg.inv(h.levels[0].a.to_dense())
    e = None
    for k in range(1, h.num_levels):
        a = h.levels[k].a.to_dense()
        p = h.levels[k].p.to_dense()
        r = h.levels[k].restriction_matrix().toarray()
        n = len(a)
        e = (schedule_propagator(a, post)
             @ (np.eye(n) - p @ b @ r @ a)
             @ schedule_propagator(a, pre))
        b = (np.eye(n) - e) @ np.linalg.inv(a)
    return e


def dense_add_mg(h, pre: str, omega: float) -> np.ndarray:
    """Additive multilevel operator as an explicit sum of level terms."""
    top = h.num_levels - 1
    n = h.finest.a.n
    down = {top: np.eye(n)}
    for k in range(top, 0, -1):
        down[k - 1] = h.levels[k].restriction_matrix().toarray() @ down[k]
    up = {top: np.eye(n)}
    for k in range(top, 0, -1):
        up[k - 1] = up[k] @ h.levels[k].p.to_dense()
    total = up[0] @ np.linalg.inv(h.levels[0].a.to_dense()) @ down[0]
    for k in range(1, h.num_levels):
        total += up[k] @ schedule_solver(h.levels[k].a.to_dense(), pre) @ down[k]
    return omega * total


def dd_factors(d: Decomposition):
    """Per-subdomain error projectors plus the coarse and retained factors."""
    a = d.a.to_dense()
    n = d.a.n
    eye = np.eye(n)

    def corr(idx, local_b):
        inj = eye[:, idx]
        return eye - inj @ local_b @ inj.T @ a

    subs = []
    for sub in d.subdomains:
        local = np.linalg.inv(sub.a_local.to_dense())
        subs.append(corr(sub.indices, local))
    coarse = None
    if d.has_coarse:
        p0 = d.coarse_p.toarray()
        coarse = eye - p0 @ np.linalg.inv(d.coarse_a.to_dense()) @ (d.coarse_c * p0.T) @ a
    ret_idx = np.nonzero(d.retained)[0]
    retained = corr(ret_idx, np.eye(len(ret_idx))) if len(ret_idx) else eye
    return subs, coarse, retained


def action_error(action, a: SparseMatrix) -> np.ndarray:
    b = materialize(action, a.n)
    return np.eye(a.n) - b @ a.to_dense(), b


# ---------------------------------------------------------------------------
# multilevel actions


def test_mult_mg_two_level_no_smoothing_is_coarse_correction():
    mesh, prob = unit_square_problem(2)
    h = build_hierarchy(mesh, 2, prob)
    cfg = MgConfig(pre="", post="")
    b = materialize(lambda r: apply_mult_mg(h, cfg, r), h.finest.a.n)
    p = h.levels[1].p.to_dense()
    r = h.levels[1].restriction_matrix().toarray()
    want = p @ np.linalg.inv(h.levels[0].a.to_dense()) @ r
    assert np.allclose(b, want, atol=1e-12)


@pytest.mark.parametrize("pre,post", [("f", ""), ("f", "b"), ("ff", "bb"), ("", "fb"), ("fb", "fb")])
def test_mult_mg_matches_dense_recursion(pre, post):
    mesh, prob = pbe_problem()
    h = build_hierarchy(mesh, 3, prob)
    cfg = MgConfig(pre=pre, post=post)
    e_got, _ = action_error(mg_action(h, cfg, "mult_mg"), h.finest.a)
    e_want = dense_mult_mg_error(h, pre, post)
    assert np.max(np.abs(e_got - e_want)) < 1e-11


def test_mult_mg_adjoint_post_gives_spd_preconditioner():
    mesh, prob = unit_square_problem(2)
    h = build_hierarchy(mesh, 3, prob)
    _, b = action_error(mg_action(h, MgConfig(pre="ff", post="bb"), "mult_mg"), h.finest.a)
    assert np.max(np.abs(b - b.T)) <= 1e-11 * np.max(np.abs(b))
    assert np.min(np.linalg.eigvalsh(0.5 * (b + b.T))) > 0


def test_mult_mg_non_adjoint_post_is_measurably_nonsymmetric():
    mesh, prob = unit_square_problem(2)
    h = build_hierarchy(mesh, 2, prob)
    _, b = action_error(mg_action(h, MgConfig(pre="f", post="f"), "mult_mg"), h.finest.a)
    assert np.max(np.abs(b - b.T)) > 1e-6 * np.max(np.abs(b))


def test_add_mg_two_level_collapses_to_coarse_solve():
    mesh, prob = unit_square_problem(2)
    h = build_hierarchy(mesh, 2, prob)
    cfg = MgConfig(pre="", post="", omega=1.0)
    b = materialize(lambda r: apply_add_mg(h, cfg, r), h.finest.a.n)
    p = h.levels[1].p.to_dense()
    r = h.levels[1].restriction_matrix().toarray()
    want = p @ np.linalg.inv(h.levels[0].a.to_dense()) @ r
    assert np.allclose(b, want, atol=1e-12)


@pytest.mark.parametrize("pre", ["f", "ff", "fb"])
def test_add_mg_matches_dense_sum(pre):
    mesh, prob = pbe_problem()
    h = build_hierarchy(mesh, 3, prob)
    cfg = MgConfig(pre=pre, omega=0.45)
    b = materialize(lambda r: apply_add_mg(h, cfg, r), h.finest.a.n)
    assert np.max(np.abs(b - dense_add_mg(h, pre, 0.45))) < 1e-11


def test_add_mg_scales_linearly_in_omega():
    mesh, prob = unit_square_problem(2)
    h = build_hierarchy(mesh, 3, prob)
    rng = np.random.default_rng(31)
    r = rng.standard_normal(h.finest.a.n)
    one = apply_add_mg(h, MgConfig(pre="f", omega=1.0), r)
    two = apply_add_mg(h, MgConfig(pre="f", omega=2.0), r)
    assert np.max(np.abs(two - 2.0 * one)) <= 1e-14 * np.max(np.abs(two))


def test_add_mg_symmetric_schedule_gives_symmetric_operator():
    mesh, prob = unit_square_problem(2)
    h = build_hierarchy(mesh, 3, prob)
    b = materialize(lambda r: apply_add_mg(h, MgConfig(pre="fb"), r), h.finest.a.n)
    assert np.max(np.abs(b - b.T)) <= 1e-11 * np.max(np.abs(b))


# ---------------------------------------------------------------------------
# overlapping decompositions


def test_decomposition_one_subdomain_per_coarse_element():
    mesh, prob = pbe_problem()
    h = build_hierarchy(mesh, 2, prob)
    d = build_decomposition(h)
    assert d.num_subdomains == mesh.num_triangles == 10


def test_decomposition_zero_overlap_shares_only_cut_vertices():
    mesh, prob = unit_square_problem(1)
    h = build_hierarchy(mesh, 3, prob)
    d = build_decomposition(h, overlap=0)
    assert d.num_subdomains == 2
    s0 = set(d.subdomains[0].indices.tolist())
    s1 = set(d.subdomains[1].indices.tolist())
    interior = set(np.nonzero(~h.finest.mesh.boundary)[0].tolist())
    assert s0 | s1 == interior
    v = h.finest.mesh.vertices
    cut = {i for i in interior if abs(v[i, 0] - v[i, 1]) < 1e-12}
    assert s0 & s1 == cut


def test_decomposition_overlap_layers_are_monotone():
    mesh, prob = pbe_problem()
    h = build_hierarchy(mesh, 2, prob)
    d0 = build_decomposition(h, overlap=0)
    d1 = build_decomposition(h, overlap=1)
    for s0, s1 in zip(d0.subdomains, d1.subdomains):
        assert set(s0.indices.tolist()) <= set(s1.indices.tolist())


def test_single_subdomain_exact_solve_inverts():
    # a one-element coarse mesh gives one subdomain holding every
    # interior unknown, so the sweep is a direct solve
    mesh, prob = unit_square_problem(1)
    h = build_hierarchy(mesh, 2, prob)
    one = Decomposition(
        h.finest.a,
        build_decomposition(h, overlap=4, coarse=False).subdomains[:1],
        SubdomainSolverKind.EXACT, 4, None, None, retained=h.finest.mesh.boundary)
    assert set(one.subdomains[0].indices.tolist()) == set(
        np.nonzero(~h.finest.mesh.boundary)[0].tolist())
    n = h.finest.a.n
    for sweep in ("forw", "forw_back", "forw_forw"):
        b = materialize(lambda r: apply_mult_dd(one, sweep, r), n)
        assert np.max(np.abs(np.eye(n) - b @ h.finest.a.to_dense())) < 1e-11
    b = materialize(lambda r: apply_add_dd(one, r), n)
    assert np.max(np.abs(np.eye(n) - b @ h.finest.a.to_dense())) < 1e-11


@pytest.mark.parametrize("solver", [SubdomainSolverKind.EXACT, SubdomainSolverKind.SYMMETRIC,
                                    SubdomainSolverKind.NONSYMMETRIC])
def test_mult_dd_forw_back_matches_projector_product(solver):
    mesh, prob = pbe_problem()
    h = build_hierarchy(mesh, 2, prob)
    d = build_decomposition(h, solver=solver)
    n = d.a.n
    e_got, _ = action_error(dd_action(d, "forw_back"), d.a)
    subs, coarse, retained = dd_factors(d)
    if solver != SubdomainSolverKind.EXACT:
        # rebuild with the inexact local solver matrices
        from schwarzkit.smooth import solver_schedules
        fwd, rev = solver_schedules(solver)
        eye = np.eye(n)
        a = d.a.to_dense()
        subs = []
        subs_rev = []
        for sub in d.subdomains:
            inj = eye[:, sub.indices]
            loc = sub.a_local.to_dense()
            subs.append(eye - inj @ schedule_solver(loc, fwd) @ inj.T @ a)
            subs_rev.append(eye - inj @ schedule_solver(loc, rev) @ inj.T @ a)
    else:
        subs_rev = subs
    e_want = retained.copy()
    for f in subs:
        e_want = f @ e_want
    e_want = coarse @ e_want
    for f in reversed(subs_rev):
        e_want = f @ e_want
    assert np.max(np.abs(e_got - e_want)) < 1e-11


def test_mult_dd_adjointed_forw_back_is_spd():
    mesh, prob = pbe_problem()
    h = build_hierarchy(mesh, 2, prob)
    d = build_decomposition(h, solver=SubdomainSolverKind.ADJOINTED)
    _, b = action_error(dd_action(d, "forw_back"), d.a)
    assert np.max(np.abs(b - b.T)) <= 1e-11 * np.max(np.abs(b))
    assert np.min(np.linalg.eigvalsh(0.5 * (b + b.T))) > 0


def test_mult_dd_forward_only_is_measurably_nonsymmetric():
    mesh, prob = pbe_problem()
    h = build_hierarchy(mesh, 2, prob)
    d = build_decomposition(h)
    _, b = action_error(dd_action(d, "forw"), d.a)
    assert np.max(np.abs(b - b.T)) > 1e-6 * np.max(np.abs(b))


def test_mult_dd_rejects_adjointed_single_pass():
    mesh, prob = pbe_problem()
    h = build_hierarchy(mesh, 2, prob)
    d = build_decomposition(h, solver=SubdomainSolverKind.ADJOINTED)
    with pytest.raises(ValueError):
        apply_mult_dd(d, "forw", np.zeros(d.a.n))
    with pytest.raises(ValueError):
        apply_mult_dd(d, "sideways", np.zeros(d.a.n))


def test_add_dd_rejects_adjointed_solver():
    mesh, prob = pbe_problem()
    h = build_hierarchy(mesh, 2, prob)
    d = build_decomposition(h, solver=SubdomainSolverKind.ADJOINTED)
    with pytest.raises(ValueError):
        apply_add_dd(d, np.zeros(d.a.n))


def test_add_dd_disjoint_blocks_invert_blockwise():
    rng = np.random.default_rng(32)
    a = random_spd(6, rng)
    parts = [np.array([0, 1, 2]), np.array([3, 4, 5])]
    csr = a.to_scipy()
    subs = []
    for idx in parts:
        loc = a.principal_submatrix(idx, symmetric=True)
        subs.append(Subdomain(indices=idx, a_local=loc, rows=csr[idx, :].tocsr(),
                              lu=scipy.linalg.lu_factor(loc.to_dense())))
    d = Decomposition(a, subs, SubdomainSolverKind.EXACT, 0, None, None)
    b = materialize(lambda r: apply_add_dd(d, r), 6)
    want = np.zeros((6, 6))
    for idx in parts:
        want[np.ix_(idx, idx)] = np.linalg.inv(a.to_dense()[np.ix_(idx, idx)])
    assert np.max(np.abs(b - want)) < 1e-12


def test_add_dd_matches_dense_sum_and_omega_scaling():
    mesh, prob = pbe_problem()
    h = build_hierarchy(mesh, 2, prob)
    d = build_decomposition(h)
    n = d.a.n
    b = materialize(lambda r: apply_add_dd(d, r), n)
    eye = np.eye(n)
    want = np.zeros((n, n))
    ret = np.nonzero(d.retained)[0]
    want[ret, ret] = 1.0
    for sub in d.subdomains:
        inj = eye[:, sub.indices]
        want += inj @ np.linalg.inv(sub.a_local.to_dense()) @ inj.T
    p0 = d.coarse_p.toarray()
    want += p0 @ np.linalg.inv(d.coarse_a.to_dense()) @ p0.T
    assert np.max(np.abs(b - want)) < 1e-11
    rng = np.random.default_rng(33)
    r = rng.standard_normal(n)
    assert np.allclose(apply_add_dd(d, r, omega=0.45), 0.45 * apply_add_dd(d, r), atol=0,
                       rtol=1e-14)


def test_add_dd_symmetric_solver_gives_spd_operator():
    mesh, prob = pbe_problem()
    h = build_hierarchy(mesh, 2, prob)
    d = build_decomposition(h, solver=SubdomainSolverKind.SYMMETRIC)
    b = materialize(lambda r: apply_add_dd(d, r), d.a.n)
    assert np.max(np.abs(b - b.T)) <= 1e-11 * np.max(np.abs(b))
    assert np.min(np.linalg.eigvalsh(0.5 * (b + b.T))) > 0


def test_exact_variational_coarse_factor_is_projector():
    # with a variational coarse operator the coarse correction projects,
    # so applying it twice inside the two-pass sweep changes nothing
    mesh, prob = pbe_problem()
    h = build_hierarchy(mesh, 2, prob, coarse_mode="galerkin")
    d = build_decomposition(h)
    subs, coarse, retained = dd_factors(d)
    fwd = retained.copy()
    for f in subs:
        fwd = f @ fwd
    bwd = np.eye(d.a.n)
    for f in reversed(subs):
        bwd = f @ bwd
    once = bwd @ coarse @ fwd
    twice = bwd @ coarse @ coarse @ fwd
    assert np.max(np.abs(once - twice)) <= 1e-12 * np.max(np.abs(once))


def test_actions_are_linear():
    mesh, prob = pbe_problem()
    h = build_hierarchy(mesh, 2, prob)
    d = build_decomposition(h)
    cfg = MgConfig(pre="f", post="b")
    rng = np.random.default_rng(34)
    n = h.finest.a.n
    x, y = rng.standard_normal(n), rng.standard_normal(n)
    al, be = 1.7, -0.3
    for op in (
        lambda r: apply_mult_mg(h, cfg, r),
        lambda r: apply_add_mg(h, cfg, r),
        lambda r: apply_mult_dd(d, "forw_back", r),
        lambda r: apply_add_dd(d, r),
    ):
        lhs = op(al * x + be * y)
        rhs = al * op(x) + be * op(y)
        assert np.max(np.abs(lhs - rhs)) <= 1e-11 * max(np.max(np.abs(lhs)), 1.0)


def test_work_counters_accumulate():
    from schwarzkit.schwarz import Work

    mesh, prob = unit_square_problem(2)
    h = build_hierarchy(mesh, 2, prob)
    w = Work()
    apply_mult_mg(h, MgConfig(pre="f", post="b"), np.ones(h.finest.a.n), work=w)
    assert w.flops > 0
    before = w.flops
    apply_add_mg(h, MgConfig(pre="f"), np.ones(h.finest.a.n), work=w)
    assert w.flops > before
