"""Piecewise linear triangular finite elements on nested meshes.

Everything here is geared toward building level hierarchies for the
preconditioners: conforming triangle meshes, uniform midpoint refinement,
one-point (barycenter) quadrature assembly of diffusion-reaction forms,
interpolation transfer operators, and variational or re-discretized
coarse operators.

Dirichlet conditions are eliminated symmetrically in place: the matrix
keeps its dimension, constrained rows and columns are zeroed with a unit
diagonal, and the right hand side carries the boundary values.  Transfer
operators therefore never need index remapping between levels.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse

from .linalg import SparseMatrix, require_spd

__all__ = [
    "Mesh",
    "ProblemSpec",
    "Level",
    "Hierarchy",
    "uniform_refine",
    "assemble",
    "assemble_raw",
    "eliminate_dirichlet",
    "build_prolongation",
    "adjusted_transfer",
    "galerkin_coarsen",
    "build_hierarchy",
    "save_mesh",
    "load_mesh",
    "export_hierarchy",
]


@dataclass
class Mesh:
    """Conforming triangle mesh.

    vertices : (nv, 2) float array
    triangles : (nt, 3) int array, counterclockwise
    boundary : (nv,) bool array, True on Dirichlet vertices
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary: np.ndarray

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float)
        self.triangles = np.asarray(self.triangles, dtype=np.int64)
        self.boundary = np.asarray(self.boundary, dtype=bool)

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_triangles(self) -> int:
        return len(self.triangles)

    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        return 0.5 * (
            (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
            - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1])
        )

    def edges(self):
        """Sorted unique edges and their triangle incidence counts."""
        t = self.triangles
        raw = np.vstack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        raw.sort(axis=1)
        edges, counts = np.unique(raw, axis=0, return_counts=True)
        return edges, counts

    def validate(self):
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise ValueError("vertices must be (nv, 2)")
        if len(self.boundary) != self.num_vertices:
            raise ValueError("boundary flag length mismatch")
        if self.triangles.min(initial=0) < 0 or self.triangles.max(initial=-1) >= self.num_vertices:
            raise ValueError("triangle vertex index out of range")
        areas = self.signed_areas()
        if np.any(areas <= 0):
            bad = int(np.argmin(areas))
            raise ValueError(f"triangle {bad} has nonpositive area {areas[bad]:.3e}")
        _, counts = self.edges()
        if np.any(counts > 2):
            raise ValueError("nonconforming mesh: an edge belongs to more than two triangles")
        return self


@dataclass
class ProblemSpec:
    """Coefficients and data of a scalar diffusion-reaction problem.

    diffusion and reaction are callables of (x, y) evaluated at element
    barycenters (the quadrature point); diffusion must be positive and
    reaction nonnegative there.  sources is a list of ((x, y), charge)
    point loads.  dirichlet gives boundary values at flagged vertices.
    """

    diffusion: object = staticmethod(lambda x, y: 1.0)
    reaction: object = staticmethod(lambda x, y: 0.0)
    sources: list = field(default_factory=list)
    dirichlet: object = staticmethod(lambda x, y: 0.0)


def uniform_refine(mesh: Mesh) -> Mesh:
    """Refine every triangle into four by edge midpoints.

    Parent vertices keep their indices; midpoints are appended in the
    order of the lexicographically sorted parent edge list, which makes
    refinement deterministic.  A midpoint is flagged Dirichlet exactly
    when its parent edge lies on the boundary (single incident triangle,
    both endpoints flagged).
    """
    edges, counts = mesh.edges()
    nv = mesh.num_vertices
    mid_index = {(int(a), int(b)): nv + i for i, (a, b) in enumerate(edges)}

    mids = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
    vertices = np.vstack([mesh.vertices, mids])

    on_boundary_edge = (counts == 1) & mesh.boundary[edges[:, 0]] & mesh.boundary[edges[:, 1]]
    boundary = np.concatenate([mesh.boundary, on_boundary_edge])

    tris = np.empty((4 * mesh.num_triangles, 3), dtype=np.int64)
    for t, (a, b, c) in enumerate(mesh.triangles):
        mab = mid_index[(min(a, b), max(a, b))]
        mbc = mid_index[(min(b, c), max(b, c))]
        mca = mid_index[(min(c, a), max(c, a))]
        tris[4 * t + 0] = (a, mab, mca)
        tris[4 * t + 1] = (mab, b, mbc)
        tris[4 * t + 2] = (mca, mbc, c)
        tris[4 * t + 3] = (mab, mbc, mca)
    return Mesh(vertices, tris, boundary)


def _element_geometry(mesh: Mesh):
    """Areas, barycenters and basis gradients for all triangles at once."""
    p = mesh.vertices[mesh.triangles]  # (nt, 3, 2)
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    det = d1[:, 0] * d2[:, 1] - d2[:, 0] * d1[:, 1]
    area = 0.5 * det
    centers = p.mean(axis=1)
    # gradients of the barycentric functions: rows of inv(J)^T and their negative sum
    g1 = np.stack([d2[:, 1], -d2[:, 0]], axis=1) / det[:, None]
    g2 = np.stack([-d1[:, 1], d1[:, 0]], axis=1) / det[:, None]
    g0 = -(g1 + g2)
    grads = np.stack([g0, g1, g2], axis=1)  # (nt, 3, 2)
    return area, centers, grads


def _locate_point(mesh: Mesh, x: float, y: float) -> tuple[int, np.ndarray]:
    """Containing triangle and barycentric weights of a point.

    A point on a shared edge or vertex belongs to several triangles; the
    lowest triangle index wins so that assembly is deterministic.
    """
    p = mesh.vertices[mesh.triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    det = d1[:, 0] * d2[:, 1] - d2[:, 0] * d1[:, 1]
    rx = x - p[:, 0, 0]
    ry = y - p[:, 0, 1]
    l1 = (rx * d2[:, 1] - ry * d2[:, 0]) / det
    l2 = (ry * d1[:, 0] - rx * d1[:, 1]) / det
    l0 = 1.0 - l1 - l2
    tol = -1e-12
    inside = (l0 >= tol) & (l1 >= tol) & (l2 >= tol)
    hits = np.nonzero(inside)[0]
    if len(hits) == 0:
        raise ValueError(f"point ({x}, {y}) lies outside the mesh")
    t = int(hits[0])
    w = np.clip(np.array([l0[t], l1[t], l2[t]]), 0.0, 1.0)
    return t, w / w.sum()


def assemble_raw(mesh: Mesh, prob: ProblemSpec):
    """Assemble the stiffness-plus-reaction matrix and load vector.

    One-point Gaussian quadrature at the barycenter throughout: the
    diffusion term is exact for piecewise linears, the reaction block of
    an element is reaction * area / 9 times the all-ones 3x3 matrix.
    No boundary conditions are applied here.
    """
    mesh.validate()
    area, centers, grads = _element_geometry(mesh)
    eps = np.array([float(prob.diffusion(cx, cy)) for cx, cy in centers])
    kap = np.array([float(prob.reaction(cx, cy)) for cx, cy in centers])
    if np.any(eps <= 0):
        raise ValueError("diffusion coefficient must be positive at quadrature points")
    if np.any(kap < 0):
        raise ValueError("reaction coefficient must be nonnegative at quadrature points")

    stiff = np.einsum("t,tid,tjd->tij", eps * area, grads, grads)
    mass = (kap * area / 9.0)[:, None, None] * np.ones((1, 3, 3))
    local = stiff + mass

    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    a = SparseMatrix.from_coo(rows, cols, local.ravel(),
                              (mesh.num_vertices, mesh.num_vertices), symmetric=True)

    b = np.zeros(mesh.num_vertices)
    for (sx, sy), charge in prob.sources:
        tri, w = _locate_point(mesh, float(sx), float(sy))
        b[mesh.triangles[tri]] += float(charge) * w
    return a, b


def eliminate_dirichlet(a: SparseMatrix, b: np.ndarray, flags: np.ndarray,
                        values: np.ndarray):
    """Symmetric elimination keeping the dimension.

    Constrained rows and columns are zeroed with a unit diagonal; the
    right hand side absorbs the column contributions and carries the
    boundary values on constrained entries.
    """
    flags = np.asarray(flags, dtype=bool)
    csr = a.to_scipy().tolil()
    b = np.array(b, dtype=float)
    g = np.zeros(len(b))
    g[flags] = values[flags]
    b -= a.to_scipy() @ g
    d = np.nonzero(flags)[0]
    csr[d, :] = 0.0
    csr[:, d] = 0.0
    csr[d, d] = 1.0
    b[d] = values[d]
    out = SparseMatrix.from_scipy(csr.tocsr(), symmetric=True)
    return out, b


def assemble(mesh: Mesh, prob: ProblemSpec):
    """Assembled, eliminated operator and right hand side for a mesh."""
    a, b = assemble_raw(mesh, prob)
    vals = np.zeros(mesh.num_vertices)
    idx = np.nonzero(mesh.boundary)[0]
    for i in idx:
        vals[i] = float(prob.dirichlet(mesh.vertices[i, 0], mesh.vertices[i, 1]))
    return eliminate_dirichlet(a, b, mesh.boundary, vals)


def build_prolongation(coarse: Mesh, fine: Mesh) -> SparseMatrix:
    """Interpolation from a mesh to its uniform refinement.

    Rows of retained vertices carry a single 1; midpoint rows carry 1/2
    for each parent edge endpoint, on every row including Dirichlet ones.
    Raises if ``fine`` is not the uniform refinement of ``coarse``.
    """
    edges, _ = coarse.edges()
    nc, nf = coarse.num_vertices, fine.num_vertices
    nested = (
        nf == nc + len(edges)
        and fine.num_triangles == 4 * coarse.num_triangles
        and np.array_equal(fine.vertices[:nc], coarse.vertices)
    )
    if nested:
        mids = 0.5 * (coarse.vertices[edges[:, 0]] + coarse.vertices[edges[:, 1]])
        nested = np.array_equal(fine.vertices[nc:], mids)
    if not nested:
        raise ValueError("meshes are not nested: fine mesh is not the uniform refinement of coarse")

    rows = np.concatenate([np.arange(nc), np.arange(nc, nf), np.arange(nc, nf)])
    cols = np.concatenate([np.arange(nc), edges[:, 0], edges[:, 1]])
    vals = np.concatenate([np.ones(nc), np.full(2 * len(edges), 0.5)])
    return SparseMatrix.from_coo(rows, cols, vals, (nf, nc))


def adjusted_transfer(p: SparseMatrix, coarse_boundary: np.ndarray,
                      fine_boundary: np.ndarray) -> SparseMatrix:
    """Transfer operator compatible with symmetric Dirichlet elimination.

    The interpolation stencil survives only between interior rows and
    interior columns; retained Dirichlet coarse vertices keep a unit
    injection onto their fine copy and everything else on constrained
    rows or columns is cleared.  With this operator the variational
    coarse matrix of an eliminated fine matrix equals the eliminated
    coarse assembly for constant-coefficient diffusion.
    """
    fine_b = np.asarray(fine_boundary, dtype=bool)
    coarse_b = np.asarray(coarse_boundary, dtype=bool)
    nf, nc = p.shape
    coo = p.to_scipy().tocoo()
    keep = ~fine_b[coo.row] & ~coarse_b[coo.col]
    rows = list(coo.row[keep])
    cols = list(coo.col[keep])
    vals = list(coo.data[keep])
    for i in np.nonzero(coarse_b)[0]:
        if fine_b[i]:
            rows.append(i)
            cols.append(i)
            vals.append(1.0)
    return SparseMatrix.from_coo(rows, cols, vals, (nf, nc))


def galerkin_coarsen(a_fine: SparseMatrix, p: SparseMatrix, c: float = 1.0) -> SparseMatrix:
    """Variational coarse operator c * P^T A P, symmetrized against rounding."""
    w = (p.to_scipy().T @ (a_fine.to_scipy() @ p.to_scipy())).tocsr() * c
    w = (w + w.T) * 0.5
    return SparseMatrix.from_scipy(w, symmetric=True)


@dataclass
class Level:
    """One hierarchy level: mesh, operator and the transfer from below.

    ``p`` is the elimination-compatible transfer actually used by the
    methods, ``p_raw`` the plain interpolation stencil; both are None on
    the coarsest level.  ``restriction`` overrides c * P^T when set (the
    certification battery uses that to build a deliberately broken
    hierarchy).
    """

    mesh: Mesh
    a: SparseMatrix
    p: SparseMatrix | None = None
    p_raw: SparseMatrix | None = None
    c: float = 1.0
    restriction: SparseMatrix | None = None
    _r_csr: scipy.sparse.csr_matrix | None = field(default=None, repr=False)

    def restriction_matrix(self) -> scipy.sparse.csr_matrix:
        if self._r_csr is None:
            if self.restriction is not None:
                self._r_csr = self.restriction.to_scipy().tocsr()
            else:
                self._r_csr = (self.p.to_scipy().T * self.c).tocsr()
        return self._r_csr


class Hierarchy:
    """Nested level stack, coarsest first."""

    def __init__(self, levels: list[Level], rhs: np.ndarray | None = None,
                 coarse_mode: str = "galerkin"):
        self.levels = levels
        self.rhs = rhs
        self.coarse_mode = coarse_mode
        self._coarse_lu = None

    @property
    def num_levels(self) -> int:
        return len(self.levels)

    @property
    def finest(self) -> Level:
        return self.levels[-1]

    @property
    def coarsest(self) -> Level:
        return self.levels[0]

    def coarse_solve(self, r: np.ndarray) -> np.ndarray:
        """Exact solve on the coarsest operator (cached dense LU)."""
        if self._coarse_lu is None:
            self._coarse_lu = scipy.linalg.lu_factor(self.coarsest.a.to_dense())
        return scipy.linalg.lu_solve(self._coarse_lu, r)

    def composite_prolongation(self) -> scipy.sparse.csr_matrix:
        """Product of the stored transfers, mapping coarsest to finest."""
        out = self.levels[1].p.to_scipy()
        for lvl in self.levels[2:]:
            out = lvl.p.to_scipy() @ out
        return out.tocsr()

    def validate(self):
        for k, lvl in enumerate(self.levels[1:], start=1):
            below = self.levels[k - 1].mesh
            nc = below.num_vertices
            if not np.array_equal(lvl.mesh.vertices[:nc], below.vertices):
                raise ValueError(f"level {k} vertices are not an extension of level {k - 1}")
        for k, lvl in enumerate(self.levels):
            require_spd(lvl.a, what=f"level {k} operator")
        return self


def build_hierarchy(coarse_mesh: Mesh, num_levels: int, prob: ProblemSpec,
                    coarse_mode: str = "galerkin") -> Hierarchy:
    """Build a nested hierarchy by uniform refinement of a coarse mesh.

    The finest operator is always assembled from the finest mesh.  Mode
    "galerkin" forms coarse operators variationally through the stored
    transfers with c = 1; mode "discretized" assembles every level on its
    own mesh.  The finest right hand side is stored on the hierarchy.
    """
    if coarse_mode not in ("galerkin", "discretized"):
        raise ValueError(f"unknown coarse_mode {coarse_mode!r}")
    if num_levels < 1:
        raise ValueError("need at least one level")
    meshes = [coarse_mesh.validate()]
    for _ in range(num_levels - 1):
        meshes.append(uniform_refine(meshes[-1]))

    transfers_raw, transfers = [None], [None]
    for k in range(1, num_levels):
        p_raw = build_prolongation(meshes[k - 1], meshes[k])
        transfers_raw.append(p_raw)
        transfers.append(adjusted_transfer(p_raw, meshes[k - 1].boundary, meshes[k].boundary))

    a_fine, rhs = assemble(meshes[-1], prob)
    ops = [None] * num_levels
    ops[-1] = a_fine
    for k in range(num_levels - 2, -1, -1):
        if coarse_mode == "galerkin":
            ops[k] = galerkin_coarsen(ops[k + 1], transfers[k + 1], c=1.0)
        else:
            ops[k], _ = assemble(meshes[k], prob)

    levels = [
        Level(mesh=meshes[k], a=ops[k], p=transfers[k], p_raw=transfers_raw[k], c=1.0)
        for k in range(num_levels)
    ]
    return Hierarchy(levels, rhs=rhs, coarse_mode=coarse_mode)


def save_mesh(path, mesh: Mesh):
    """Write a mesh as plain text.

    Line 1 is the vertex count, followed by one "x y flag" line per
    vertex (flag 1 marks a Dirichlet vertex), then the triangle count and
    one "i j k" line per triangle with zero-based vertex indices.
    """
    lines = [str(mesh.num_vertices)]
    for (x, y), b in zip(mesh.vertices, mesh.boundary):
        lines.append(f"{x:.17g} {y:.17g} {int(b)}")
    lines.append(str(mesh.num_triangles))
    for i, j, k in mesh.triangles:
        lines.append(f"{i} {j} {k}")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def load_mesh(path) -> Mesh:
    with open(path) as f:
        tokens = f.read().split()
    pos = 0

    def take(n):
        nonlocal pos
        out = tokens[pos:pos + n]
        if len(out) != n:
            raise ValueError(f"truncated mesh file {path}")
        pos += n
        return out

    nv = int(take(1)[0])
    rows = [take(3) for _ in range(nv)]
    verts = np.array([[float(x), float(y)] for x, y, _ in rows])
    bnd = np.array([flag not in ("0", "0.0") for _, _, flag in rows])
    nt = int(take(1)[0])
    tris = np.array([[int(v) for v in take(3)] for _ in range(nt)], dtype=int)
    if pos != len(tokens):
        raise ValueError(f"trailing data in mesh file {path}")
    return Mesh(vertices=verts, triangles=tris, boundary=bnd).validate()


def export_hierarchy(hier: Hierarchy, outdir, stem: str = "level") -> str:
    """Write every level to MatrixMarket files plus a JSON manifest.

    Level k produces "{stem}{k}_operator.mtx" and, above the coarsest,
    "{stem}{k}_transfer.mtx".  The manifest records the per-level
    dimensions, the restriction scaling factors, and the file names.
    Returns the manifest path.
    """
    import json
    import os

    from .linalg import save_matrix

    os.makedirs(outdir, exist_ok=True)
    entries = []
    for k, lvl in enumerate(hier.levels):
        a_name = f"{stem}{k}_operator.mtx"
        save_matrix(os.path.join(outdir, a_name), lvl.a)
        p_name = None
        if lvl.p is not None:
            p_name = f"{stem}{k}_transfer.mtx"
            save_matrix(os.path.join(outdir, p_name), lvl.p)
        entries.append({
            "level": k,
            "dim": lvl.a.n,
            "restriction_scale": lvl.c,
            "operator": a_name,
            "transfer": p_name,
        })
    manifest = os.path.join(outdir, f"{stem}_manifest.json")
    with open(manifest, "w") as f:
        json.dump({"num_levels": hier.num_levels, "coarse_mode": hier.coarse_mode,
                   "levels": entries}, f, indent=2)
        f.write("\n")
    return manifest
