"""Benchmark problem definitions.

Two problems exercise the preconditioners.  The first is a molecular
electrostatics surrogate on the unit square: a dielectric "molecule"
with interior point charges sits inside a high-permittivity solvent
with a screening reaction term, and the material interface crosses
coarse-mesh edges so that directly assembled coarse operators
misrepresent the fine problem.  The second is the classic re-entrant
corner problem on an L-shaped domain with boundary data from the exact
corner singularity, meshed with a layered layout whose elements shrink
toward the corner.
"""

from __future__ import annotations

import numpy as np

from .fem import Mesh, ProblemSpec

__all__ = [
    "unit_square",
    "unit_square_problem",
    "pbe_geometry",
    "pbe_problem",
    "lshape_geometry",
    "lshape_problem",
    "corner_singularity",
    "inside_molecule",
    "PROBLEMS",
]

# molecule: regular 12-gon, deliberately not aligned with any mesh line;
# the placement makes two coarse-triangle barycenters sample the interior
# while most of their area lies in the solvent, so directly assembled
# coarse operators are visibly too soft there
MOLECULE_CENTER = (0.42, 0.33)
MOLECULE_RADIUS = 0.28
EPS_MOLECULE = 1.0
EPS_SOLVENT = 80.0
SCREENING_SQ = 1.0
CHARGES = [((0.36, 0.28), 1.0), ((0.46, 0.42), 1.0), ((0.50, 0.28), 1.0)]


def unit_square(k: int) -> Mesh:
    """Uniform k-by-k right-triangle mesh of the unit square."""
    xs = np.linspace(0.0, 1.0, k + 1)
    verts = np.array([(x, y) for y in xs for x in xs])
    tris = []
    for j in range(k):
        for i in range(k):
            a = j * (k + 1) + i
            b, c, d = a + 1, a + (k + 1), a + (k + 1) + 1
            tris.append((a, b, d))
            tris.append((a, d, c))
    bnd = ((verts[:, 0] == 0.0) | (verts[:, 0] == 1.0)
           | (verts[:, 1] == 0.0) | (verts[:, 1] == 1.0))
    return Mesh(vertices=verts, triangles=np.array(tris), boundary=bnd).validate()


def unit_square_problem(k: int = 4) -> tuple[Mesh, ProblemSpec]:
    """Constant-coefficient diffusion with a centered unit source and a
    zero boundary; the desk-scale certification workhorse."""
    prob = ProblemSpec(
        diffusion=lambda x, y: 1.0,
        reaction=lambda x, y: 0.0,
        sources=[((0.5, 0.5), 1.0)],
        dirichlet=lambda x, y: 0.0,
    )
    return unit_square(k), prob


def inside_molecule(x: float, y: float) -> bool:
    """Membership in the regular 12-gon molecule region."""
    dx = x - MOLECULE_CENTER[0]
    dy = y - MOLECULE_CENTER[1]
    r = float(np.hypot(dx, dy))
    if r < 1e-12:
        return True
    sector = np.pi / 6.0
    theta = float(np.arctan2(dy, dx)) % sector
    edge = MOLECULE_RADIUS * np.cos(sector / 2.0) / np.cos(theta - sector / 2.0)
    return r < edge


def pbe_geometry() -> Mesh:
    """Ten-triangle unit-square mesh whose interior vertices sit on the
    horizontal midline, so the molecule interface cuts through coarse
    elements rather than following their edges."""
    verts = np.array([
        (0.0, 0.0), (0.5, 0.0), (1.0, 0.0),    # bottom edge
        (1.0, 1.0), (0.5, 1.0), (0.0, 1.0),    # top edge
        (0.25, 0.5), (0.5, 0.5), (0.75, 0.5),  # midline
    ])
    tris = np.array([
        (0, 1, 6), (1, 7, 6), (1, 2, 7), (2, 8, 7), (2, 3, 8),
        (3, 4, 8), (4, 7, 8), (4, 5, 7), (5, 6, 7), (5, 0, 6),
    ])
    bnd = np.array([True] * 6 + [False] * 3)
    return Mesh(vertices=verts, triangles=tris, boundary=bnd).validate()


def pbe_problem() -> tuple[Mesh, ProblemSpec]:
    """Linearized molecular electrostatics surrogate.

    Low permittivity and no screening inside the molecule, high
    permittivity and a screening reaction outside, three unit point
    charges in the interior, zero Dirichlet far-field boundary.
    """
    prob = ProblemSpec(
        diffusion=lambda x, y: EPS_MOLECULE if inside_molecule(x, y) else EPS_SOLVENT,
        reaction=lambda x, y: 0.0 if inside_molecule(x, y) else SCREENING_SQ,
        sources=list(CHARGES),
        dirichlet=lambda x, y: 0.0,
    )
    return pbe_geometry(), prob


def corner_singularity(x: float, y: float) -> float:
    """Harmonic function sqrt(r) sin(theta/2) with the angle measured
    counterclockwise from the positive x axis into [0, 2 pi)."""
    r = float(np.hypot(x, y))
    theta = float(np.arctan2(y, x))
    if theta < 0.0:
        theta += 2.0 * np.pi
    return float(np.sqrt(r) * np.sin(0.5 * theta))


def lshape_geometry() -> Mesh:
    """Graded 36-triangle mesh of the L-shaped domain.

    Each quadrant square carries the same three-layer pattern, rotated
    into place: a criss-cross split of the quarter-size square at the
    re-entrant corner, then two L-shaped annuli that double the element
    size per layer.  All elements are right isosceles up to the annulus
    bridges, and the layout is symmetric under the reflection that
    swaps the two legs, (x, y) -> (-y, -x).
    """
    q = 0.25
    h = 0.5
    pattern = [
        # criss-cross of [0, 1/4]^2 around its center
        ((q / 2, q / 2), (0, 0), (q, 0)),
        ((q / 2, q / 2), (q, 0), (q, q)),
        ((q / 2, q / 2), (q, q), (0, q)),
        ((q / 2, q / 2), (0, q), (0, 0)),
        # annulus from scale 1/4 to 1/2
        ((q, 0), (h, 0), (q, q)),
        ((h, 0), (h, h), (q, q)),
        ((q, q), (h, h), (0, h)),
        ((q, q), (0, h), (0, q)),
        # annulus from scale 1/2 to 1
        ((h, 0), (1, 0), (h, h)),
        ((1, 0), (1, 1), (h, h)),
        ((h, h), (1, 1), (0, 1)),
        ((h, h), (0, 1), (0, h)),
    ]

    def rot(p):
        return (-p[1], p[0])

    index = {}
    verts = []
    tris = []
    for turn in range(3):
        for tri in pattern:
            ids = []
            for p in tri:
                for _ in range(turn):
                    p = rot(p)
                ids.append(index.setdefault(p, len(verts)))
                if ids[-1] == len(verts):
                    verts.append(p)
            tris.append(tuple(ids))

    varr = np.array(verts)
    tol = 1e-12
    x, y = varr[:, 0], varr[:, 1]
    bnd = ((np.abs(np.abs(x) - 1.0) < tol) | (np.abs(np.abs(y) - 1.0) < tol)
           | ((np.abs(x) < tol) & (y < tol)) | ((np.abs(y) < tol) & (x > -tol)))
    return Mesh(vertices=varr, triangles=np.array(tris), boundary=bnd).validate()


def lshape_problem() -> tuple[Mesh, ProblemSpec]:
    """Laplace on the L-domain with boundary values from the exact
    corner singularity; the discrete solution inherits the unbounded
    gradient at the origin."""
    prob = ProblemSpec(
        diffusion=lambda x, y: 1.0,
        reaction=lambda x, y: 0.0,
        sources=[],
        dirichlet=corner_singularity,
    )
    return lshape_geometry(), prob


PROBLEMS = {"pbe2d": pbe_problem, "lshape": lshape_problem}
