"""Multilevel and overlapping-subdomain preconditioners with a
certification layer and an experiment harness.

The package splits into matrix kernels (linalg), finite element
hierarchies (fem), Gauss-Seidel schedules (smooth), the four
preconditioner actions (schwarz), accelerated outer solvers (krylov),
contraction and symmetry certification (verify), and the table-driving
benchmark harness (bench) with its model problems (problems).
"""

from .linalg import (
    InnerProduct,
    SparseMatrix,
    a_adjoint,
    a_norm_of_vector,
    dense_solve,
    inner,
    load_matrix,
    load_vector,
    materialize,
    save_matrix,
    save_vector,
    spd_smoke_test,
    spmv,
)
from .fem import (
    Hierarchy,
    Level,
    Mesh,
    ProblemSpec,
    assemble,
    build_hierarchy,
    build_prolongation,
    eliminate_dirichlet,
    export_hierarchy,
    galerkin_coarsen,
    load_mesh,
    save_mesh,
    uniform_refine,
)
from .smooth import (
    SmootherSchedule,
    SubdomainSolverKind,
    adjoint_schedule,
    apply_schedule,
    gs_sweep,
)
from .schwarz import (
    Decomposition,
    MgConfig,
    PreconditionerAction,
    Work,
    apply_add_dd,
    apply_add_mg,
    apply_mult_dd,
    apply_mult_mg,
    build_decomposition,
    dd_action,
    mg_action,
)
from .krylov import SolveReport, StoppingRule, bicgstab_solve, pcg_solve, stationary_solve
from .verify import (
    ConditionChecklist,
    SpdCertificate,
    a_norm,
    certify_spd,
    check_theorem_conditions,
    condition_estimate,
    penalty_report,
    spectral_radius,
)
from .problems import lshape_problem, pbe_problem, unit_square_problem
from .bench import ExperimentConfig, TableRow, emit_table, expand_grid, parse_config, run_grid

__version__ = "0.1.0"

__all__ = [
    "InnerProduct", "SparseMatrix", "a_adjoint", "a_norm_of_vector", "dense_solve",
    "inner", "load_matrix", "load_vector", "materialize", "save_matrix", "save_vector",
    "spd_smoke_test", "spmv",
    "Hierarchy", "Level", "Mesh", "ProblemSpec", "assemble", "build_hierarchy",
    "build_prolongation", "eliminate_dirichlet", "export_hierarchy", "galerkin_coarsen",
    "load_mesh", "save_mesh", "uniform_refine",
    "SmootherSchedule", "SubdomainSolverKind", "adjoint_schedule", "apply_schedule",
    "gs_sweep",
    "Decomposition", "MgConfig", "PreconditionerAction", "Work", "apply_add_dd",
    "apply_add_mg", "apply_mult_dd", "apply_mult_mg", "build_decomposition",
    "dd_action", "mg_action",
    "SolveReport", "StoppingRule", "bicgstab_solve", "pcg_solve", "stationary_solve",
    "ConditionChecklist", "SpdCertificate", "a_norm", "certify_spd",
    "check_theorem_conditions", "condition_estimate", "penalty_report", "spectral_radius",
    "lshape_problem", "pbe_problem", "unit_square_problem",
    "ExperimentConfig", "TableRow", "emit_table", "expand_grid", "parse_config", "run_grid",
]
