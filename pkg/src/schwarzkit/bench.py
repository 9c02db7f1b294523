"""Experiment harness.

Expands flat key-value config files into a grid of single-cell
experiments (method row x coarse mode x accelerator), runs each cell
with a fixed-seed deterministic pipeline, and renders the results as a
pivoted ascii table or long-form csv.  Certification runs the theorem
condition checklist and the SPD certificate on a desk-scale copy of
each configured method.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from .fem import Hierarchy, build_hierarchy
from .krylov import SolveReport, StoppingRule, bicgstab_solve, pcg_solve, stationary_solve
from .problems import PROBLEMS
from .schwarz import (
    Decomposition,
    MgConfig,
    Work,
    build_decomposition,
    dd_action,
    mg_action,
)
from .smooth import SmootherSchedule, SubdomainSolverKind
from .verify import certify_spd, check_theorem_conditions

__all__ = [
    "ExperimentConfig",
    "TableRow",
    "build_problem",
    "run_experiment",
    "run_grid",
    "parse_config",
    "expand_grid",
    "emit_table",
    "certify_configuration",
    "ACCELERATOR_TITLES",
]

METHODS = ("mult_mg", "add_mg", "mult_dd", "add_dd", "exact")
ACCELERATORS = ("none", "cg", "bicgstab")
ACCELERATOR_TITLES = {"none": "UNACCEL", "cg": "CG", "bicgstab": "Bi-CGstab"}


@dataclass
class ExperimentConfig:
    """One grid cell: a preconditioner configuration plus outer solver.

    ``pre``/``post`` configure the multigrid schedules (additive MG uses
    only ``pre``); ``sweep`` and ``subdomain_solver`` configure the
    decomposition methods.  Unaccelerated additive runs use ``omega``;
    Krylov runs always apply the preconditioner with unit scaling.
    """

    problem: str
    method: str
    levels: int = 5
    coarse_mode: str = "galerkin"
    pre: str = "f"
    post: str = ""
    sweep: str = "forw_back"
    subdomain_solver: str = SubdomainSolverKind.EXACT
    accelerator: str = "none"
    omega: float = 0.45
    tol: float = 1e-10
    max_iterations: int = 100

    def __post_init__(self):
        if self.problem not in PROBLEMS:
            raise ValueError(f"unknown problem {self.problem!r}")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.coarse_mode not in ("galerkin", "discretized"):
            raise ValueError(f"unknown coarse mode {self.coarse_mode!r}")
        if self.accelerator not in ACCELERATORS:
            raise ValueError(f"unknown accelerator {self.accelerator!r}")
        if self.levels < 2:
            raise ValueError("levels must be at least 2")
        if not self.omega > 0.0:
            raise ValueError("omega must be positive")
        self.pre = SmootherSchedule(self.pre)
        self.post = SmootherSchedule(self.post)
        if self.subdomain_solver not in SubdomainSolverKind.ALL:
            raise ValueError(f"unknown subdomain solver {self.subdomain_solver!r}")

    def row_label(self) -> str:
        if self.method in ("mult_mg", "add_mg"):
            pre = str(self.pre) or "0"
            if self.method == "add_mg":
                return f"({pre})"
            return f"({pre},{str(self.post) or '0'})"
        if self.method == "mult_dd":
            return f"{self.subdomain_solver} {self.sweep}"
        if self.method == "add_dd":
            return self.subdomain_solver
        return "exact"


@dataclass
class TableRow:
    """Outcome of one cell, with enough echo to sort back into a table."""

    config: ExperimentConfig
    result: str
    iterations: int
    converged: bool
    reason: str
    work: float
    history: list[float] = field(default_factory=list)
    certification: str = ""
    note: str = ""


_PROBLEM_CACHE: dict[tuple, tuple] = {}


def build_problem(name: str, levels: int, coarse_mode: str):
    """Hierarchy, decomposition, right-hand side, and the exact discrete
    solution used as the error reference.  Cached per configuration."""
    key = (name, levels, coarse_mode)
    if key not in _PROBLEM_CACHE:
        if levels < 2:
            raise ValueError("levels must be at least 2")
        mesh, prob = PROBLEMS[name]()
        hier = build_hierarchy(mesh, levels, prob, coarse_mode)
        dec = build_decomposition(hier)
        a = hier.finest.a
        lu = scipy.sparse.linalg.splu(scipy.sparse.csc_matrix(a.to_scipy()))
        reference = lu.solve(hier.rhs)
        _PROBLEM_CACHE[key] = (hier, dec, np.array(hier.rhs), reference)
    return _PROBLEM_CACHE[key]


def _decomposition_for(hier: Hierarchy, solver: str) -> Decomposition:
    # the cached decomposition uses exact local solves; other solver
    # kinds share the subdomain index sets, so rebuild only the solver
    key = ("dec", id(hier), solver)
    if key not in _PROBLEM_CACHE:
        _PROBLEM_CACHE[key] = build_decomposition(hier, solver=solver)
    return _PROBLEM_CACHE[key]


def _action_for(cfg: ExperimentConfig, hier: Hierarchy, work: Work):
    if cfg.method in ("mult_mg", "add_mg"):
        mg = MgConfig(pre=cfg.pre, post=cfg.post, omega=cfg.omega)
        return mg_action(hier, mg, method=cfg.method, work=work)
    if cfg.method in ("mult_dd", "add_dd"):
        dec = _decomposition_for(hier, cfg.subdomain_solver)
        return dd_action(dec, sweep=cfg.sweep, method=cfg.method,
                         omega=cfg.omega, work=work)
    # exact inverse, for sanity rows: one application solves the system
    a = hier.finest.a
    lu = scipy.sparse.linalg.splu(scipy.sparse.csc_matrix(a.to_scipy()))
    return lambda r: lu.solve(r)


def _format_result(report: SolveReport, cfg: ExperimentConfig) -> str:
    if report.converged:
        return str(report.iterations)
    if report.reason == "divergence":
        return "DIV"
    if report.reason == "max_iterations":
        return f"≫{cfg.max_iterations}"
    return report.reason


def run_experiment(cfg: ExperimentConfig) -> TableRow:
    """Run one cell; failures become row annotations, never exceptions."""
    try:
        hier, _, rhs, reference = build_problem(cfg.problem, cfg.levels, cfg.coarse_mode)
        work = Work()
        action = _action_for(cfg, hier, work)
        a = hier.finest.a
        rule = StoppingRule(tol=cfg.tol, max_iterations=cfg.max_iterations,
                            reference=reference)
        if cfg.accelerator == "none":
            # only the additive sums are damped; multiplicative cycles and
            # the exact sanity row iterate undamped
            om = cfg.omega if cfg.method in ("add_mg", "add_dd") else 1.0
            report = stationary_solve(a, action, rhs, omega=om, rule=rule, work=work)
        elif cfg.accelerator == "cg":
            report = pcg_solve(a, action, rhs, rule=rule, work=work)
        else:
            report = bicgstab_solve(a, action, rhs, rule=rule, work=work)
    except (ValueError, RuntimeError) as exc:
        return TableRow(config=cfg, result="--", iterations=0, converged=False,
                        reason="error", work=0.0, note=str(exc))
    return TableRow(config=cfg, result=_format_result(report, cfg),
                    iterations=report.iterations, converged=report.converged,
                    reason=report.reason, work=work.flops,
                    history=list(report.history))


def certify_configuration(cfg: ExperimentConfig, levels: int = 3):
    """Theorem-condition checklist and SPD certificate for the method at
    desk scale (the configured problem rebuilt with few levels)."""
    levels = min(cfg.levels, levels)
    hier, _, _, _ = build_problem(cfg.problem, levels, cfg.coarse_mode)
    work = Work()
    if cfg.method in ("mult_mg", "add_mg"):
        mg = MgConfig(pre=cfg.pre, post=cfg.post, omega=cfg.omega)
        checklist = check_theorem_conditions(cfg.method, hierarchy=hier, cfg=mg)
        action = mg_action(hier, mg, method=cfg.method, work=work)
    elif cfg.method in ("mult_dd", "add_dd"):
        dec = _decomposition_for(hier, cfg.subdomain_solver)
        checklist = check_theorem_conditions(cfg.method, decomposition=dec,
                                             sweep=cfg.sweep)
        action = dd_action(dec, sweep=cfg.sweep, method=cfg.method,
                           omega=cfg.omega, work=work)
    else:
        raise ValueError(f"certification does not apply to method {cfg.method!r}")
    cert = certify_spd(lambda r: action.apply(r, omega=1.0), hier.finest.a.n)
    return checklist, cert


def run_grid(cfgs: list[ExperimentConfig], certify: bool = False) -> list[TableRow]:
    rows = [run_experiment(cfg) for cfg in cfgs]
    if certify:
        flags: dict[tuple, str] = {}
        for row in rows:
            cfg = row.config
            if cfg.method == "exact":
                continue
            key = (cfg.problem, cfg.method, cfg.coarse_mode, cfg.row_label())
            if key not in flags:
                try:
                    checklist, cert = certify_configuration(cfg)
                    flags[key] = (f"conditions={'pass' if checklist.all_passed else 'FAIL'}"
                                  f" spd={'pass' if cert.passed else 'FAIL'}")
                except (ValueError, RuntimeError) as exc:
                    flags[key] = f"error: {exc}"
            row.certification = flags[key]
    return rows


def parse_config(text: str) -> dict:
    """Flat ``key = value`` lines; '#' starts a comment; lists use commas.

    Keys: problem, method, levels, coarse_mode (one value or
    ``galerkin, discretized``), rows, accelerators, omega, tol,
    max_iterations.  Row syntax by method: ``pre:post`` for mult_mg
    (``0`` marks an empty schedule), a single schedule for add_mg,
    ``solver:sweep`` for mult_dd, a solver name for add_dd.
    """
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key in ("levels", "max_iterations"):
            out[key] = int(value)
        elif key in ("omega", "tol"):
            out[key] = float(value)
        elif key in ("rows", "accelerators", "coarse_mode"):
            out[key] = [v.strip() for v in value.split(",") if v.strip()]
        elif key in ("problem", "method"):
            out[key] = value
        else:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
    for required in ("problem", "method", "rows"):
        if required not in out:
            raise ValueError(f"config is missing the {required!r} key")
    return out


def _cell_config(parsed: dict, row: str, mode: str, accel: str) -> ExperimentConfig:
    kwargs = dict(problem=parsed["problem"], method=parsed["method"],
                  coarse_mode=mode, accelerator=accel)
    for key in ("levels", "omega", "tol", "max_iterations"):
        if key in parsed:
            kwargs[key] = parsed[key]
    method = parsed["method"]
    if method == "mult_mg":
        pre, _, post = row.partition(":")
        kwargs["pre"] = "" if pre == "0" else pre
        kwargs["post"] = "" if post == "0" else post
    elif method == "add_mg":
        kwargs["pre"] = "" if row == "0" else row
        kwargs["post"] = ""
    elif method == "mult_dd":
        solver, _, sweep = row.partition(":")
        kwargs["subdomain_solver"] = solver
        kwargs["sweep"] = sweep or "forw_back"
    elif method == "add_dd":
        kwargs["subdomain_solver"] = row
    return ExperimentConfig(**kwargs)


def expand_grid(parsed: dict) -> list[ExperimentConfig]:
    """Row-major cell order: rows, then coarse modes, then accelerators."""
    modes = parsed.get("coarse_mode", ["galerkin"])
    accels = parsed.get("accelerators", ["none"])
    cfgs = []
    for row in parsed["rows"]:
        for mode in modes:
            for accel in accels:
                cfgs.append(_cell_config(parsed, row, mode, accel))
    return cfgs


def _ordered_unique(items):
    seen = {}
    for item in items:
        seen.setdefault(item, None)
    return list(seen)


def emit_table(rows: list[TableRow], format: str = "ascii") -> str:
    """Pivot: one line per method row, one column per accelerator.

    With two coarse modes the second appears parenthesized after the
    first, matching the paired presentation of the source experiments.
    csv output is long form, one line per cell.
    """
    if format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["problem", "levels", "coarse_mode", "method", "row",
                         "accelerator", "omega", "tol", "max_iterations",
                         "result", "iterations", "converged", "reason",
                         "work", "certification", "note"])
        for row in rows:
            c = row.config
            writer.writerow([c.problem, c.levels, c.coarse_mode, c.method,
                             c.row_label(), c.accelerator, repr(c.omega),
                             repr(c.tol), c.max_iterations, row.result,
                             row.iterations, row.converged, row.reason,
                             repr(row.work), row.certification, row.note])
        return buf.getvalue()
    if format != "ascii":
        raise ValueError(f"unknown table format {format!r}")

    labels = _ordered_unique(r.config.row_label() for r in rows)
    modes = _ordered_unique(r.config.coarse_mode for r in rows)
    accels = _ordered_unique(r.config.accelerator for r in rows)
    cells: dict[tuple, TableRow] = {}
    for row in rows:
        cells[(row.config.row_label(), row.config.coarse_mode,
               row.config.accelerator)] = row

    def cell_text(label, accel):
        parts = []
        for k, mode in enumerate(modes):
            row = cells.get((label, mode, accel))
            if row is None:
                continue
            parts.append(row.result if k == 0 else f"({row.result})")
        return " ".join(parts) if parts else "--"

    head = rows[0].config if rows else None
    lines = []
    if head is not None:
        lines.append(f"problem={head.problem} method={head.method} "
                     f"levels={head.levels} coarse_mode={','.join(modes)} "
                     f"omega={head.omega} tol={head.tol} "
                     f"max_iterations={head.max_iterations}")
    titles = [ACCELERATOR_TITLES.get(a, a) for a in accels]
    widths = [max(len("row"), *(len(l) for l in labels))] if labels else [len("row")]
    for j, accel in enumerate(accels):
        body = max((len(cell_text(l, accel)) for l in labels), default=0)
        widths.append(max(len(titles[j]), body))
    header = "  ".join(t.ljust(w) for t, w in zip(["row"] + titles, widths))
    lines.append(header)
    lines.append("-" * len(header))
    for label in labels:
        out = [label.ljust(widths[0])]
        for j, accel in enumerate(accels):
            out.append(cell_text(label, accel).ljust(widths[j + 1]))
        lines.append("  ".join(out).rstrip())
    certs = []
    for label in labels:
        for mode in modes:
            key = (label, mode, accels[0])
            if key in cells and cells[key].certification:
                tag = f"{label} [{mode}]" if len(modes) > 1 else label
                certs.append((tag, cells[key].certification))
    if certs:
        lines.append("")
        lines.append("certification (desk-scale copies):")
        for tag, text in certs:
            lines.append(f"  {tag}: {text}")
    notes = [(r.config.row_label(), ACCELERATOR_TITLES.get(r.config.accelerator),
              r.note) for r in rows if r.note]
    if notes:
        lines.append("")
        lines.append("annotations:")
        for label, accel, note in notes:
            lines.append(f"  {label} [{accel}]: {note}")
    return "\n".join(lines) + "\n"
