"""Command line entry points.

``run`` executes a config grid and prints the table; with ``--outdir``
the table is written to a file and convergence figures are rendered
alongside it.  ``certify`` skips the solves and reports only the
theorem-condition checklists and SPD certificates.  Exit status is 0
when everything asserted passed, 1 otherwise.
"""

from __future__ import annotations

import argparse
import os
import sys

from .bench import (
    certify_configuration,
    emit_table,
    expand_grid,
    parse_config,
    run_grid,
)

__all__ = ["main"]


def _load_grid(path: str):
    with open(path, "r", encoding="utf-8") as fh:
        parsed = parse_config(fh.read())
    return parsed, expand_grid(parsed)


def _cmd_run(args) -> int:
    parsed, cfgs = _load_grid(args.config)
    rows = run_grid(cfgs, certify=args.certify)
    table = emit_table(rows, format=args.format)
    if args.outdir:
        os.makedirs(args.outdir, exist_ok=True)
        stem = os.path.splitext(os.path.basename(args.config))[0]
        ext = "csv" if args.format == "csv" else "txt"
        table_path = os.path.join(args.outdir, f"{stem}.{ext}")
        with open(table_path, "w", encoding="utf-8") as fh:
            fh.write(table)
        from .plots import render_history_figures

        figures = render_history_figures(rows, args.outdir, stem)
        print(table_path)
        for path in figures:
            print(path)
    else:
        sys.stdout.write(table)
    if args.certify:
        ok = all("FAIL" not in r.certification and "error" not in r.certification
                 for r in rows if r.certification)
        return 0 if ok else 1
    return 0


def _cmd_certify(args) -> int:
    parsed, cfgs = _load_grid(args.config)
    seen = set()
    all_ok = True
    for cfg in cfgs:
        key = (cfg.problem, cfg.method, cfg.coarse_mode, cfg.row_label())
        if key in seen or cfg.method == "exact":
            continue
        seen.add(key)
        tag = f"{cfg.problem} {cfg.method} {cfg.row_label()} [{cfg.coarse_mode}]"
        try:
            checklist, cert = certify_configuration(cfg)
        except (ValueError, RuntimeError) as exc:
            print(f"{tag}: error: {exc}")
            all_ok = False
            continue
        ok = checklist.all_passed and cert.passed
        all_ok = all_ok and ok
        print(f"{tag}: {'PASS' if ok else 'FAIL'}")
        print(checklist.to_text())
        print(f"  spd: passed={cert.passed} mode={cert.mode} "
              f"symmetry_defect={cert.symmetry_defect:.3e} min_eig={cert.min_eig:.3e}")
    return 0 if all_ok else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="schwarzkit",
        description="Run and certify Schwarz preconditioner experiment grids.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a config grid and print its table")
    p_run.add_argument("--config", required=True, help="grid config file")
    p_run.add_argument("--format", choices=["ascii", "csv"], default="ascii")
    p_run.add_argument("--certify", action="store_true",
                       help="attach desk-scale certification flags to the rows")
    p_run.add_argument("--outdir", default=None,
                       help="write the table and convergence figures here")
    p_run.set_defaults(fn=_cmd_run)

    p_cert = sub.add_parser("certify",
                            help="run only the condition checklists and SPD certificates")
    p_cert.add_argument("--config", required=True, help="grid config file")
    p_cert.set_defaults(fn=_cmd_certify)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
