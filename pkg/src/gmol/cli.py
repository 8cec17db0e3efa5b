"""Command-line front end.

    gmol run [--config FILE] [--mode M] [--epsilon E] [--prox-k K] [--lines N]
             [--subdomains N1] [--paper-compat] [--out-dir DIR]
    gmol diff A.csv B.csv [--rel-tol R] [--abs-tol A]
    gmol reference {plain,proximal,hyper} [-o FILE]
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .runner import EXIT_CONFIG, EXIT_GATE_FAILED, EXIT_OK, execute
from .tables import REFERENCE_TABLES, TableError, diff_tables, format_table, reference_table

OUT_ENV = "GMOL_OUT_DIR"
DEFAULT_OUT = "gmol-out"


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gmol", description="Method-of-lines solver for "
                                "eps*lap(u) + g(u) + f = 0 on annuli.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a solve described by a JSON config and flags")
    r.add_argument("--config", type=Path)
    r.add_argument("--mode", choices=["plain", "proximal", "hyper", "oracle", "compare"])
    r.add_argument("--epsilon", type=float)
    r.add_argument("--prox-k", type=float, dest="prox_k")
    r.add_argument("--lines", type=int, help="N, intervals per domain or sub-domain")
    r.add_argument("--subdomains", type=int, help="N1 for hyper mode")
    r.add_argument("--paper-compat", action="store_true", default=None, dest="paper_compat",
                   help="reproduce the published program's grading and iteration counts")
    r.add_argument("--theta-points", type=int, dest="theta_points")
    r.add_argument("--outer", type=float, help="constant outer boundary value used for evaluation")
    r.add_argument("--reference", choices=sorted(REFERENCE_TABLES),
                   help="gate the coefficient table against a shipped reference table")
    r.add_argument("--max-residual", type=float, dest="max_residual")
    r.add_argument("--out-dir", type=Path, dest="out_dir",
                   help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")

    d = sub.add_parser("diff", help="compare two coefficient tables")
    d.add_argument("a", type=Path)
    d.add_argument("b", type=Path)
    d.add_argument("--rel-tol", type=float, default=1e-3)
    d.add_argument("--abs-tol", type=float, default=0.0)
    d.add_argument("--keys", choices=["union", "a", "both"], default="union")
    d.add_argument("--json", action="store_true", help="print the report as JSON")

    t = sub.add_parser("reference", help="print a shipped reference table")
    t.add_argument("name", choices=sorted(REFERENCE_TABLES))
    t.add_argument("-o", "--output", type=Path)
    return p


_OVERRIDES = {
    "mode": "mode",
    "epsilon": "problem.epsilon",
    "prox_k": "proximal.K",
    "lines": "discretization.lines",
    "subdomains": "discretization.subdomains",
    "paper_compat": "convergence.paper_compat",
    "theta_points": "output.theta_points",
    "outer": "problem.outer",
    "reference": "gates.reference",
    "max_residual": "gates.max_residual",
}


def _cmd_run(args) -> int:
    overrides = {key: getattr(args, attr) for attr, key in _OVERRIDES.items()
                 if getattr(args, attr) is not None}
    try:
        cfg = load_config(args.config, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out_dir or cfg.output.out_dir or os.environ.get(OUT_ENV) or DEFAULT_OUT
    result = execute(cfg, out)
    gates = result.summary.get("gates", {})
    for name, ok in sorted(gates.items()):
        print(f"gate {name}: {'pass' if ok else 'FAIL'}")
    if "residual" in result.summary:
        print(f"residual sup {result.summary['residual']['sup']:.3e}")
    if "error" in result.summary:
        print(f"error: {result.summary['error']}", file=sys.stderr)
    print(f"wrote {len(result.artifacts)} files to {out}")
    return result.exit_code


def _cmd_diff(args) -> int:
    try:
        rep = diff_tables(args.a, args.b, args.rel_tol, args.abs_tol, keys=args.keys)
    except (TableError, OSError) as exc:
        print(f"table error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(json.dumps(rep.to_dict(), indent=2) if args.json else rep.summary())
    return EXIT_OK if rep.passed else EXIT_GATE_FAILED


def _cmd_reference(args) -> int:
    rows = [(n, sig, c) for (n, sig), c in sorted(reference_table(args.name).items())]
    text = format_table(rows)
    if args.output:
        args.output.write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return {"run": _cmd_run, "diff": _cmd_diff, "reference": _cmd_reference}[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
