"""Execute a :class:`RunConfig` and write its artifacts."""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .boundary import theta_grid
from .config import RunConfig, to_boundary
from .hyperfd import DecompositionSpec, hyper_solve
from .operator import OUTER, GridSpec, ProximalConfig, discrete_residual
from .oracle import OracleError, compare, fd2d_solve
from .proximal import proximal_solve
from .sweep import ConvergenceConfig, ConvergenceError, general_shape_solve, plain_solve
from .tables import diff_tables, format_table, reference_table, series_rows, table_json

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_GATE_FAILED = 1
EXIT_CONFIG = 2
EXIT_DIVERGED = 3


@dataclass
class RunResult:
    exit_code: int
    summary: dict
    artifacts: list[Path] = field(default_factory=list)


class _Writer:
    def __init__(self, out_dir: Path, formats):
        self.out = out_dir
        self.formats = set(formats)
        self.paths: list[Path] = []
        out_dir.mkdir(parents=True, exist_ok=True)

    def text(self, name: str, body: str, kind: str | None = None):
        if kind is not None and kind not in self.formats:
            return
        p = self.out / name
        p.write_text(body)
        self.paths.append(p)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])
    return buf.getvalue()


def _evaluation_csv(ts, theta, values) -> str:
    rows = ((n, ts[n], theta[j], values[n, j]) for n in range(len(ts)) for j in range(len(theta)))
    return _csv(["line_id", "t", "theta", "u"], rows)


def _cfg(cfg: RunConfig) -> ConvergenceConfig | None:
    if cfg.convergence.paper_compat:
        return None
    c = cfg.convergence
    return ConvergenceConfig(tolerance=c.tolerance, max_iterations=c.max_iterations)


def _solve(cfg: RunConfig, spec, policy, w: _Writer, summary: dict):
    """Run the configured line solver; returns the bundle."""
    compat = cfg.convergence.paper_compat
    mode = cfg.mode if cfg.mode != "compare" else cfg.oracle.solver
    N = cfg.discretization.lines
    if mode == "plain":
        return plain_solve(spec, N, compat=compat, cfg=_cfg(cfg), policy=policy)
    if mode == "proximal":
        p = cfg.proximal
        res = proximal_solve(spec, N, ProximalConfig(p.K, p.outer_iterations, p.outer_tolerance),
                             compat=compat, cfg=_cfg(cfg), policy=policy, strict=not compat)
        w.text("proximal_log.csv", res.state.log_csv(), "csv")
        summary["outer_iterations"] = res.state.iteration
        summary["outer_residual"] = res.state.history[-1] if res.state.history else None
        return res.bundle
    c = cfg.convergence
    if compat:
        dec = DecompositionSpec.listing(cfg.discretization.subdomains, N)
    else:
        dec = DecompositionSpec(cfg.discretization.subdomains, N, node_method=c.node_method,
                                node_tolerance=c.node_tolerance, node_max_sweeps=c.node_max_sweeps)
    res = hyper_solve(spec, dec, compat=compat, cfg=_cfg(cfg), policy=policy)
    nodes = {k: res.nodes.values[k] for k in range(1, dec.N1)}
    w.text("nodes.csv", format_table(series_rows(nodes)), "csv")
    w.text("nodes.json", table_json(nodes), "json")
    w.text("node_log.csv", res.nodes.log_csv(), "csv")
    summary["node_sweeps"] = res.nodes.sweeps
    summary["linearization_passes"] = res.passes
    summary["_nodes_table"] = {(n, m.signature()): c for n, s in nodes.items() for m, c in s.items()}
    return res.bundle


def execute(cfg: RunConfig, out_dir: str | Path) -> RunResult:
    """Run the pipeline; solver failures map to exit code 3."""
    w = _Writer(Path(out_dir), cfg.output.formats)
    summary: dict = {"mode": cfg.mode, "paper_compat": cfg.convergence.paper_compat,
                     "config": cfg.model_dump(mode="json")}
    gates: dict[str, bool] = {}
    try:
        _execute(cfg, w, summary, gates)
    except (ConvergenceError, OracleError, FloatingPointError) as exc:
        log.error("solver diverged: %s", exc)
        summary["error"] = str(exc)
        summary["gates"] = gates
        w.text("summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
        return RunResult(EXIT_DIVERGED, summary, w.paths)
    summary["gates"] = gates
    summary["passed"] = all(gates.values())
    w.text("summary.json", json.dumps(summary, indent=2, sort_keys=True, default=float) + "\n")
    return RunResult(EXIT_OK if summary["passed"] else EXIT_GATE_FAILED, summary, w.paths)


def _execute(cfg: RunConfig, w: _Writer, summary: dict, gates: dict):
    spec = cfg.problem.spec()
    policy = cfg.discretization.policy()
    uf = to_boundary(cfg.problem.outer)
    bindings = {OUTER: uf}
    M = cfg.output.theta_points
    theta = theta_grid(M)

    if cfg.mode == "oracle":
        o = cfg.oracle
        Mr = o.radial_intervals or cfg.discretization.lines
        fld = fd2d_solve(spec, Mr, o.theta_points, uf, spec.inner, stencil=o.stencil)
        w.text("field.csv", fld.to_csv(), "csv")
        w.text("field.json", fld.metadata_json() + "\n", "json")
        summary["oracle"] = fld.metadata()
        mid = fld.at(1.5)
        summary["mid_circle_mean"] = float(np.mean(mid))
        if cfg.gates.max_residual is not None:
            gates["residual"] = fld.residual <= cfg.gates.max_residual
        return

    if spec.shape.mode == "general":
        sb = general_shape_solve(spec, cfg.discretization.lines, M,
                                 compat=cfg.convergence.paper_compat, cfg=_cfg(cfg), policy=policy)
        vals = sb.evaluate(bindings)
        grid = GridSpec.plain(cfg.discretization.lines)
        res = discrete_residual(vals, spec, grid, sb.theta)
        w.text("evaluation.csv", _evaluation_csv(grid.ts, sb.theta, vals), "csv")
        summary["residual"] = {"sup": res.sup, "l2": res.l2}
        if cfg.gates.max_residual is not None:
            gates["residual"] = res.sup <= cfg.gates.max_residual
        return

    bundle = _solve(cfg, spec, policy, w, summary)
    nodes_table = summary.pop("_nodes_table", None)
    lines = {n: bundle.lines[n] for n in range(1, bundle.N)}
    table_rows = series_rows(lines)
    w.text("coefficients.csv", format_table(table_rows), "csv")
    w.text("coefficients.json", table_json(lines), "json")
    vals = bundle.evaluate(bindings, theta)
    w.text("evaluation.csv", _evaluation_csv(bundle.grid.ts, theta, vals), "csv")
    res = discrete_residual(vals, spec, bundle.grid, theta)
    w.text("residual.csv", _csv(["line_id", "t", "sup", "l2"],
                                ((n, bundle.grid.t(n), res.line_sup[n - 1],
                                  float(np.sqrt(np.mean(res.per_line[n - 1] ** 2))))
                                 for n in range(1, bundle.N))), "csv")
    summary["residual"] = {"sup": res.sup, "l2": res.l2}
    summary["lines"] = bundle.N
    if cfg.gates.max_residual is not None:
        gates["residual"] = res.sup <= cfg.gates.max_residual
    if cfg.gates.reference is not None:
        ref = reference_table(cfg.gates.reference)
        mine = nodes_table if nodes_table is not None else \
            {(n, sig): c for n, sig, c in table_rows}
        rep = diff_tables(ref, mine, cfg.gates.reference_rel_tol, cfg.gates.reference_abs_tol,
                          keys="a")
        summary["reference_diff"] = rep.to_dict()
        gates["reference"] = rep.passed

    if cfg.mode == "compare":
        o = cfg.oracle
        fld = fd2d_solve(spec, o.radial_intervals or bundle.N, o.theta_points, uf, spec.inner,
                         stencil=o.stencil)
        t_range = None
        if o.solver == "hyper" and o.exclude_boundary_subdomains:
            N1 = cfg.discretization.subdomains
            t_range = (1.0 + 1.0 / N1, 2.0 - 1.0 / N1)
        rep = compare(fld, bundle, bindings, tolerance=cfg.gates.max_oracle_error, t_range=t_range)
        w.text("compare.csv", _csv(["t", "sup", "l2"], zip(rep.t, rep.line_sup, rep.line_l2)), "csv")
        summary["oracle"] = fld.metadata()
        summary["compare"] = rep.to_dict()
        if rep.passed is not None:
            gates["oracle"] = rep.passed
