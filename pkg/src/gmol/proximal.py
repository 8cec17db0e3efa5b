"""Outer proximal loop: re-solve with ``-K (u - anchor) d^2/eps`` until the anchor stops moving."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

from .operator import LINEAR_EXACT, LISTING, OUTER, GridSpec, ProblemSpec, ProximalConfig
from .series import DEFAULT_POLICY, TruncatedSeries, TruncationPolicy, max_abs_diff
from .sweep import (COLLAPSE_AFTER, COLLAPSE_BEFORE, ConvergenceConfig, ConvergenceError,
                    SolutionBundle, backward_substitute, forward_sweep)

LISTING_OUTER_ITERATIONS = 179


@dataclass
class ProximalState:
    anchors: list[TruncatedSeries]
    iteration: int = 0
    history: list[float] = field(default_factory=list)
    probes: list[float] = field(default_factory=list)
    previous: list[TruncatedSeries] | None = None

    def log_rows(self) -> list[tuple[int, float, float]]:
        return [(i + 2, r, p) for i, (r, p) in enumerate(zip(self.history, self.probes[1:]))]

    def log_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "outer_residual", "mid_line_probe"])
        for it, r, p in self.log_rows():
            w.writerow([it, repr(r), repr(p)])
        return buf.getvalue()


def outer_residual(state: ProximalState) -> float:
    """Largest coefficient change between the last two anchors."""
    if state.previous is None or state.iteration < 2:
        raise ValueError("outer residual needs at least two outer iterations")
    return max((max_abs_diff(a, b) for a, b in zip(state.anchors, state.previous)), default=0.0)


@dataclass
class ProximalResult:
    bundle: SolutionBundle
    state: ProximalState
    converged: bool


def proximal_solve(spec: ProblemSpec, N: int, prox: ProximalConfig, *, compat: bool = False,
                   cfg: ConvergenceConfig | None = None,
                   policy: TruncationPolicy = DEFAULT_POLICY, strict: bool = False,
                   outer_iterations: int | None = None) -> ProximalResult:
    """Run sweeps anchored at the previous solution, starting from a zero anchor.

    In compat mode the loop runs the listing's fixed count of outer passes;
    otherwise it stops once :func:`outer_residual` drops to
    ``prox.outer_tolerance``.
    """
    grid = GridSpec.plain(N)
    if cfg is None:
        cfg = ConvergenceConfig.listing_probe() if compat else ConvergenceConfig()
    if outer_iterations is None:
        outer_iterations = LISTING_OUTER_ITERATIONS if compat else prox.outer_iterations
    grading = LISTING if compat else LINEAR_EXACT
    collapse = COLLAPSE_BEFORE if compat else COLLAPSE_AFTER
    zero = TruncatedSeries.zero(policy)
    state = ProximalState([zero] * (N + 1))
    inner = spec.inner_series(policy)
    terminal = TruncatedSeries.symbol(OUTER, policy=policy)
    bundle = None
    converged = False
    for _ in range(outer_iterations):
        anchors = {n: state.anchors[n] for n in range(1, N)}
        sweep = forward_sweep(spec, grid, inner, cfg, grading=grading, prox=prox, anchors=anchors)
        bundle = backward_substitute(sweep, terminal, collapse=collapse)
        state.previous, state.anchors = state.anchors, list(bundle.lines)
        state.iteration += 1
        state.probes.append(bundle.lines[N // 2].constant_term())
        if state.iteration >= 2:
            state.history.append(outer_residual(state))
            if not compat and state.history[-1] <= prox.outer_tolerance:
                converged = True
                break
    if compat:
        converged = True
    if strict and not converged:
        raise ConvergenceError(f"proximal loop did not converge in {outer_iterations} passes")
    return ProximalResult(bundle, state, converged)
