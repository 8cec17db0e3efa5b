"""Forward contraction sweep, backward substitution and the fixed-point iterator."""

from __future__ import annotations

import statistics
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .boundary import theta_grid
from .operator import (LINEAR_EXACT, LISTING, OUTER, Coefficients, GridSpec, Linearization,
                       ProblemSpec,
                       ProximalConfig, assemble_T_plain, assemble_T_proximal)
from .series import (DEFAULT_POLICY, Monomial, TruncatedSeries, TruncationPolicy, evaluate,
                     max_abs_diff, substitute)

PROBE = "probe"
COEFFICIENT = "coefficient"


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, report: "ConvergenceReport | None" = None):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class ConvergenceConfig:
    """Stopping rule for :func:`fixed_point`.

    ``probe`` compares successive values of the iterate with every symbol at
    zero and the step marker at one, starting from ``probe_start``.
    ``coefficient`` compares successive iterates coefficient-wise.  When
    ``fixed_iterations`` is set the map is applied exactly that many times.
    """

    mode: str = COEFFICIENT
    tolerance: float = 1e-8
    max_iterations: int = 200
    strict: bool = True
    fixed_iterations: int | None = None
    probe_start: float = 5.0

    def __post_init__(self):
        if self.mode not in (PROBE, COEFFICIENT):
            raise ValueError(f"unknown convergence mode {self.mode!r}")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.fixed_iterations is not None and self.fixed_iterations < 1:
            raise ValueError("fixed_iterations must be at least 1")

    @classmethod
    def listing_probe(cls) -> "ConvergenceConfig":
        return cls(mode=PROBE, tolerance=1e-4, max_iterations=200, strict=False)

    @classmethod
    def listing_fixed(cls, count: int) -> "ConvergenceConfig":
        return cls(mode=COEFFICIENT, fixed_iterations=count, strict=False)


@dataclass
class ConvergenceReport:
    iterations: int
    residual: float
    converged: bool
    contraction_ratio: float | None = None
    discarded: float = 0.0

    def to_dict(self) -> dict:
        return {"iterations": self.iterations, "residual": self.residual,
                "converged": self.converged, "contraction_ratio": self.contraction_ratio,
                "discarded": self.discarded}


def _ratio(deltas: Sequence[float]) -> float | None:
    ratios = [b / a for a, b in zip(deltas, deltas[1:]) if a > 0]
    return statistics.median(ratios) if ratios else None


def fixed_point(fmap: Callable[[TruncatedSeries], TruncatedSeries], init: TruncatedSeries,
                cfg: ConvergenceConfig) -> tuple[TruncatedSeries, ConvergenceReport]:
    """Iterate ``x <- fmap(x)`` from ``init`` until ``cfg`` says stop."""
    x = init
    deltas: list[float] = []
    probe_prev = cfg.probe_start
    limit = cfg.fixed_iterations or cfg.max_iterations
    res = float("inf")
    for it in range(1, limit + 1):
        y = fmap(x)
        deltas.append(max_abs_diff(x, y))
        if cfg.mode == PROBE:
            probe = y.constant_term()
            res = abs(probe - probe_prev)
            probe_prev = probe
        else:
            res = deltas[-1]
        x = y
        if cfg.fixed_iterations is None and res <= cfg.tolerance:
            return x, ConvergenceReport(it, res, True, _ratio(deltas), x.discarded)
    rep = ConvergenceReport(limit, res, cfg.fixed_iterations is not None or res <= cfg.tolerance,
                            _ratio(deltas), x.discarded)
    if cfg.strict and not rep.converged:
        raise ConvergenceError(f"no convergence after {limit} iterations (residual {res:.3g})", rep)
    return x, rep


# ---------------------------------------------------------------------------
# bundles


@dataclass
class SolutionBundle:
    """Series for lines ``0..N``; line 0 and line N are the boundary data."""

    lines: list[TruncatedSeries]
    grid: GridSpec
    spec: ProblemSpec
    reports: list[ConvergenceReport | None] = field(default_factory=list)

    def __post_init__(self):
        if len(self.lines) != self.grid.N + 1:
            raise ValueError("a bundle holds exactly N + 1 lines")

    @property
    def N(self) -> int:
        return self.grid.N

    @property
    def policy(self) -> TruncationPolicy:
        return self.lines[0].policy

    def line(self, n: int) -> TruncatedSeries:
        return self.lines[n]

    def interior(self) -> list[TruncatedSeries]:
        return self.lines[1:-1]

    def all_lines(self) -> list[TruncatedSeries]:
        return list(self.lines)

    def families(self) -> set[str]:
        out: set[str] = set()
        for s in self.lines:
            out |= s.families()
        return out

    def evaluate(self, bindings, theta) -> np.ndarray:
        if isinstance(theta, (int, np.integer)):
            theta = theta_grid(int(theta))
        return np.vstack([evaluate(s, bindings, theta) for s in self.lines])

    def table_rows(self, interior_only: bool = True) -> list[tuple[int, str, float]]:
        idx = range(1, self.N) if interior_only else range(self.N + 1)
        return [(n, m.signature(), c) for n in idx for m, c in self.lines[n].items()]


def _gain_slope(prev_map: TruncatedSeries | None, family: str) -> float:
    """Constant-order coefficient of the transient symbol in ``g[n-1]``."""
    if prev_map is None:
        return 0.0
    return prev_map.coeff(Monomial(((family, 0, 1),), 0))


@dataclass
class ForwardSweep:
    """Maps ``g_n`` for ``n = 1..N-1``; ``g_n`` is a series in the symbol of line ``n+1``."""

    maps: dict[int, TruncatedSeries]
    reports: dict[int, ConvergenceReport]
    grid: GridSpec
    spec: ProblemSpec
    inner: TruncatedSeries
    prefix: str = "L"

    def family(self, n: int) -> str:
        return f"{self.prefix}{n}"


def forward_sweep(spec: ProblemSpec, grid: GridSpec, inner: TruncatedSeries,
                  cfg: ConvergenceConfig, *, grading: str = LINEAR_EXACT,
                  prox: ProximalConfig | None = None,
                  anchors: Mapping[int, TruncatedSeries] | None = None,
                  coeffs: Coefficients | None = None, source_graded: bool = False,
                  relax: bool | None = None, prefix: str = "L",
                  linearize_at: Mapping[int, TruncatedSeries] | None = None) -> ForwardSweep:
    """Build ``g_1 .. g_{N-1}`` by solving ``x = T_n(g_{n-1}(x), x, S_{n+1})`` per line.

    The iteration starts from the fresh symbol ``S_{n+1}``.  With ``relax``
    (default for the linear-exact grading) the iterated map is
    ``x + (T(x) - x) / (1 - s)`` where ``s`` is the constant-order slope of
    ``T`` in ``x``; it has the same fixed point and contracts much faster.
    ``linearize_at`` gives per-line base points for the nonlinearity when no
    proximal term is active.
    """
    policy = inner.policy
    if relax is None:
        relax = grading == LINEAR_EXACT
    if any(f.startswith(prefix) and f[len(prefix):].isdigit() for f in inner.families()):
        raise ValueError(f"inner series uses the transient prefix {prefix!r}")
    maps: dict[int, TruncatedSeries] = {}
    reports: dict[int, ConvergenceReport] = {}
    d = grid.d
    c = coeffs or Coefficients()
    kq = prox.K * d * d / spec.epsilon if prox is not None else 0.0
    for n in range(1, grid.N):
        fam_n, fam_next = f"{prefix}{n}", f"{prefix}{n + 1}"
        nxt = TruncatedSeries.symbol(fam_next, policy=policy)
        prev_map = maps.get(n - 1)

        def prev_of(x, prev_map=prev_map, fam_n=fam_n):
            return inner if prev_map is None else substitute(prev_map, fam_n, x)

        lin = None
        if prox is not None and prox.K:
            lin = anchors[n] if anchors is not None else TruncatedSeries.zero(policy)
        elif linearize_at is not None:
            lin = linearize_at.get(n)
        if grading == LINEAR_EXACT:
            lin = Linearization.at(spec, TruncatedSeries.zero(policy) if lin is None else lin)

        if prox is not None and prox.K:
            def T(x, n=n, nxt=nxt, prev_of=prev_of, lin=lin):
                return assemble_T_proximal(n, prev_of(x), x, nxt, lin, spec, grid, prox,
                                           grading=grading, coeffs=coeffs,
                                           source_graded=source_graded)
        else:
            def T(x, n=n, nxt=nxt, prev_of=prev_of, lin=lin):
                return assemble_T_plain(n, prev_of(x), x, nxt, spec, grid, grading=grading,
                                        coeffs=coeffs, source_graded=source_graded,
                                        linearize_at=lin)

        fmap = T
        if relax:
            a = _gain_slope(prev_map, fam_n)
            drift = c.f2 * d / grid.t(n)
            gq = c.f5 * d * d / spec.epsilon * (lin.slope if lin is not None else 0.0)
            s = (1.0 + a + drift * (1.0 - a) + gq) / (3.0 + kq)
            scale = 1.0 / max(1.0 - s, 0.1)

            def relaxed(x, T=T, scale=scale):
                return x + (T(x) - x) * scale
            fmap = relaxed

        maps[n], reports[n] = fixed_point(fmap, nxt, cfg)
    return ForwardSweep(maps, reports, grid, spec, inner, prefix)


COLLAPSE_BEFORE = "before"
COLLAPSE_AFTER = "after"


def backward_substitute(sweep: ForwardSweep, terminal: TruncatedSeries, *,
                        collapse: str = COLLAPSE_AFTER, step_value: float = 1.0) -> SolutionBundle:
    """Cascade ``u_{N-1} = g_{N-1}(terminal)``, ``u_n = g_n(u_{n+1})`` down to line 1.

    ``collapse="before"`` sets the step marker to ``step_value`` in each map
    before composing (the published plain and proximal programs);
    ``"after"`` composes graded series and collapses at the end.
    """
    if collapse not in (COLLAPSE_BEFORE, COLLAPSE_AFTER):
        raise ValueError(f"unknown collapse rule {collapse!r}")
    N = sweep.grid.N
    if set(sweep.maps) != set(range(1, N)):
        raise ValueError("forward sweep is incomplete")
    lines: list[TruncatedSeries | None] = [None] * (N + 1)
    lines[N] = terminal
    nxt = terminal
    for n in range(N - 1, 0, -1):
        g = sweep.maps[n]
        if collapse == COLLAPSE_BEFORE:
            g = g.set_step(step_value)
        nxt = substitute(g, sweep.family(n + 1), nxt)
        lines[n] = nxt
    lines[0] = sweep.inner
    if collapse == COLLAPSE_AFTER:
        lines = [s.set_step(step_value) for s in lines]
    else:
        lines[0] = lines[0].set_step(step_value)
    transient = {f for s in lines for f in s.families()
                 if f.startswith(sweep.prefix) and f[len(sweep.prefix):].isdigit()}
    if transient:
        raise RuntimeError(f"transient families survived back-substitution: {sorted(transient)}")
    reports = [None] + [sweep.reports[n] for n in range(1, N)] + [None]
    return SolutionBundle(lines, sweep.grid, sweep.spec, reports)


def plain_solve(spec: ProblemSpec, N: int, *, compat: bool = False,
                cfg: ConvergenceConfig | None = None,
                policy: TruncationPolicy = DEFAULT_POLICY,
                coeffs: Coefficients | None = None) -> SolutionBundle:
    """Single-domain solve in the outer family ``uf``."""
    grid = GridSpec.plain(N)
    if cfg is None:
        cfg = ConvergenceConfig.listing_probe() if compat else ConvergenceConfig()
    sweep = forward_sweep(spec, grid, spec.inner_series(policy), cfg,
                          grading=LISTING if compat else LINEAR_EXACT, coeffs=coeffs)
    terminal = TruncatedSeries.symbol(OUTER, policy=policy)
    return backward_substitute(sweep, terminal,
                               collapse=COLLAPSE_BEFORE if compat else COLLAPSE_AFTER)


@dataclass
class ShapeBundle:
    """One bundle per theta node for shapes with theta-dependent coefficients.

    Each node's bundle is built with the shape coefficients frozen at that
    node, so derivatives of the coefficients themselves are not represented.
    """

    theta: np.ndarray
    bundles: list[SolutionBundle]

    def evaluate(self, bindings) -> np.ndarray:
        cols = [b.evaluate(bindings, self.theta)[:, j] for j, b in enumerate(self.bundles)]
        return np.stack(cols, axis=1)


def general_shape_solve(spec: ProblemSpec, N: int, M: int, *, compat: bool = False,
                        cfg: ConvergenceConfig | None = None,
                        policy: TruncationPolicy = DEFAULT_POLICY) -> ShapeBundle:
    theta = theta_grid(M)
    f2, f3, f4, f5 = spec.shape.coefficients(theta)
    bundles = [plain_solve(spec, N, compat=compat, cfg=cfg, policy=policy,
                           coeffs=Coefficients(f2[j], f3[j], f4[j], f5[j])) for j in range(M)]
    return ShapeBundle(theta, bundles)
