"""Discrete line operators on (shape-perturbed) annuli.

After the change of variables ``t = r / r(theta)`` the domain is ``1 <= t <= 2``
and the equation ``eps * lap(u) + g(u) + f = 0`` becomes, on line ``n``,

    (u[n+1] - 2 u[n] + u[n-1]) + f2 d/t (u[n] - u[n-1])
        + f3 d/t d_theta(u[n] - u[n-1]) + f4 d^2/t^2 d_theta^2 u[n]
        + f5 (g(u[n]) + f) d^2/eps = 0

Every function here returns the right-hand side of ``u[n] = T(u[n-1], u[n], u[n+1])``
as a :class:`TruncatedSeries`.

Two step gradings are supported.  ``listing`` reproduces the published
Mathematica program term for term: the difference, angular and nonlinear
terms carry ``d1**2`` and are truncated at second order.  The default grading
keeps every linear term at step order zero, so linear problems are solved
exactly, and grades only the nonlinear remainder ``g(u) - g(anchor)``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .boundary import BoundaryFunction, FourierBoundary, theta_grid
from .series import (DEFAULT_POLICY, MAX_POLY_DEGREE, TruncatedSeries, TruncationPolicy,
                     differentiate_theta, poly_apply)

OUTER = "uf"
INNER = "u0"
SOURCE = "f"

LISTING = "listing"
LINEAR_EXACT = "linear-exact"


class OperatorError(ValueError):
    pass


@dataclass(frozen=True)
class ShapeSpec:
    """Inner boundary ``r(theta)``; ``mode="annulus"`` means ``r == 1``.

    For a general shape ``r`` is given with its first two derivatives; ``f5``
    defaults to one.
    """

    mode: str = "annulus"
    r: Callable | None = None
    dr: Callable | None = None
    d2r: Callable | None = None
    f5: Callable | None = None

    def __post_init__(self):
        if self.mode not in ("annulus", "general"):
            raise OperatorError(f"unknown shape mode {self.mode!r}")
        if self.mode == "general":
            if self.r is None or self.dr is None or self.d2r is None:
                raise OperatorError("general shape needs r, r' and r''")
            r0, r1 = float(self.r(0.0)), float(self.r(2 * np.pi))
            if not np.isclose(r0, r1, rtol=1e-10, atol=1e-12):
                raise OperatorError("r(theta) must be 2*pi periodic")
            if np.min(self.r(theta_grid(256))) <= 0:
                raise OperatorError("r(theta) must be positive")

    @classmethod
    def from_boundary(cls, r: BoundaryFunction, f5: Callable | None = None) -> "ShapeSpec":
        return cls("general", r=lambda th: r(th, 0), dr=lambda th: r(th, 1),
                   d2r=lambda th: r(th, 2), f5=f5)

    def coefficients(self, theta) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """``(f2, f3, f4, f5)`` sampled at ``theta``."""
        theta = np.asarray(theta, dtype=float)
        one = np.ones_like(theta)
        f5 = one if self.f5 is None else np.asarray(self.f5(theta), dtype=float) * one
        if self.mode == "annulus":
            return one, 0.0 * one, one, f5
        r, dr, d2r = (np.asarray(h(theta), dtype=float) * one for h in (self.r, self.dr, self.d2r))
        f1 = -dr / r
        df1 = -(d2r * r - dr * dr) / (r * r)
        den = 1.0 + f1 * f1
        return 1.0 + df1 / den, 2.0 * f1 / den, 1.0 / den, f5


ANNULUS = ShapeSpec()


@dataclass(frozen=True)
class ProblemSpec:
    """``eps * lap(u) + g(u) + f = 0`` with ``u = inner`` on the inner and ``u = uf`` on the outer ring.

    ``g`` holds polynomial coefficients ``c0..c3``.  ``source`` and ``inner``
    are either numbers or ``None`` for a symbolic family (``f`` and ``u0``)
    bound at evaluation time.
    """

    epsilon: float
    g: tuple[float, ...] = (0.0, 1.0, 0.0, -1.0)
    source: float | None = 1.0
    inner: float | None = 0.0
    shape: ShapeSpec = ANNULUS

    def __post_init__(self):
        if not self.epsilon > 0:
            raise OperatorError("epsilon must be positive")
        g = tuple(float(c) for c in self.g)
        while len(g) > 1 and g[-1] == 0.0:
            g = g[:-1]
        if len(g) - 1 > MAX_POLY_DEGREE:
            raise OperatorError(f"g must have degree <= {MAX_POLY_DEGREE}")
        object.__setattr__(self, "g", g)

    def g_value(self, u):
        return sum(c * u ** j for j, c in enumerate(self.g))

    def g_prime(self, u):
        return sum(j * c * u ** (j - 1) for j, c in enumerate(self.g) if j)

    def source_series(self, policy: TruncationPolicy = DEFAULT_POLICY) -> TruncatedSeries:
        if self.source is None:
            return TruncatedSeries.symbol(SOURCE, policy=policy)
        return TruncatedSeries.constant(self.source, policy)

    def inner_series(self, policy: TruncationPolicy = DEFAULT_POLICY) -> TruncatedSeries:
        if self.inner is None:
            return TruncatedSeries.symbol(INNER, policy=policy)
        return TruncatedSeries.constant(self.inner, policy)


@dataclass(frozen=True)
class GridSpec:
    """Lines ``t_n = start + n * d`` for ``n = 0..N``."""

    N: int
    d: float
    start: float = 1.0

    def __post_init__(self):
        if self.N < 2:
            raise OperatorError("need at least two intervals")
        if not self.d > 0:
            raise OperatorError("grid step must be positive")

    @classmethod
    def plain(cls, N: int) -> "GridSpec":
        return cls(N, 1.0 / N, 1.0)

    @classmethod
    def subdomain(cls, k: int, N: int, N1: int) -> "GridSpec":
        """Lines of sub-domain ``k`` (1-based) out of ``N1`` with ``N`` intervals each."""
        if not 1 <= k <= N1:
            raise OperatorError(f"sub-domain index {k} outside 1..{N1}")
        return cls(N, 1.0 / (N * N1), 1.0 + (k - 1) / N1)

    def t(self, n: int) -> float:
        return self.start + n * self.d

    @property
    def ts(self) -> np.ndarray:
        return self.start + self.d * np.arange(self.N + 1)


@dataclass(frozen=True)
class ProximalConfig:
    K: float = 70.0
    outer_iterations: int = 400
    outer_tolerance: float = 1e-6

    def __post_init__(self):
        if self.K < 0:
            raise OperatorError("K must be nonnegative")
        if self.outer_iterations < 1:
            raise OperatorError("need at least one outer iteration")
        if self.K and not 30.0 <= self.K <= 80.0:
            warnings.warn(f"K={self.K} is outside the usual 30-80 range", stacklevel=2)


@dataclass(frozen=True)
class Coefficients:
    """Shape coefficients at one theta (scalars)."""

    f2: float = 1.0
    f3: float = 0.0
    f4: float = 1.0
    f5: float = 1.0


ANNULUS_COEFFS = Coefficients()


def _coeffs(spec: ProblemSpec, coeffs: Coefficients | None) -> Coefficients:
    if coeffs is not None:
        return coeffs
    if spec.shape.mode != "annulus":
        raise OperatorError("general shapes need explicit per-theta coefficients")
    if spec.shape.f5 is not None:
        raise OperatorError("a theta-dependent f5 needs explicit per-theta coefficients")
    return ANNULUS_COEFFS


@dataclass(frozen=True)
class Linearization:
    """Affine part of ``g`` about a base point: ``g(p) + s (u - p)``.

    ``s`` is the scalar ``g'`` at the constant term of ``p``.  A scalar slope
    keeps every line map as sparse as its inputs; the graded remainder
    ``g(u) - tangent(u)`` vanishes at ``u = p`` whatever ``s`` is, so the
    proximal fixed point is unchanged.
    """

    point: TruncatedSeries
    g_value: TruncatedSeries
    slope: float

    @classmethod
    def at(cls, spec: ProblemSpec, point: TruncatedSeries) -> "Linearization":
        return cls(point, poly_apply(spec.g, point), float(spec.g_prime(point.constant_term())))

    def tangent(self, u: TruncatedSeries) -> TruncatedSeries:
        return self.g_value + (u - self.point) * self.slope


def _nonlinear(spec: ProblemSpec, cur: TruncatedSeries) -> TruncatedSeries:
    return poly_apply(spec.g, cur)


def _numerator(prev, cur, nxt, spec: ProblemSpec, t: float, d: float, c: Coefficients,
               grading: str, anchor: TruncatedSeries | None, source_graded: bool):
    for s in (prev, nxt):
        cur._check(s)
    q = d * d / spec.epsilon
    diff = cur - prev
    drift = diff * (c.f2 * d / t)
    if c.f3:
        drift = drift + differentiate_theta(diff) * (c.f3 * d / t)
    angular = differentiate_theta(cur, 2) * (c.f4 * d * d / (t * t))
    src = spec.source_series(cur.policy) * (q * c.f5)
    if grading == LISTING:
        nonlin = (_nonlinear(spec, cur.up_to_step(cur.policy.step_cap - 2)) * (q * c.f5)).graded(2)
        return (nxt + cur + prev + drift.graded(2) + angular.graded(2) + nonlin
                + (src.graded(2) if source_graded else src))
    if grading != LINEAR_EXACT:
        raise OperatorError(f"unknown grading {grading!r}")
    if not isinstance(anchor, Linearization):
        anchor = Linearization.at(spec, TruncatedSeries.zero(cur.policy) if anchor is None else anchor)
    low = cur.up_to_step(cur.policy.step_cap - 2)
    rest = _nonlinear(spec, low) - anchor.tangent(low)
    return (nxt + cur + prev + drift + angular + src + anchor.tangent(cur) * (q * c.f5)
            + (rest * (q * c.f5)).graded(2))


def assemble_T_plain(n: int, prev: TruncatedSeries, cur: TruncatedSeries, nxt: TruncatedSeries,
                     spec: ProblemSpec, grid: GridSpec, *, grading: str = LINEAR_EXACT,
                     coeffs: Coefficients | None = None, source_graded: bool = False,
                     linearize_at: TruncatedSeries | Linearization | None = None) -> TruncatedSeries:
    """Line operator without regularization; the result is divided by 3.

    ``linearize_at`` only matters for the linear-exact grading: the tangent of
    ``g`` there (zero by default) is kept exactly and only the remainder
    ``g(cur) - tangent(cur)`` is graded.
    """
    if not 1 <= n <= grid.N - 1:
        raise OperatorError(f"line index {n} outside 1..{grid.N - 1}")
    c = _coeffs(spec, coeffs)
    num = _numerator(prev, cur, nxt, spec, grid.t(n), grid.d, c, grading, linearize_at,
                     source_graded)
    return num / 3.0


def assemble_T_proximal(n: int, prev: TruncatedSeries, cur: TruncatedSeries, nxt: TruncatedSeries,
                        anchor: TruncatedSeries | Linearization, spec: ProblemSpec,
                        grid: GridSpec, prox: ProximalConfig, *, grading: str = LINEAR_EXACT,
                        coeffs: Coefficients | None = None,
                        source_graded: bool = False) -> TruncatedSeries:
    """Line operator with the term ``-K (u[n] - anchor[n]) d^2/eps`` folded in.

    With ``K == 0`` the anchor is ignored and the result equals
    :func:`assemble_T_plain` exactly.
    """
    if prox.K == 0:
        return assemble_T_plain(n, prev, cur, nxt, spec, grid, grading=grading, coeffs=coeffs,
                                source_graded=source_graded)
    if not 1 <= n <= grid.N - 1:
        raise OperatorError(f"line index {n} outside 1..{grid.N - 1}")
    c = _coeffs(spec, coeffs)
    point = anchor.point if isinstance(anchor, Linearization) else anchor
    cur._check(point)
    kq = prox.K * grid.d * grid.d / spec.epsilon
    num = _numerator(prev, cur, nxt, spec, grid.t(n), grid.d, c, grading,
                     anchor if grading == LINEAR_EXACT else None, source_graded)
    return (num + point * kq) / (3.0 + kq)


def assemble_T_node(k: int, left: TruncatedSeries, center: TruncatedSeries, right: TruncatedSeries,
                    spec: ProblemSpec, N: int, N1: int, *, grading: str = LINEAR_EXACT,
                    coeffs: Coefficients | None = None) -> TruncatedSeries:
    """Operator on the node line ``t = 1 + k/N1`` between sub-domains ``k`` and ``k + 1``.

    ``left`` is the last interior line of sub-domain ``k`` and ``right`` the
    first interior line of sub-domain ``k + 1``.  The listing grading carries
    ``d1**2`` on the difference, angular and nonlinear terms but not on the
    source; the caller sets the marker to one afterwards.
    """
    if not 1 <= k <= N1 - 1:
        raise OperatorError(f"node index {k} outside 1..{N1 - 1}")
    c = _coeffs(spec, coeffs)
    d = 1.0 / (N * N1)
    t = 1.0 + k / N1
    q = d * d / spec.epsilon
    diff = center - left
    drift = diff * (c.f2 * d / t)
    if c.f3:
        drift = drift + differentiate_theta(diff) * (c.f3 * d / t)
    angular = differentiate_theta(center, 2) * (c.f4 * d * d / (t * t))
    nonlin = _nonlinear(spec, center) * (q * c.f5)
    src = spec.source_series(center.policy) * (q * c.f5)
    if grading == LISTING:
        num = left + center + right + drift.graded(2) + angular.graded(2) + nonlin.graded(2) + src
    else:
        num = left + center + right + drift + angular + nonlin + src
    return num / 3.0


def linear_gain_recursion(K: float, d: float, eps: float, N: int) -> np.ndarray:
    """Gains ``a[1..N-1]`` with ``a[n] = 1 / (2 + K d^2/eps - a[n-1])`` and ``a[0] = 0``."""
    s = K * d * d / eps
    a = np.empty(N - 1)
    prev = 0.0
    for i in range(N - 1):
        prev = 1.0 / (2.0 + s - prev)
        a[i] = prev
    return a


# ---------------------------------------------------------------------------
# residuals


def spectral_derivative(values: np.ndarray, order: int = 1) -> np.ndarray:
    """Derivative along the last axis of samples on a uniform periodic grid."""
    m = values.shape[-1]
    k = np.fft.fftfreq(m, d=1.0 / m)
    if order % 2 and m % 2 == 0:
        k[m // 2] = 0.0
    return np.real(np.fft.ifft((1j * k) ** order * np.fft.fft(values, axis=-1), axis=-1))


@dataclass
class ResidualReport:
    per_line: np.ndarray  # (N-1, M)
    sup: float
    l2: float
    line_sup: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.line_sup is None:
            self.line_sup = np.max(np.abs(self.per_line), axis=-1) if self.per_line.size else \
                np.zeros(0)


def discrete_residual(values: np.ndarray, spec: ProblemSpec, grid: GridSpec,
                      theta: np.ndarray, source: np.ndarray | float | None = None) -> ResidualReport:
    """Residual of the discrete equation (scaled by ``d^2``) for sampled lines.

    ``values`` has shape ``(N+1, M)`` and includes both boundary lines.
    """
    values = np.asarray(values, dtype=float)
    if values.shape[0] != grid.N + 1:
        raise OperatorError("values must include lines 0..N")
    f2, f3, f4, f5 = spec.shape.coefficients(theta)
    if source is None:
        source = spec.source if spec.source is not None else 0.0
    d = grid.d
    q = d * d / spec.epsilon
    u = values
    t = grid.ts[1:-1, None]
    mid, lo, hi = u[1:-1], u[:-2], u[2:]
    du = spectral_derivative(mid - lo, 1)
    d2u = spectral_derivative(mid, 2)
    res = (hi - 2 * mid + lo + f2 * d / t * (mid - lo) + f3 * d / t * du + f4 * d * d / t ** 2 * d2u
           + f5 * q * (spec.g_value(mid) + source))
    l2 = float(np.sqrt(np.mean(res ** 2))) if res.size else 0.0
    sup = float(np.max(np.abs(res))) if res.size else 0.0
    return ResidualReport(res, sup, l2)


def residual(bundle, spec: ProblemSpec, grid: GridSpec, bindings, theta) -> ResidualReport:
    """Residual of an evaluated solution bundle (see :class:`gmol.sweep.SolutionBundle`)."""
    if isinstance(theta, (int, np.integer)):
        theta = theta_grid(int(theta))
    if bundle.N != grid.N or any(s is None for s in bundle.all_lines()):
        raise OperatorError("incomplete bundle")
    vals = bundle.evaluate(bindings, theta)
    src = None
    if spec.source is None:
        src = np.asarray(bindings[SOURCE](theta, 0))
    return discrete_residual(vals, spec, grid, theta, src)


def default_bindings(uf: BoundaryFunction | float = 0.0, inner: BoundaryFunction | float | None = None,
                     source: BoundaryFunction | float | None = None) -> dict[str, BoundaryFunction]:
    def as_bf(x):
        return x if isinstance(x, BoundaryFunction) else FourierBoundary.constant(float(x))

    out = {OUTER: as_bf(uf)}
    if inner is not None:
        out[INNER] = as_bf(inner)
    if source is not None:
        out[SOURCE] = as_bf(source)
    return out
