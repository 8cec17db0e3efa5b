"""Independent two-dimensional finite-difference reference solver on the (t, theta) grid.

For an annulus ``t`` is the radius and the equation is the polar form of
``eps * lap(u) + g(u) + f = 0``.  Angular derivatives are spectral.  Two
radial stencils are offered: ``discrete`` uses the same one-sided first
difference as the line operators, ``continuum`` uses centred differences.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.linalg import solve_banded
from scipy.sparse.linalg import spsolve

from .boundary import BoundaryFunction, FourierBoundary, theta_grid
from .operator import GridSpec, ProblemSpec

DISCRETE = "discrete"
CONTINUUM = "continuum"


class OracleError(RuntimeError):
    pass


@dataclass
class OracleField:
    t: np.ndarray
    theta: np.ndarray
    u: np.ndarray  # (len(t), len(theta))
    method: str
    iterations: int
    residual: float
    stencil: str
    history: list[float] = field(default_factory=list)

    @property
    def shape(self) -> tuple[int, int]:
        return self.u.shape

    def at(self, t: float) -> np.ndarray:
        """Values on the circle ``t`` by linear interpolation between grid lines."""
        if not self.t[0] - 1e-12 <= t <= self.t[-1] + 1e-12:
            raise OracleError(f"t={t} outside the field")
        i = int(np.clip(np.searchsorted(self.t, t) - 1, 0, len(self.t) - 2))
        w = (t - self.t[i]) / (self.t[i + 1] - self.t[i])
        return (1 - w) * self.u[i] + w * self.u[i + 1]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["r", "theta", "u"])
        for i, t in enumerate(self.t):
            for j, th in enumerate(self.theta):
                w.writerow([repr(float(t)), repr(float(th)), repr(float(self.u[i, j]))])
        return buf.getvalue()

    def metadata(self) -> dict:
        return {"M_r": len(self.t) - 1, "M_theta": len(self.theta), "method": self.method,
                "iterations": self.iterations, "residual": self.residual,
                "stencil": self.stencil}

    def metadata_json(self) -> str:
        return json.dumps(self.metadata(), indent=2)


def spectral_matrix(M: int, order: int) -> np.ndarray:
    """Dense ``order``-th derivative matrix on the uniform periodic grid of ``M`` points."""
    k = np.fft.fftfreq(M, d=1.0 / M)
    if order % 2 and M % 2 == 0:
        k[M // 2] = 0.0
    eye = np.eye(M)
    return np.real(np.fft.ifft((1j * k[:, None]) ** order * np.fft.fft(eye, axis=0), axis=0))


def _wavenumbers(M: int) -> np.ndarray:
    return np.fft.fftfreq(M, d=1.0 / M)


def _radial_bands(t: np.ndarray, d: float, stencil: str):
    """Lower/diag/upper radial coefficients for interior lines (scaled by ``d^2``)."""
    c = d / t
    if stencil == DISCRETE:
        return 1.0 - c, -2.0 + c, np.ones_like(c)
    if stencil == CONTINUUM:
        return 1.0 - c / 2, -2.0 * np.ones_like(c), 1.0 + c / 2
    raise OracleError(f"unknown stencil {stencil!r}")


class _Problem:
    """Discrete equation with both boundary rows eliminated."""

    def __init__(self, spec: ProblemSpec, M_r: int, M_theta: int, u_f, u_inner, source,
                 stencil: str):
        if M_r < 8 or M_theta < 8:
            raise OracleError("grid sizes must be at least 8")
        self.spec = spec
        self.M = M_theta
        self.grid = GridSpec.plain(M_r)
        self.t = self.grid.ts
        self.theta = theta_grid(M_theta)
        self.d = self.grid.d
        self.q = self.d ** 2 / spec.epsilon
        self.stencil = stencil
        f2, f3, f4, f5 = spec.shape.coefficients(self.theta)
        self.f2, self.f3, self.f4, self.f5 = f2, f3, f4, f5
        self.uniform = spec.shape.mode == "annulus"
        self.lo_bc = _sample(u_inner, self.theta)
        self.hi_bc = _sample(u_f, self.theta)
        if source is None:
            source = spec.source if spec.source is not None else 0.0
        self.f = _sample(source, self.theta)
        self.D1 = spectral_matrix(M_theta, 1)
        self.D2 = spectral_matrix(M_theta, 2)

    def full(self, interior: np.ndarray) -> np.ndarray:
        return np.vstack([self.lo_bc, interior, self.hi_bc])

    def residual(self, interior: np.ndarray) -> np.ndarray:
        u = self.full(interior)
        t = self.t[1:-1, None]
        mid, lo, hi = u[1:-1], u[:-2], u[2:]
        c = self.d / t
        if self.stencil == DISCRETE:
            rad = hi - 2 * mid + lo + self.f2 * c * (mid - lo)
            dr = mid - lo
        else:
            rad = hi - 2 * mid + lo + self.f2 * c * (hi - lo) / 2
            dr = (hi - lo) / 2
        ang = self.f3 * c * (dr @ self.D1.T) + self.f4 * c * c * (mid @ self.D2.T)
        return rad + ang + self.f5 * self.q * (self.spec.g_value(mid) + self.f)

    def jacobian(self, interior: np.ndarray) -> sp.csr_matrix:
        n, M = interior.shape
        t = self.t[1:-1]
        c = self.d / t
        I = sp.identity(M, format="csr")
        f2, f3, f4 = (sp.diags(x) for x in (self.f2, self.f3, self.f4))
        D1, D2 = sp.csr_matrix(self.D1), sp.csr_matrix(self.D2)
        if self.stencil == DISCRETE:
            wl, wd, wu = -1.0, 1.0, 0.0
        else:
            wl, wd, wu = -0.5, 0.0, 0.5
        blocks_d, blocks_l, blocks_u = [], [], []
        for i in range(n):
            drift = f2 + f3 @ D1 * 1.0
            diag = -2.0 * I + c[i] * wd * drift + c[i] ** 2 * (f4 @ D2)
            diag = diag + sp.diags(self.f5 * self.q * self.spec.g_prime(interior[i]))
            blocks_d.append(diag)
            blocks_l.append(I + c[i] * wl * drift)
            blocks_u.append(I + c[i] * wu * drift)
        rows = []
        for i in range(n):
            row = [None] * n
            row[i] = blocks_d[i]
            if i > 0:
                row[i - 1] = blocks_l[i]
            if i < n - 1:
                row[i + 1] = blocks_u[i]
            rows.append(row)
        return sp.bmat(rows, format="csc")


def _sample(x, theta) -> np.ndarray:
    if isinstance(x, BoundaryFunction):
        return np.asarray(x(theta, 0), dtype=float)
    if callable(x):
        return np.asarray(x(theta), dtype=float) * np.ones_like(theta)
    return np.full_like(theta, float(x))


def _mode_solve(prob: _Problem, rhs_hat: np.ndarray, shift: np.ndarray) -> np.ndarray:
    """Solve ``(L - diag(shift)) v = rhs`` mode by mode; ``rhs_hat`` is (n, M) in Fourier space."""
    n = rhs_hat.shape[0]
    lo, dg, up = _radial_bands(prob.t[1:-1], prob.d, prob.stencil)
    k2 = _wavenumbers(prob.M) ** 2
    c2 = (prob.d / prob.t[1:-1]) ** 2
    out = np.empty_like(rhs_hat)
    for j in range(prob.M):
        ab = np.zeros((3, n))
        ab[0, 1:] = up[:-1]
        ab[1] = dg - c2 * k2[j] - shift
        ab[2, :-1] = lo[1:]
        out[:, j] = solve_banded((1, 1), ab, rhs_hat[:, j])
    return out


def _picard(prob: _Problem, u: np.ndarray, tol: float, max_iter: int, omega: float):
    """Damped, shifted Picard iteration; returns (u, residual, iterations, history, ok)."""
    n = u.shape[0]
    lo, dg, up = _radial_bands(prob.t[1:-1], prob.d, prob.stencil)
    hist = []
    res = float(np.max(np.abs(prob.residual(u))))
    hist.append(res)
    for it in range(1, max_iter + 1):
        if res <= tol:
            return u, res, it - 1, hist, True
        gp = prob.spec.g_prime(u)
        shift = prob.q * max(float(np.max(gp)), 0.0) * np.ones(n)
        # (L - s) u_new = -q (g(u) + f) - s u  plus the boundary contributions
        rhs = -prob.q * (prob.spec.g_value(u) + prob.f) - shift[:, None] * u
        rhs[0] -= lo[0] * prob.lo_bc
        rhs[-1] -= up[-1] * prob.hi_bc
        new = np.real(np.fft.ifft(_mode_solve(prob, np.fft.fft(rhs, axis=1), shift), axis=1))
        cand = u + omega * (new - u)
        cres = float(np.max(np.abs(prob.residual(cand))))
        if cres > res:
            omega = max(omega / 2, 1e-3)
        u, res = cand, cres
        hist.append(res)
        if not np.isfinite(res):
            return u, res, it, hist, False
    return u, res, max_iter, hist, res <= tol


def _newton(prob: _Problem, u: np.ndarray, tol: float, max_iter: int):
    hist = []
    res_vec = prob.residual(u)
    res = float(np.max(np.abs(res_vec)))
    hist.append(res)
    for it in range(1, max_iter + 1):
        if res <= tol:
            return u, res, it - 1, hist, True
        J = prob.jacobian(u)
        step = spsolve(J, -res_vec.ravel()).reshape(u.shape)
        lam = 1.0
        while True:
            cand = u + lam * step
            cvec = prob.residual(cand)
            cres = float(np.max(np.abs(cvec)))
            if cres < res or lam < 1e-4:
                break
            lam /= 2
        u, res_vec, res = cand, cvec, cres
        hist.append(res)
    return u, res, max_iter, hist, res <= tol


def fd2d_solve(spec: ProblemSpec, M_r: int, M_theta: int, u_f: BoundaryFunction | float = 0.0,
               u_inner: BoundaryFunction | float | None = None, *, stencil: str = DISCRETE,
               source=None, tol: float = 1e-10, picard_iterations: int = 500,
               omega: float = 0.7, newton_iterations: int = 50,
               initial: np.ndarray | None = None) -> OracleField:
    """Solve on ``M_r`` radial intervals and ``M_theta`` angular points.

    Picard with a stabilizing shift runs first (mode-wise tridiagonal solves,
    annulus only); Newton on the sparse system takes over if it stalls.
    """
    if u_inner is None:
        u_inner = spec.inner if spec.inner is not None else 0.0
    prob = _Problem(spec, M_r, M_theta, u_f, u_inner, source, stencil)
    n = M_r - 1
    if initial is not None:
        u = np.array(initial, dtype=float)[1:-1]
    else:
        w = (prob.t[1:-1] - 1.0)[:, None]
        u = (1 - w) * prob.lo_bc + w * prob.hi_bc
    hist: list[float] = []
    method = "picard"
    iters = 0
    ok = False
    if prob.uniform:
        u, res, iters, hist, ok = _picard(prob, u, tol, picard_iterations, omega)
        if not ok and not np.all(np.isfinite(u)):
            w = (prob.t[1:-1] - 1.0)[:, None]
            u = (1 - w) * prob.lo_bc + w * prob.hi_bc
    if not ok:
        method = "picard+newton" if prob.uniform else "newton"
        u, res, it2, h2, ok = _newton(prob, u, tol, newton_iterations)
        iters += it2
        hist += h2
    if not ok:
        raise OracleError(f"oracle did not converge (residual {res:.3g})")
    assert u.shape == (n, M_theta)
    return OracleField(prob.t, prob.theta, prob.full(u), method, iters, res, stencil, hist)


# ---------------------------------------------------------------------------
# linear references


def linear_mode_solve(grid: GridSpec, eps: float, m: int, inner: float, outer: float, *,
                      g1: float = 0.0, stencil: str = DISCRETE) -> np.ndarray:
    """Amplitude on lines ``0..N`` of Fourier mode ``m`` for ``eps lap u + g1 u = 0``.

    The data are ``inner * e^{i m theta}`` at ``t = grid.start`` and
    ``outer * e^{i m theta}`` at the last line.
    """
    N = grid.N
    t = grid.ts[1:-1]
    lo, dg, up = _radial_bands(t, grid.d, stencil)
    q = grid.d ** 2 / eps
    ab = np.zeros((3, N - 1))
    ab[0, 1:] = up[:-1]
    ab[1] = dg - (grid.d / t) ** 2 * m * m + q * g1
    ab[2, :-1] = lo[1:]
    rhs = np.zeros(N - 1)
    rhs[0] -= lo[0] * inner
    rhs[-1] -= up[-1] * outer
    return np.concatenate([[inner], solve_banded((1, 1), ab, rhs), [outer]])


def elimination_gains(s: float, N: int) -> np.ndarray:
    """Gains ``du_n / du_{n+1}`` of ``u_{n+1} - (2 + s) u_n + u_{n-1} = 0`` with ``u_0 = 0``.

    Computed by solving each leading block with a dense solver, independently
    of the recursion.
    """
    out = np.empty(N - 1)
    for n in range(1, N):
        A = np.diag(np.full(n, -(2.0 + s))) + np.diag(np.ones(n - 1), 1) + np.diag(np.ones(n - 1), -1)
        rhs = np.zeros(n)
        rhs[-1] = -1.0
        out[n - 1] = np.linalg.solve(A, rhs)[-1]
    return out


def annulus_laplace(t, inner: float = 0.0, outer: float = 1.0) -> np.ndarray:
    """Radial harmonic function on ``1 <= t <= 2``."""
    return inner + (outer - inner) * np.log(np.asarray(t, dtype=float)) / np.log(2.0)


# ---------------------------------------------------------------------------
# comparison


@dataclass
class CompareReport:
    t: np.ndarray
    line_sup: np.ndarray
    line_l2: np.ndarray
    sup: float
    l2: float
    tolerance: float | None
    stencil: str

    @property
    def passed(self) -> bool | None:
        return None if self.tolerance is None else self.sup <= self.tolerance

    def worst(self, count: int = 3) -> list[tuple[float, float]]:
        idx = np.argsort(self.line_sup)[::-1][:count]
        return [(float(self.t[i]), float(self.line_sup[i])) for i in idx]

    def to_dict(self) -> dict:
        return {"sup": self.sup, "l2": self.l2, "tolerance": self.tolerance,
                "passed": self.passed, "stencil": self.stencil, "worst": self.worst()}


def compare(fld: OracleField, bundle, bindings, *, tolerance: float | None = None,
            t_range: tuple[float, float] | None = None) -> CompareReport:
    """Errors of ``bundle`` against ``fld`` on each bundle line, theta grid of the field.

    Field values are interpolated linearly in ``t`` onto the bundle lines.
    ``t_range`` restricts the verdict to lines inside the closed interval.
    """
    ts = bundle.grid.ts
    if ts[0] < fld.t[0] - 1e-12 or ts[-1] > fld.t[-1] + 1e-12:
        raise OracleError("bundle lines fall outside the oracle field")
    vals = bundle.evaluate(bindings, fld.theta)
    keep = np.ones(len(ts), dtype=bool)
    if t_range is not None:
        keep = (ts >= t_range[0] - 1e-12) & (ts <= t_range[1] + 1e-12)
    err = np.array([vals[i] - fld.at(ts[i]) for i in range(len(ts))])[keep]
    line_sup = np.max(np.abs(err), axis=1)
    line_l2 = np.sqrt(np.mean(err ** 2, axis=1))
    return CompareReport(ts[keep], line_sup, line_l2, float(np.max(line_sup)),
                         float(np.sqrt(np.mean(err ** 2))), tolerance, fld.stencil)


def compare_fields(a: OracleField, b: OracleField) -> float:
    if a.u.shape != b.u.shape:
        raise OracleError("field shapes differ")
    return float(np.max(np.abs(a.u - b.u)))


def constant_boundary(c: float) -> FourierBoundary:
    return FourierBoundary.constant(c)
