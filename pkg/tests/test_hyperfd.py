import numpy as np
import pytest

from gmol.boundary import FourierBoundary, theta_grid
from gmol.hyperfd import (GAUSS_SEIDEL, JACOBI, DecompositionSpec, node_family, node_residual,
                          node_system_solve, recompose, subdomain_solve)
from gmol.operator import GridSpec, OperatorError, ProblemSpec
from gmol.oracle import linear_mode_solve
from gmol.series import TruncatedSeries, evaluate, substitute
from gmol.sweep import ConvergenceConfig

ROOT = 1.324717957244746
LAPLACE = ProblemSpec(1.0, g=(0.0,), source=0.0)
ZERO = {"uf": FourierBoundary.constant(0.0)}
PUBLISHED_NODES = [1.11698, 1.3107, 1.32397, 1.32468, 1.32471, 1.32462, 1.32331, 1.30408, 1.08379]


def _linear_hyper(N1=4, N=8, tol=1e-13):
    dec = DecompositionSpec(N1, N, node_tolerance=1e-13, linearization_passes=1)
    cfg = ConvergenceConfig(tolerance=tol)
    subs = [subdomain_solve(k, LAPLACE, dec, cfg) for k in range(1, N1 + 1)]
    nodes = node_system_solve(subs, LAPLACE, dec)
    return dec, subs, nodes


class TestDecomposition:
    def test_geometry(self):
        dec = DecompositionSpec(10, 30)
        assert dec.d == pytest.approx(1 / 300)
        assert dec.nodes[0] == 1.0 and dec.nodes[-1] == pytest.approx(2.0)
        assert dec.grid(3).t(0) == pytest.approx(1.2)

    def test_validation(self):
        with pytest.raises(OperatorError):
            DecompositionSpec(1, 30)
        with pytest.raises(OperatorError):
            DecompositionSpec(10, 1)
        with pytest.raises(OperatorError):
            DecompositionSpec(10, 30, node_method="sor")

    def test_listing_preset(self):
        dec = DecompositionSpec.listing()
        assert dec.node_method == JACOBI and dec.node_sweeps == 384


class TestSubdomain:
    def test_families(self):
        dec = DecompositionSpec(4, 6)
        sb = subdomain_solve(2, LAPLACE, dec)
        fams = set().union(*(sb.line(n).families() for n in range(1, 6)))
        assert fams == {"U1", "U2"} and sb.inner_family == "U1" and sb.outer_family == "U2"
        first = subdomain_solve(1, LAPLACE, dec)
        assert first.inner_family is None
        assert subdomain_solve(4, LAPLACE, dec).outer_family == "uf"

    def test_linear_two_point_gains(self):
        dec = DecompositionSpec(4, 8)
        sb = subdomain_solve(3, LAPLACE, dec, ConvergenceConfig(tolerance=1e-13))
        grid = dec.grid(3)
        left = linear_mode_solve(grid, 1.0, 0, 1.0, 0.0)
        right = linear_mode_solve(grid, 1.0, 0, 0.0, 1.0)
        for n in range(1, 8):
            assert sb.line(n).coeff("U2^1") == pytest.approx(left[n], abs=1e-10)
            assert sb.line(n).coeff("U3^1") == pytest.approx(right[n], abs=1e-10)

    def test_constant_solution(self):
        spec = ProblemSpec(0.01)
        dec = DecompositionSpec(10, 10)
        # linearized about the plateau, as the default driver's later passes are
        sb = subdomain_solve(5, spec, dec, linearize_at=[ROOT] * 9)
        c = TruncatedSeries.constant(ROOT)
        for n in range(1, 10):
            s = substitute(substitute(sb.line(n), "U4", c), "U5", c)
            assert s.constant_term() == pytest.approx(ROOT, abs=1e-12)

    def test_index(self):
        with pytest.raises(OperatorError):
            subdomain_solve(0, LAPLACE, DecompositionSpec(4, 6))

    def test_linearization_length(self):
        with pytest.raises(ValueError):
            subdomain_solve(1, LAPLACE, DecompositionSpec(4, 6), linearize_at=[0.0])


class TestNodes:
    def test_zero_data(self):
        dec, subs, nodes = _linear_hyper()
        vals = [evaluate(u, ZERO, 4) for u in nodes.values]
        assert max(np.max(np.abs(v)) for v in vals) == 0.0

    def test_laplace_nodes(self):
        dec, subs, nodes = _linear_hyper(N1=10, N=10)
        ref = linear_mode_solve(GridSpec(100, 0.01), 1.0, 0, 0.0, 1.0)
        got = [u.coeff("uf^1") for u in nodes.values[1:-1]]
        assert np.max(np.abs(np.array(got) - ref[10:100:10])) <= 1e-8
        assert got[4] == pytest.approx(np.log(1.5) / np.log(2), abs=2 * 0.01)

    def test_jacobi_agrees(self):
        dec = DecompositionSpec(4, 8, node_method=JACOBI, node_tolerance=1e-13)
        subs = [subdomain_solve(k, LAPLACE, dec, ConvergenceConfig(tolerance=1e-13))
                for k in range(1, 5)]
        jac = node_system_solve(subs, LAPLACE, dec)
        gs = node_system_solve(subs, LAPLACE, DecompositionSpec(4, 8, node_method=GAUSS_SEIDEL,
                                                                node_tolerance=1e-13))
        for a, b in zip(jac.values, gs.values):
            assert abs(a.coeff("uf^1") - b.coeff("uf^1")) <= 1e-10
        assert jac.sweeps >= gs.sweeps

    def test_log_csv(self):
        _, _, nodes = _linear_hyper()
        lines = nodes.log_csv().splitlines()
        assert lines[0] == "sweep,max_node_change" and len(lines) == nodes.sweeps + 1

    def test_bundle_count(self):
        dec, subs, _ = _linear_hyper()
        with pytest.raises(ValueError):
            node_system_solve(subs[:-1], LAPLACE, dec)


class TestRecompose:
    def test_linear_matches_global_solve(self):
        dec, subs, nodes = _linear_hyper(N1=4, N=8)
        bundle = recompose(subs, nodes, LAPLACE, dec)
        ref = linear_mode_solve(GridSpec(32, 1 / 32), 1.0, 0, 0.0, 1.0)
        got = np.array([s.coeff("uf^1") for s in bundle.lines])
        assert bundle.N == 32 and np.max(np.abs(got - ref)) <= 1e-8

    def test_interface_continuity(self):
        dec, subs, nodes = _linear_hyper()
        bundle = recompose(subs, nodes, LAPLACE, dec)
        for k in range(1, dec.N1):
            assert bundle.lines[k * dec.N] == nodes.values[k]


class TestPublished:
    def test_compat_nodes(self, compat_hyper):
        got = [u.constant_term() for u in compat_hyper.nodes.values[1:-1]]
        assert np.max(np.abs(np.array(got) - PUBLISHED_NODES)) <= 5e-3
        u9 = compat_hyper.nodes.values[9].coeff("uf^1")
        assert u9 == pytest.approx(0.311811, rel=2e-2)

    def test_compat_counts(self, compat_hyper):
        assert compat_hyper.nodes.sweeps == 384
        assert all(r.iterations == 34 for sb in compat_hyper.subdomains
                   for r in sb.bundle.reports[1:-1])

    def test_default_plateau(self, default_hyper):
        v = default_hyper.bundle.evaluate(ZERO, theta_grid(8))
        ts = default_hyper.bundle.grid.ts
        mid = (ts >= 1.3) & (ts <= 1.7)
        assert np.max(np.abs(v[mid] - ROOT)) <= 0.02

    def test_default_node_residual(self, default_hyper):
        dec = DecompositionSpec(10, 30)
        r = node_residual(default_hyper.nodes, default_hyper.subdomains, ProblemSpec(0.01), dec,
                          ZERO, theta_grid(8))
        assert np.max(np.abs(r)) <= 10 * dec.node_tolerance

    def test_default_passes_converge(self, default_hyper):
        assert default_hyper.pass_changes[-1] <= 1e-8
        assert default_hyper.bundle.families() <= {"uf"}

    def test_theta_independent(self, default_hyper):
        v = default_hyper.bundle.evaluate({"uf": FourierBoundary.constant(0.1)}, theta_grid(8))
        assert np.max(np.ptp(v, axis=1)) <= 1e-12

    def test_node_family(self):
        assert node_family(3) == "U3"
