import numpy as np
import pytest
import sympy as sp
from hypothesis import given, strategies as st

from mhdslab.discretization import SpectralPlan
from mhdslab.errors import DegenerateGeometryError, InvalidFieldError
from mhdslab.geometry import (
    compute_geometry,
    flat_geometry,
    guard_quantity,
    mean_curvature,
    piola_residual,
    poisson_extend,
    validity_guard,
)

from conftest import band_limited_surface, fd_harmonicity


class TestPoissonExtension:
    def test_zero(self, plan):
        assert not np.any(poisson_extend(plan.zeros_surface(), plan))

    def test_single_mode_closed_form(self):
        plan = SpectralPlan(32, 32, 16)
        X1, _, X3 = plan.mesh
        eta = np.cos(2 * np.pi * plan.surface_mesh[0])
        exact = np.cos(2 * np.pi * X1) * np.exp(2 * np.pi * X3)
        assert np.abs(poisson_extend(eta, plan) - exact).max() < 1e-12

    def test_zero_mode_extends_constantly(self, plan):
        ebar = poisson_extend(np.full(plan.surface_shape, 0.3), plan)
        assert np.abs(ebar - 0.3).max() < 1e-15

    def test_top_trace_is_eta(self, plan):
        eta = band_limited_surface(np.random.default_rng(1), plan, scale=0.01)
        assert np.abs(poisson_extend(eta, plan)[..., 0] - eta).max() < 1e-15

    def test_rejects_nan(self, plan):
        eta = plan.zeros_surface()
        eta[2, 3] = np.nan
        with pytest.raises(InvalidFieldError):
            poisson_extend(eta, plan)

    def test_harmonicity_second_order_fd_oracle(self):
        # truncation error of the 7-point stencil is h^2/12 (d1^4 + d2^4 + d3^4) of the extension
        modes = [(1, 0, 0.7), (1, 1, -0.4), (0, 2, 0.3), (2, -1, 0.2)]

        def eta_fn(x, y):
            return sum(a * np.cos(2 * np.pi * (m1 * x + m2 * y)) for m1, m2, a in modes)

        bound = sum(abs(a) * ((2 * np.pi) ** 4 / 12) * (m1 ** 4 + m2 ** 4 + (m1 * m1 + m2 * m2) ** 2)
                    for m1, m2, a in modes)
        res = {n: fd_harmonicity(eta_fn, n) for n in (32, 64, 128)}
        for n, r in res.items():
            assert r <= bound / n ** 2
        # observed order approaches 2 once h |k| is small
        assert np.log2(res[32] / res[64]) > 1.6
        assert np.log2(res[64] / res[128]) > 1.85


class TestComputeGeometry:
    def test_flat(self, plan):
        g = compute_geometry(plan.zeros_surface(), plan)
        assert not np.any(g.A) and not np.any(g.B)
        assert np.all(g.J == 1.0) and np.all(g.K == 1.0)
        assert np.all(g.Amat == np.eye(3)[:, :, None, None, None])
        assert np.all(g.Ncal == np.array([0.0, 0.0, 1.0])[:, None, None])
        assert not np.any(g.M)
        assert g.is_flat

    def test_flat_geometry_helper_matches(self, plan):
        a, b = flat_geometry(plan), compute_geometry(plan.zeros_surface(), plan)
        for name in ("A", "B", "J", "K", "Amat", "Ncal", "M"):
            assert np.array_equal(getattr(a, name), getattr(b, name))

    def test_jacobian_symbolic(self):
        plan = SpectralPlan(16, 16, 20)
        x1, x3 = sp.symbols("x1 x3")
        eps = sp.Rational(1, 100)
        ebar = eps * sp.cos(2 * sp.pi * x1) * sp.exp(2 * sp.pi * x3)
        J = sp.lambdify((x1, x3), 1 + ebar + (1 + x3) * sp.diff(ebar, x3), "numpy")
        X1, _, X3 = plan.mesh
        g = compute_geometry(0.01 * np.cos(2 * np.pi * plan.surface_mesh[0]), plan)
        assert np.abs(g.J - J(X1, X3)).max() < 1e-12

    def test_matrix_pattern(self, plan):
        eta = band_limited_surface(np.random.default_rng(2), plan, scale=0.01)
        g = compute_geometry(eta, plan)
        assert np.all(g.Amat[0, 0] == 1) and np.all(g.Amat[1, 1] == 1)
        for i, j in ((0, 1), (1, 0), (2, 0), (2, 1)):
            assert not np.any(g.Amat[i, j])
        assert np.allclose(g.Amat[0, 2], -g.A * g.K)
        assert np.allclose(g.Amat[1, 2], -g.B * g.K)
        assert np.array_equal(g.Amat[2, 2], g.K)

    def test_bottom_anchored(self, plan):
        eta = band_limited_surface(np.random.default_rng(3), plan, scale=0.01)
        g = compute_geometry(eta, plan)
        assert np.all(g.b_tilde[..., -1] == 0.0)
        assert np.all(g.A[..., -1] == 0.0) and np.all(g.B[..., -1] == 0.0)

    def test_degenerate_raises(self, plan):
        with pytest.raises(DegenerateGeometryError):
            compute_geometry(10 * np.cos(2 * np.pi * plan.surface_mesh[0]), plan)

    def test_mean_curvature_small_slope(self, plan):
        # for small amplitude M is close to the surface Laplacian: -eps (2 pi)^2 cos
        X1, _ = plan.surface_mesh
        eps = 1e-6
        M = mean_curvature(eps * np.cos(2 * np.pi * X1), plan)
        assert np.abs(M + eps * (2 * np.pi) ** 2 * np.cos(2 * np.pi * X1)).max() < 1e-12

    @given(st.integers(0, 2 ** 31 - 1), st.floats(1e-4, 2e-2))
    def test_reciprocal(self, seed, scale):
        plan = SpectralPlan(16, 16, 8)
        g = compute_geometry(band_limited_surface(np.random.default_rng(seed), plan, scale=scale), plan)
        assert np.abs(g.J * g.K - 1).max() < 1e-12


class TestPiola:
    def test_flat_exact(self, plan):
        assert piola_residual(compute_geometry(plan.zeros_surface(), plan), plan) == 0.0

    def test_refinement(self):
        res = []
        for n, n3 in ((16, 8), (32, 16)):
            p = SpectralPlan(n, n, n3)
            res.append(piola_residual(compute_geometry(0.01 * np.cos(2 * np.pi * p.surface_mesh[0]), p), p))
        assert res[1] < 1e-8
        assert res[0] / res[1] >= 10

    def test_slope_point_one(self):
        p = SpectralPlan(32, 32, 16)
        X1, X2 = p.surface_mesh
        eta = 0.012 * np.cos(2 * np.pi * X1) + 0.008 * np.sin(2 * np.pi * (X1 + X2))
        e1 = 2 * np.pi * np.abs(0.012 * np.sin(2 * np.pi * X1) - 0.008 * np.cos(2 * np.pi * (X1 + X2)))
        assert 0.05 < e1.max() < 0.2
        assert piola_residual(compute_geometry(eta, p), p) < 1e-6

    def test_monotone_within_factor_two(self):
        prev = np.inf
        for n, n3 in ((8, 6), (16, 10), (32, 18)):
            p = SpectralPlan(n, n, n3)
            eta = 0.02 * np.cos(2 * np.pi * p.surface_mesh[0]) * np.cos(2 * np.pi * p.surface_mesh[1])
            r = piola_residual(compute_geometry(eta, p), p)
            assert r <= 2 * prev
            prev = r


class TestGuard:
    def test_flat(self, plan):
        assert validity_guard(plan.zeros_surface(), plan)

    def test_large_fails(self, plan):
        assert not validity_guard(10 * np.cos(2 * np.pi * plan.surface_mesh[0]), plan)

    def test_small_passes(self, plan):
        assert validity_guard(0.01 * np.cos(2 * np.pi * plan.surface_mesh[0]), plan)

    def test_nan_fails(self, plan):
        eta = plan.zeros_surface()
        eta[0, 0] = np.inf
        assert not validity_guard(eta, plan)

    @given(st.floats(1e-5, 1.0))
    def test_guard_implies_positive_jacobian(self, amp):
        p = SpectralPlan(16, 16, 8)
        eta = amp * np.cos(2 * np.pi * p.surface_mesh[0]) * np.sin(2 * np.pi * p.surface_mesh[1])
        if validity_guard(eta, p):
            assert compute_geometry(eta, p).J.min() > 0
        assert guard_quantity(eta, p) >= 0
