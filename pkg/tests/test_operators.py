import numpy as np
import pytest
import sympy as sp
from hypothesis import given, strategies as st

from mhdslab.discretization import SpectralPlan, gradient, integrate_volume
from mhdslab.errors import GridMismatchError
from mhdslab.geometry import compute_geometry
from mhdslab.operators import (
    advect_A,
    boundary_stress,
    div_A,
    grad_A,
    lap_A,
    surface_lap,
    sym_grad_A,
)

EPS = 0.01
y1, y2, y3 = sp.symbols("y1 y2 y3")
x1, x2, x3 = sp.symbols("x1 x2 x3")


@pytest.fixture(scope="module")
def curved():
    """Fine plan, single-mode surface and its geometry."""
    plan = SpectralPlan(32, 32, 20)
    eta = EPS * np.cos(2 * np.pi * plan.surface_mesh[0])
    return plan, compute_geometry(eta, plan)


def _compose(expr, plan):
    """Sample g(Phi(x)) on the volume grid for the single-mode surface; Phi_3 = x3 + ebar (1 + x3)."""
    ebar = EPS * sp.cos(2 * sp.pi * x1) * sp.exp(2 * sp.pi * x3)
    phi3 = x3 + ebar * (1 + x3)
    fn = sp.lambdify((x1, x2, x3), expr.subs({y1: x1, y2: x2, y3: phi3}, simultaneous=True), "numpy")
    X1, X2, X3 = plan.mesh
    return np.broadcast_to(fn(X1, X2, X3), plan.volume_shape).astype(float)


G_SMOOTH = sp.sin(2 * sp.pi * y1) * sp.cos(2 * sp.pi * y2) * (y3 ** 2 + y3) + sp.cos(2 * sp.pi * y1) * y3
G_HARMONIC = sp.exp(2 * sp.pi * y3) * sp.cos(2 * sp.pi * y1)


class TestGradient:
    def test_flat_is_plain_gradient(self, plan):
        X1, X2, X3 = plan.mesh
        f = np.sin(2 * np.pi * X1) * (X3 ** 3 + X2 * 0 + 1)
        flat = compute_geometry(plan.zeros_surface(), plan)
        assert np.abs(grad_A(f, flat, plan) - gradient(f, plan)).max() < 1e-12

    def test_linear_x3(self, plan):
        _, _, X3 = plan.mesh
        g = grad_A(X3, None, plan)
        assert np.abs(g - np.array([0, 0, 1.0])[:, None, None, None]).max() < 1e-12

    def test_chain_rule_oracle(self, curved):
        plan, geom = curved
        f = _compose(G_SMOOTH, plan)
        exact = np.stack([_compose(sp.diff(G_SMOOTH, v), plan) for v in (y1, y2, y3)])
        assert np.abs(grad_A(f, geom, plan) - exact).max() < 1e-9

    def test_grid_mismatch(self, plan):
        with pytest.raises(GridMismatchError):
            grad_A(np.zeros((8, 8, 5)), None, plan)


class TestDivergenceAndLaplacian:
    def test_constant_vector(self, curved):
        plan, geom = curved
        X = np.broadcast_to(np.array([1.0, -2.0, 0.5])[:, None, None, None], (3,) + plan.volume_shape)
        assert np.abs(div_A(np.array(X), geom, plan)).max() < 1e-10

    def test_harmonic_composition(self):
        # the composed profile is not polynomial in x3, so the residual converges spectrally
        errs = []
        for n3 in (16, 20, 28):
            plan = SpectralPlan(32, 32, n3)
            geom = compute_geometry(EPS * np.cos(2 * np.pi * plan.surface_mesh[0]), plan)
            f = _compose(G_HARMONIC, plan)
            errs.append(np.abs(div_A(grad_A(f, geom, plan), geom, plan)).max() / (2 * np.pi) ** 2)
        assert errs[0] / errs[1] > 30 and errs[1] / errs[2] > 100
        assert errs[2] < 1e-10

    def test_curved_laplacian_oracle(self, curved):
        plan, geom = curved
        f = _compose(G_SMOOTH, plan)
        lap = sum(sp.diff(G_SMOOTH, v, 2) for v in (y1, y2, y3))
        assert np.abs(lap_A(f, geom, plan) - _compose(lap, plan)).max() < 1e-7

    def test_flat_harmonic(self):
        plan = SpectralPlan(16, 16, 16)
        X1, _, X3 = plan.mesh
        lap = lap_A(np.exp(2 * np.pi * X3) * np.cos(2 * np.pi * X1), None, plan)
        # relative to the size of the two cancelling terms, (2 pi)^2
        assert np.abs(lap).max() / (2 * np.pi) ** 2 < 1e-8

    @given(st.integers(0, 2 ** 31 - 1))
    def test_piola_integration_by_parts(self, seed):
        plan = SpectralPlan(16, 16, 12)
        rng = np.random.default_rng(seed)
        X1, X2, X3 = plan.mesh
        c = rng.standard_normal(6)
        eta = 0.01 * (c[0] * np.cos(2 * np.pi * plan.surface_mesh[0])
                      + c[1] * np.sin(2 * np.pi * plan.surface_mesh[1]))
        geom = compute_geometry(eta, plan)
        bump = X3 * (1 + X3)
        X = np.stack([c[2] * np.cos(2 * np.pi * X1) * bump, c[3] * np.sin(2 * np.pi * X2) * bump,
                      c[4] * np.cos(2 * np.pi * (X1 + X2)) * bump])
        f = np.sin(2 * np.pi * X1) * (1 + c[5] * X3 ** 2)
        total = integrate_volume(geom.J * div_A(X, geom, plan) * f
                                 + geom.J * np.sum(X * grad_A(f, geom, plan), axis=0), plan)
        assert abs(total) < 1e-8

    @given(st.integers(0, 2 ** 31 - 1), st.floats(-3, 3), st.floats(-3, 3))
    def test_linearity(self, seed, a, b):
        plan = SpectralPlan(8, 8, 8)
        rng = np.random.default_rng(seed)
        geom = compute_geometry(0.01 * np.cos(2 * np.pi * plan.surface_mesh[0]), plan)
        f, g = rng.standard_normal((2,) + plan.volume_shape)
        u, v = rng.standard_normal((2, 3) + plan.volume_shape)
        for op, p, q in ((grad_A, f, g), (lap_A, f, g), (div_A, u, v), (sym_grad_A, u, v)):
            lhs = op(a * p + b * q, geom, plan)
            rhs = a * op(p, geom, plan) + b * op(q, geom, plan)
            assert np.abs(lhs - rhs).max() <= 1e-9 * max(1.0, np.abs(rhs).max())


class TestSymmetricGradient:
    def test_zero(self, plan):
        assert not np.any(sym_grad_A(plan.zeros_volume(3), None, plan))

    def test_shear(self, plan):
        _, _, X3 = plan.mesh
        u = np.stack([X3, 0 * X3, 0 * X3])
        S = sym_grad_A(u, None, plan)
        expected = np.zeros((3, 3))
        expected[0, 2] = expected[2, 0] = 1.0
        assert np.abs(S - expected[:, :, None, None, None]).max() < 1e-12

    def test_symmetric(self, curved):
        plan, geom = curved
        u = np.random.default_rng(5).standard_normal((3,) + plan.volume_shape)
        S = sym_grad_A(u, geom, plan)
        assert np.array_equal(S, np.swapaxes(S, 0, 1))

    def test_finite_difference_oracle(self, plan):
        rng = np.random.default_rng(11)
        c = rng.standard_normal((3, 4))

        def field(x, y, z):
            return np.stack([
                c[i, 0] * np.sin(2 * np.pi * x + c[i, 1]) * np.cos(2 * np.pi * y) * (1 + c[i, 2] * z + c[i, 3] * z ** 2)
                for i in range(3)])

        X1, X2, X3 = plan.mesh
        h = 1e-5
        grads = []
        for k in range(3):
            d = [0.0, 0.0, 0.0]
            d[k] = h
            plus = field(X1 + d[0], X2 + d[1], X3 + d[2])
            minus = field(X1 - d[0], X2 - d[1], X3 - d[2])
            grads.append((plus - minus) / (2 * h))
        G = np.stack(grads, axis=1)  # G[i, k] = d_k u_i
        fd = G + np.swapaxes(G, 0, 1)
        assert np.abs(sym_grad_A(field(X1, X2, X3), None, plan) - fd).max() < 1e-7


class TestAdvection:
    def test_zero_velocity(self, curved):
        plan, geom = curved
        f = np.random.default_rng(0).standard_normal(plan.volume_shape)
        assert not np.any(advect_A(plan.zeros_volume(3), f, geom, plan))

    def test_constant_velocity_single_mode(self, plan):
        X1, X2, _ = plan.mesh
        f = np.cos(2 * np.pi * (X1 + 2 * X2))
        c = np.array([0.3, -1.2, 0.7])
        u = np.broadcast_to(c[:, None, None, None], (3,) + plan.volume_shape).copy()
        expected = np.einsum("k,k...->...", c, gradient(f, plan))
        assert np.abs(advect_A(u, f, None, plan) - expected).max() < 1e-12

    def test_curved_composition_oracle(self, curved):
        plan, geom = curved
        vel = [sp.cos(2 * sp.pi * y2) * (1 + y3), sp.sin(2 * sp.pi * y1) * y3, y3 * (1 + y3)]
        u = np.stack([_compose(e, plan) for e in vel])
        f = _compose(G_SMOOTH, plan)
        exact = _compose(sum(vel[k] * sp.diff(G_SMOOTH, v) for k, v in enumerate((y1, y2, y3))), plan)
        assert np.abs(advect_A(u, f, geom, plan, dealias=False) - exact).max() < 1e-9


class TestSurfaceOperators:
    def test_surface_lap_single_mode(self):
        plan = SpectralPlan(16, 16, 8, L1=2.0)
        X1, X2 = plan.surface_mesh
        mode = np.cos(2 * np.pi * (X1 / 2.0 + 3 * X2))
        k2 = (2 * np.pi / 2.0) ** 2 + (6 * np.pi) ** 2
        assert np.abs(surface_lap(mode, plan) + k2 * mode).max() < 1e-10

    def test_surface_lap_constant(self, plan):
        assert np.abs(surface_lap(np.full(plan.surface_shape, 2.0), plan)).max() < 1e-12

    def test_surface_lap_sympy(self, plan):
        expr = sp.sin(2 * sp.pi * x1) ** 2 * sp.cos(4 * sp.pi * x2) + sp.cos(2 * sp.pi * (x1 - x2))
        X1, X2 = plan.surface_mesh
        f = sp.lambdify((x1, x2), expr, "numpy")(X1, X2)
        exact = sp.lambdify((x1, x2), sp.diff(expr, x1, 2) + sp.diff(expr, x2, 2), "numpy")(X1, X2)
        assert np.abs(surface_lap(f, plan) - exact).max() < 1e-10

    def test_hydrostatic_traction(self, plan):
        t = boundary_stress(plan.zeros_volume(3), np.full(plan.volume_shape, 2.5), None, plan)
        assert np.abs(t - np.array([0, 0, 2.5])[:, None, None]).max() < 1e-14

    def test_linear_shear_traction(self, plan):
        _, _, X3 = plan.mesh
        t = boundary_stress(np.stack([X3 + 1, 0 * X3, 0 * X3]), plan.zeros_volume(), None, plan)
        assert np.abs(t - np.array([-1.0, 0, 0])[:, None, None]).max() < 1e-12

    def test_curved_traction_symbolic(self, curved):
        plan, geom = curved
        ebar = EPS * sp.cos(2 * sp.pi * x1) * sp.exp(2 * sp.pi * x3)
        bt = 1 + x3
        A = sp.diff(ebar, x1) * bt
        J = 1 + ebar + sp.diff(ebar, x3) * bt
        K = 1 / J
        Am = sp.Matrix([[1, 0, -A * K], [0, 1, 0], [0, 0, K]])
        u = [sp.sin(2 * sp.pi * x1) * (x3 ** 2 + 1), sp.cos(2 * sp.pi * x2) * x3, (1 + x3) ** 2]
        p = sp.cos(2 * sp.pi * x1) + x3
        X = (x1, x2, x3)
        Gs = sp.Matrix(3, 3, lambda i, j: sum(Am[i, k] * sp.diff(u[j], X[k]) for k in range(3)))
        D = Gs + Gs.T
        eta = EPS * sp.cos(2 * sp.pi * x1)
        N = sp.Matrix([-sp.diff(eta, x1), 0, 1])
        T = ((p * sp.eye(3) - D) * N).subs(x3, 0)
        X1, X2 = plan.surface_mesh
        exact = np.stack([np.broadcast_to(sp.lambdify((x1, x2), T[i], "numpy")(X1, X2), X1.shape)
                          for i in range(3)])
        Xv = plan.mesh
        uv = np.stack([np.broadcast_to(sp.lambdify(X, e, "numpy")(*Xv), plan.volume_shape) for e in u])
        pv = np.broadcast_to(sp.lambdify(X, p, "numpy")(*Xv), plan.volume_shape)
        assert np.abs(boundary_stress(uv, np.array(pv), geom, plan) - exact).max() < 1e-9
