"""Self-check suites run by ``mhdslab verify <suite>`` at small, fixed resolution.

Manufactured fields are trigonometric in x1, x2 and polynomial in x3 of
degree below N3, so the spectral derivatives used to build the data are
exact up to rounding.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .diagnostics import balance_residual_flat, fit_decay, flat_energy
from .discretization import SpectralPlan, gradient, integrate_volume
from .geometry import compute_geometry, piola_residual, poisson_extend, validity_guard
from .operators import boundary_stress, div_A, grad_A, lap_A, sym_grad_A
from .solver import (
    IMEXStepper,
    initial_pressure,
    linear_eigenmode,
    poisson_dirichlet,
    stokes_dirichlet,
    stokes_stress_bc,
)
from .state import Params

__all__ = ["Check", "SUITES", "run_suite", "format_table"]


@dataclass
class Check:
    name: str
    value: float
    tolerance: float
    relation: str = "<="

    @property
    def passed(self):
        if not np.isfinite(self.value):
            return False
        if self.relation == "<=":
            return self.value <= self.tolerance
        return self.value >= self.tolerance


def _single_mode(plan, eps):
    X1, _ = plan.surface_mesh
    return eps * np.cos(2 * np.pi * X1 / plan.L1)


def geometry_suite():
    out = []
    plan = SpectralPlan(16, 16, 12)
    flat = compute_geometry(plan.zeros_surface(), plan)
    dev = max(np.abs(flat.J - 1).max(), np.abs(flat.K - 1).max(), np.abs(flat.A).max(),
              np.abs(flat.B).max(), np.abs(flat.Amat - np.eye(3)[:, :, None, None, None]).max())
    out.append(Check("flat reduction", dev, 1e-12))
    eta = _single_mode(plan, 0.01)
    g = compute_geometry(eta, plan)
    out.append(Check("J*K = 1", float(np.abs(g.J * g.K - 1).max()), 1e-12))
    X1, _, X3 = plan.mesh
    exact = 0.01 * np.cos(2 * np.pi * X1) * np.exp(2 * np.pi * X3)
    out.append(Check("Poisson extension closed form", float(np.abs(poisson_extend(eta, plan) - exact).max()), 1e-12))
    coarse = piola_residual(compute_geometry(_single_mode(SpectralPlan(16, 16, 8), 0.01), SpectralPlan(16, 16, 8)), SpectralPlan(16, 16, 8))
    fine_plan = SpectralPlan(32, 32, 16)
    fine = piola_residual(compute_geometry(_single_mode(fine_plan, 0.01), fine_plan), fine_plan)
    out.append(Check("Piola residual (32,32,17)", fine, 1e-8))
    out.append(Check("Piola refinement factor", coarse / max(fine, 1e-300), 10.0, ">="))
    out.append(Check("guard rejects eta = 10 cos", float(validity_guard(_single_mode(plan, 10.0), plan)), 0.0))
    return out


def operators_suite():
    out = []
    plan = SpectralPlan(16, 16, 12)
    rng = np.random.Generator(np.random.PCG64(7))
    X1, X2, X3 = plan.mesh
    f = np.sin(2 * np.pi * X1) * np.cos(2 * np.pi * X2) * (X3 ** 3 + X3)
    u = np.stack([f, np.cos(2 * np.pi * X1) * X3 ** 2, np.sin(2 * np.pi * X2) * (1 + X3)])
    flat = compute_geometry(plan.zeros_surface(), plan)
    dev = max(np.abs(grad_A(f, flat, plan) - gradient(f, plan)).max(),
              np.abs(div_A(u, flat, plan) - div_A(u, None, plan)).max(),
              np.abs(lap_A(f, flat, plan) - lap_A(f, None, plan)).max(),
              np.abs(sym_grad_A(u, flat, plan) - sym_grad_A(u, None, plan)).max())
    out.append(Check("flat-geometry reduction", dev, 1e-12))
    fine = SpectralPlan(16, 16, 16)
    Y1, _, Y3 = fine.mesh
    h = np.exp(2 * np.pi * Y3) * np.cos(2 * np.pi * Y1)
    scale = (2 * np.pi) ** 2  # size of each of the cancelling terms
    out.append(Check("harmonic function lap = 0 (relative, N3 = 16)",
                     float(np.abs(lap_A(h, None, fine)).max()) / scale, 1e-8))
    S = boundary_stress(np.stack([1 + X3, 0 * X3, 0 * X3]), plan.zeros_volume(), None, plan)
    out.append(Check("linear shear traction", float(np.abs(S - np.array([-1, 0, 0])[:, None, None]).max()), 1e-12))
    # integration by parts with the Piola weight for fields vanishing on the boundary
    eta = 0.02 * np.cos(2 * np.pi * plan.surface_mesh[0]) + 0.01 * np.sin(2 * np.pi * plan.surface_mesh[1])
    g = compute_geometry(eta, plan)
    bump = X3 * (1 + X3)
    Xv = np.stack([rng.standard_normal() * np.cos(2 * np.pi * X1) * bump,
                   np.sin(2 * np.pi * X2) * bump, np.cos(2 * np.pi * (X1 + X2)) * bump])
    ff = np.sin(2 * np.pi * X1) * (1 + X3 ** 2)
    ibp = integrate_volume(g.J * div_A(Xv, g, plan) * ff + g.J * np.sum(Xv * grad_A(ff, g, plan), axis=0), plan)
    out.append(Check("Piola integration by parts", abs(ibp), 1e-8))
    return out


def _manufactured(plan):
    X1, X2, X3 = plan.mesh
    s, c = np.sin, np.cos
    k = 2 * np.pi
    u = np.stack([
        s(k * X1) * c(k * X2) * (1 + X3) ** 2 * (X3 - 0.5),
        c(k * X1) * (1 + X3) * (X3 ** 2 + 0.3),
        s(k * X2) * (1 + X3) ** 3 + 0.2 * (1 + X3) ** 2,
    ])
    p = c(k * X1) * s(k * X2) * (X3 ** 2 - 1) + 0.7 + 0.1 * X3
    return u, p


def elliptic_suite():
    out = []
    plan = SpectralPlan(32, 32, 16)
    X1, X2, X3 = plan.mesh
    target = np.sin(np.pi * (X3 + 1)) * np.cos(2 * np.pi * X1) + X3 * (1 + X3) ** 2 * np.sin(2 * np.pi * X2)
    f = -lap_A(target, None, plan)
    out.append(Check("Poisson manufactured", float(np.abs(poisson_dirichlet(f, plan) - target).max()), 1e-7))

    zero_v = plan.zeros_volume(3)
    alpha = np.zeros((3,) + plan.surface_shape)
    alpha[2] = 1.7
    u, p = stokes_stress_bc(zero_v, plan.zeros_volume(), alpha, plan)
    out.append(Check("hydrostatic case", max(np.abs(u).max(), np.abs(p - 1.7).max()), 1e-11))

    u_ex, p_ex = _manufactured(plan)
    phi = -np.stack([lap_A(u_ex[i], None, plan) for i in range(3)]) + gradient(p_ex, plan)
    psi = div_A(u_ex, None, plan)
    alpha = boundary_stress(u_ex, p_ex, None, plan)
    u, p = stokes_stress_bc(phi, psi, alpha, plan)
    out.append(Check("Stokes (stress) manufactured", max(np.abs(u - u_ex).max(), np.abs(p - p_ex).max()), 1e-7))

    u, gp = stokes_dirichlet(phi, psi, u_ex[..., 0], u_ex[..., -1], plan)
    err = max(np.abs(u - u_ex).max(), np.abs(gp - gradient(p_ex, plan)).max())
    out.append(Check("Stokes (Dirichlet) manufactured", err, 1e-7))
    return out


def _linear_balance(plan, scheme, dt, t_end=0.6, t_start=0.2):
    params = Params(sigma=0.5)
    state, _ = linear_eigenmode(plan, params, (1, 0), 1e-3)
    state.p = initial_pressure(state.u, state.eta, plan, params.sigma)
    stepper = IMEXStepper(plan, params, dt, scheme=scheme, nonlinear=False, threads=1)
    q = 1 if scheme == "be" else 2
    hist, worst = [state], 0.0
    for _ in range(int(round(t_end / dt))):
        hist = (hist + [stepper.step(hist[-1])])[-(q + 1):]
        if hist[-1].t >= t_start - 1e-12 and len(hist) > q:
            worst = max(worst, abs(balance_residual_flat(hist, plan, q, linear=True)))
    return worst


def balance_suite():
    out = []
    plan = SpectralPlan(8, 8, 12)
    dts = [4e-2, 2e-2, 1e-2]
    for scheme, need in (("be", 0.9), ("bdf2", 1.8)):
        res = [_linear_balance(plan, scheme, dt) for dt in dts]
        order = np.polyfit(np.log(dts), np.log(res), 1)[0]
        out.append(Check(f"linear energy law order ({scheme})", float(order), need, ">="))
    return out


def decay_suite():
    plan = SpectralPlan(8, 8, 12)
    params = Params(sigma=0.1)
    state, _ = linear_eigenmode(plan, params, (1, 0), 1e-3)
    stepper = IMEXStepper(plan, params, 2e-2, scheme="bdf2", threads=1)
    series = []
    for _ in range(200):
        state = stepper.step(state)
        series.append((state.t, flat_energy(state, plan)))
    fit = fit_decay(series, "exponential", (1.0, 4.0))
    return [Check("exponential rate > 0", fit.rate, 0.0, ">="),
            Check("exponential fit r^2", fit.r_squared, 0.98, ">=")]


SUITES = {
    "geometry": geometry_suite,
    "operators": operators_suite,
    "elliptic": elliptic_suite,
    "balance": balance_suite,
    "decay": decay_suite,
}


def run_suite(name):
    """Run one suite; raises ``KeyError`` for an unknown name."""
    fn = SUITES[name]
    logging.getLogger("mhdslab").setLevel(logging.ERROR)
    return fn()


def format_table(checks):
    width = max(len(c.name) for c in checks)
    lines = []
    for c in checks:
        flag = "PASS" if c.passed else "FAIL"
        lines.append(f"{flag}  {c.name:<{width}}  {c.value:.3e} {c.relation} {c.tolerance:.1e}")
    return "\n".join(lines)
