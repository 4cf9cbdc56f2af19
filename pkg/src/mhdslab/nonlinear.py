"""Nonlinear terms of the perturbed linear form.

With these terms the transformed system reads

    d_t u + grad p - lap u = G1,      div u = G2,
    d_t b - lap b = G3,
    (p I - D u) e3 = (eta - sigma lap* eta) e3 + G4   on the surface,
    d_t eta - u3 = G5                                  on the surface,

and it is algebraically identical to the transformed MHD system with the
flattening metric.  G1..G3 live in the slab, G4 and G5 on the surface.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .discretization import (
    d_vertical,
    filter_field,
    horizontal_gradient,
    integrate_surface,
    integrate_volume,
    top,
)
from .errors import HistoryError
from .geometry import GeometryState, compute_geometry, poisson_extend
from .operators import surface_lap, sym_grad_A, vector_gradient
from .state import SimState
from .timediff import backward_derivative

__all__ = [
    "NonlinearTerms",
    "compute_G",
    "kinematic_rate",
    "residual_transformed",
]


@dataclass
class NonlinearTerms:
    G1: np.ndarray
    G2: np.ndarray
    G3: np.ndarray
    G4: np.ndarray
    G5: np.ndarray

    def as_tuple(self):
        return (self.G1, self.G2, self.G3, self.G4, self.G5)

    def scaled_difference(self, other, a=2.0, b=-1.0):
        """``a * self + b * other`` termwise (used for extrapolation)."""
        return NonlinearTerms(*(a * x + b * y for x, y in zip(self.as_tuple(), other.as_tuple())))

    @classmethod
    def zeros(cls, plan):
        return cls(plan.zeros_volume(3), plan.zeros_volume(), plan.zeros_volume(3),
                   np.zeros((3,) + plan.surface_shape), plan.zeros_surface())


def kinematic_rate(u, eta, plan):
    """``d_t eta = u3 - u1 d1 eta - u2 d2 eta`` evaluated on the surface."""
    e1, e2 = horizontal_gradient(eta, plan, surface=True)
    us = u[..., 0]
    return us[2] - us[0] * e1 - us[1] * e2


class _Metric:
    """Derivatives of the metric coefficients needed by G1 and G3."""

    def __init__(self, geom: GeometryState, plan):
        A, B, J, K = geom.A, geom.B, geom.J, geom.K
        dA1, _ = horizontal_gradient(A, plan, surface=False)
        _, dB2 = horizontal_gradient(B, plan, surface=False)
        dJ1, dJ2 = horizontal_gradient(J, plan, surface=False)
        dJ3 = d_vertical(J, plan)
        dA3 = d_vertical(A, plan)
        dB3 = d_vertical(B, plan)
        q = 1.0 + A * A + B * B
        self.AK = A * K
        self.BK = B * K
        self.c33 = K * K * q - 1.0
        self.c3 = (-K ** 3 * q * dJ3 + A * K * K * (dJ1 + dA3)
                   + B * K * K * (dJ2 + dB3) - K * (dA1 + dB2))


def _second_order_metric_terms(f, Gf, met, plan):
    """``(lap_A - lap) f_i`` in expanded form, for each component of a vector ``f``."""
    out = np.empty_like(f)
    for i in range(3):
        d3 = Gf[i, 2]
        d33 = d_vertical(d3, plan)
        d13 = d_vertical(Gf[i, 0], plan)
        d23 = d_vertical(Gf[i, 1], plan)
        out[i] = (met.c33 * d33 - 2.0 * met.AK * d13 - 2.0 * met.BK * d23
                  + met.c3 * d3)
    return out


def _advect(w, Gf):
    """``w_k d_k f_i`` with ``w_k = v_j A_jk`` precomputed."""
    return np.einsum("k...,ik...->i...", w, Gf)


def compute_G(state: SimState, geom: GeometryState, plan, dealias=True):
    """Assemble G1..G5 from the instantaneous state.

    ``d_t eta_bar`` (in G1 and G3) is the Poisson extension of the kinematic
    rate at the current state.  Terms proportional to ``sigma`` are skipped
    when ``sigma == 0``.
    """
    u, p, b, eta = state.u, state.p, state.b, state.eta
    sigma = state.params.sigma
    Bbar = np.asarray(state.params.Bbar)
    met = _Metric(geom, plan)
    K, bt, amat = geom.K, geom.b_tilde, geom.Amat

    Gu = vector_gradient(u, plan)
    Gb = vector_gradient(b, plan)
    dp1, dp2 = horizontal_gradient(p, plan, surface=False)
    dp3 = d_vertical(p, plan)

    eta_t = kinematic_rate(u, eta, plan)
    if dealias:
        eta_t = filter_field(eta_t, plan, surface=True)
    drift = poisson_extend(eta_t, plan) * bt * K

    # transport velocities u_j A_jk and (b_j + Bbar_j) A_jk
    wu = np.einsum("j...,jk...->k...", u, amat)
    bfull = b + Bbar[:, None, None, None]
    wb = np.einsum("j...,jk...->k...", bfull, amat)

    G1 = np.empty_like(u)
    G1[0] = met.AK * dp3
    G1[1] = met.BK * dp3
    G1[2] = (1.0 - K) * dp3
    G1 += drift * Gu[:, 2]
    G1 += -_advect(wu, Gu) + _advect(wb, Gb)
    G1 += _second_order_metric_terms(u, Gu, met, plan)

    G2 = met.AK * Gu[0, 2] + met.BK * Gu[1, 2] + (1.0 - K) * Gu[2, 2]

    G3 = drift * Gb[:, 2]
    G3 += -_advect(wu, Gb) + _advect(wb, Gu)
    G3 += _second_order_metric_terms(b, Gb, met, plan)

    # surface terms: everything differentiated first, then restricted to x3 = 0
    ncal = geom.Ncal
    e1, e2 = -ncal[0], -ncal[1]
    DA = sym_grad_A(u, geom, plan)[..., 0]
    Dflat = (Gu + np.swapaxes(Gu, 0, 1))[..., 0]
    ps = top(p)
    G4 = np.einsum("ij...,j...->i...", DA, ncal) - Dflat[:, 2]
    G4[0] += (ps - eta) * e1
    G4[1] += (ps - eta) * e2
    if sigma != 0.0:
        lap_eta = surface_lap(eta, plan)
        G4 -= sigma * (geom.M - lap_eta) * ncal
        G4[0] -= sigma * lap_eta * (-e1)
        G4[1] -= sigma * lap_eta * (-e2)

    G5 = -(u[0, ..., 0] * e1 + u[1, ..., 0] * e2)

    if dealias:
        G1 = filter_field(G1, plan, surface=False)
        G2 = filter_field(G2, plan, surface=False)
        G3 = filter_field(G3, plan, surface=False)
        G4 = filter_field(G4, plan, surface=True)
        G5 = filter_field(G5, plan, surface=True)
    return NonlinearTerms(G1, G2, G3, G4, G5)


def _flat_laplacian(f, plan):
    """Flat Laplacian of a scalar or vector volume field."""
    fh = np.fft.rfft2(f, axes=(-3, -2))
    lap_h = np.fft.irfft2(-(plan.kmag ** 2)[..., None] * fh, s=plan.surface_shape, axes=(-3, -2))
    return lap_h + np.tensordot(f, plan.cheb_D2, axes=([-1], [1]))


def _interior_l2(f, plan):
    """L2 norm over the slab restricted to interior vertical nodes."""
    g = np.array(f, copy=True)
    g[..., 0] = 0.0
    g[..., -1] = 0.0
    sq = g * g
    if sq.ndim == 4:
        sq = sq.sum(axis=0)
    return float(np.sqrt(max(integrate_volume(sq, plan), 0.0)))


def _surface_l2(f, plan):
    sq = f * f
    if sq.ndim == 3:
        sq = sq.sum(axis=0)
    return float(np.sqrt(max(integrate_surface(sq, plan), 0.0)))


def residual_transformed(history, plan, accuracy=1, dealias=True):
    """Residual norms of the perturbed linear form at the newest state of ``history``.

    Time derivatives are backward differences of the stored states (ordered
    oldest to newest, uniformly spaced).  Volume residuals are measured on
    interior nodes, where the momentum and induction equations are collocated.
    """
    if len(history) < 2:
        raise HistoryError("residual_transformed needs at least 2 stored states")
    accuracy = min(accuracy, len(history) - 1)
    dt = history[-1].t - history[-2].t
    if dt <= 0:
        raise HistoryError("history times must be strictly increasing")
    s = history[-1]
    geom = compute_geometry(s.eta, plan)
    G = compute_G(s, geom, plan, dealias=dealias)
    ut = backward_derivative([h.u for h in history], 1, accuracy, dt)
    bt_ = backward_derivative([h.b for h in history], 1, accuracy, dt)
    etat = backward_derivative([h.eta for h in history], 1, accuracy, dt)
    Gu = vector_gradient(s.u, plan)
    sigma = s.params.sigma

    gp = np.stack([*horizontal_gradient(s.p, plan, surface=False), d_vertical(s.p, plan)])
    r_mom = ut + gp - _flat_laplacian(s.u, plan) - G.G1
    r_div = Gu[0, 0] + Gu[1, 1] + Gu[2, 2] - G.G2
    r_ind = bt_ - _flat_laplacian(s.b, plan) - G.G3
    stress = -(Gu + np.swapaxes(Gu, 0, 1))[:, 2, ..., 0]
    stress[2] += top(s.p)
    stress[2] -= s.eta - sigma * surface_lap(s.eta, plan)
    r_str = stress - G.G4
    r_kin = etat - s.u[2, ..., 0] - G.G5
    return {
        "momentum": _interior_l2(r_mom, plan),
        "divergence": _interior_l2(r_div, plan),
        "induction": _interior_l2(r_ind, plan),
        "stress": _surface_l2(r_str, plan),
        "kinematic": _surface_l2(r_kin, plan),
    }
