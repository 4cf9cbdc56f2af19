"""Harmonic extension of the surface and the flattening quantities.

The flattening map sends the fixed slab to the moving fluid domain,

    Phi(x, t) = (x1, x2, x3 + eta_bar(x, t) * (1 + x3)),

where ``eta_bar`` is the Poisson extension of the surface elevation.  All the
metric quantities (A, B, J, K, the cofactor matrix ``Amat``) follow from it.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .discretization import (
    SpectralPlan,
    check_finite,
    d_vertical,
    horizontal_gradient,
)
from .errors import DegenerateGeometryError, GridMismatchError

__all__ = [
    "GeometryState",
    "poisson_extend",
    "compute_geometry",
    "piola_residual",
    "validity_guard",
    "guard_quantity",
    "mean_curvature",
    "flat_geometry",
]

#: bound on ||J-1||^2 + ||A||^2 + ||B||^2 (sup norms) for the small-data regime
GUARD_THRESHOLD = 0.5


@dataclass(frozen=True)
class GeometryState:
    """Flattening quantities derived from one surface elevation."""

    eta: np.ndarray
    eta_bar: np.ndarray
    A: np.ndarray
    B: np.ndarray
    J: np.ndarray
    K: np.ndarray
    Amat: np.ndarray  # (3, 3) + volume shape
    Ncal: np.ndarray  # (3,) + surface shape, non-unit normal
    M: np.ndarray     # mean curvature on Sigma
    b_tilde: np.ndarray

    @property
    def is_flat(self):
        return not np.any(self.eta)


def poisson_extend(eta, plan: SpectralPlan):
    """Poisson integral of ``eta`` restricted to the slab.

    Each horizontal Fourier coefficient is multiplied by ``exp(|k| x3)``;
    the zero mode extends constantly.
    """
    eta = check_finite(eta, "eta")
    if eta.shape[-2:] != plan.surface_shape:
        raise GridMismatchError(f"eta shape {eta.shape} does not match {plan}")
    eh = np.fft.rfft2(eta, axes=(-2, -1))
    kernel = np.exp(plan.kmag[..., None] * plan.x3)
    return np.fft.irfft2(eh[..., None] * kernel, s=plan.surface_shape, axes=(-3, -2))


def mean_curvature(eta, plan):
    """``div(D eta / sqrt(1 + |D eta|^2))`` with spectral derivatives."""
    e1, e2 = horizontal_gradient(eta, plan, surface=True)
    w = 1.0 / np.sqrt(1.0 + e1 * e1 + e2 * e2)
    d11, _ = horizontal_gradient(e1 * w, plan, surface=True)
    _, d22 = horizontal_gradient(e2 * w, plan, surface=True)
    return d11 + d22


def _assemble(eta, plan):
    eta_bar = poisson_extend(eta, plan)
    bt = plan.b_tilde
    d1, d2 = horizontal_gradient(eta_bar, plan, surface=False)
    d3 = d_vertical(eta_bar, plan)
    A = d1 * bt
    B = d2 * bt
    J = 1.0 + eta_bar + d3 * bt
    return eta_bar, A, B, J


def flat_geometry(plan):
    """The equilibrium geometry (eta = 0), with exact constants."""
    z = plan.zeros_volume()
    one = np.ones(plan.volume_shape)
    amat = np.zeros((3, 3) + plan.volume_shape)
    for i in range(3):
        amat[i, i] = 1.0
    ncal = np.zeros((3,) + plan.surface_shape)
    ncal[2] = 1.0
    return GeometryState(
        eta=plan.zeros_surface(), eta_bar=z, A=z.copy(), B=z.copy(), J=one,
        K=one.copy(), Amat=amat, Ncal=ncal, M=plan.zeros_surface(),
        b_tilde=plan.b_tilde,
    )


def compute_geometry(eta, plan: SpectralPlan):
    """All flattening quantities for the surface ``eta``.

    Raises
    ------
    DegenerateGeometryError
        If ``min J <= 0``, i.e. the map is not a diffeomorphism.
    """
    eta = check_finite(eta, "eta")
    eta_bar, A, B, J = _assemble(eta, plan)
    if np.min(J) <= 0.0:
        raise DegenerateGeometryError(f"min J = {np.min(J):.3e} <= 0")
    K = 1.0 / J
    amat = np.zeros((3, 3) + plan.volume_shape)
    amat[0, 0] = 1.0
    amat[1, 1] = 1.0
    amat[0, 2] = -A * K
    amat[1, 2] = -B * K
    amat[2, 2] = K
    e1, e2 = horizontal_gradient(eta, plan, surface=True)
    ncal = np.stack([-e1, -e2, np.ones(plan.surface_shape)])
    return GeometryState(
        eta=eta, eta_bar=eta_bar, A=A, B=B, J=J, K=K, Amat=amat, Ncal=ncal,
        M=mean_curvature(eta, plan), b_tilde=plan.b_tilde,
    )


def piola_residual(geom: GeometryState, plan: SpectralPlan):
    """``max_j max_x |d_k (J A_jk)|`` using the solver's spectral derivatives."""
    # subtract the identity so that constant summands differentiate to exactly 0
    ja = geom.J * geom.Amat - np.eye(3)[:, :, None, None, None]
    res = 0.0
    for j in range(3):
        d1, _ = horizontal_gradient(ja[j, 0], plan, surface=False)
        _, d2 = horizontal_gradient(ja[j, 1], plan, surface=False)
        div = d1 + d2 + d_vertical(ja[j, 2], plan)
        res = max(res, float(np.max(np.abs(div))))
    return res


def guard_quantity(eta, plan):
    """``||J-1||_inf^2 + ||A||_inf^2 + ||B||_inf^2`` (inf if eta is non-finite)."""
    eta = np.asarray(eta, dtype=float)
    if not np.all(np.isfinite(eta)):
        return np.inf
    _, A, B, J = _assemble(eta, plan)
    return float(np.max(np.abs(J - 1.0)) ** 2 + np.max(np.abs(A)) ** 2
                 + np.max(np.abs(B)) ** 2)


def validity_guard(eta, plan, threshold=GUARD_THRESHOLD):
    """True when the small-data bound on J, A, B holds (which also forces J > 0)."""
    return guard_quantity(eta, plan) <= threshold
