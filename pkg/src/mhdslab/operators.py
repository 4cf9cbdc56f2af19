"""Differential operators in flattened coordinates.

``(grad_A f)_i = A_ij d_j f``, ``div_A X = A_ij d_j X_i``,
``lap_A = div_A grad_A``, ``(D_A u)_ij = A_ik d_k u_j + A_jk d_k u_i`` and
``(u . grad_A f)_i = u_j A_jk d_k f_i``.  Passing ``geom=None`` gives the
flat (equilibrium) operators.
"""
from __future__ import annotations

import numpy as np

from .discretization import (
    filter_field,
    gradient,
    horizontal_gradient,
    top,
)
from .errors import GridMismatchError

__all__ = [
    "grad_A",
    "div_A",
    "lap_A",
    "sym_grad_A",
    "advect_A",
    "surface_lap",
    "boundary_stress",
    "vector_gradient",
]


def _check_volume(f, plan, ncomp=None):
    shape = plan.volume_shape if ncomp is None else (ncomp,) + plan.volume_shape
    if np.shape(f) != shape:
        raise GridMismatchError(f"expected shape {shape}, got {np.shape(f)}")


def vector_gradient(u, plan):
    """``G[i, k] = d_k u_i`` for a volume vector field."""
    return np.stack([gradient(u[i], plan) for i in range(u.shape[0])])


def grad_A(f, geom, plan, dealias=False):
    _check_volume(f, plan)
    g = gradient(f, plan)
    out = g if geom is None else np.einsum("ij...,j...->i...", geom.Amat, g)
    return filter_field(out, plan, surface=False) if dealias else out


def div_A(X, geom, plan, dealias=False):
    _check_volume(X, plan, 3)
    G = vector_gradient(X, plan)
    if geom is None:
        out = G[0, 0] + G[1, 1] + G[2, 2]
    else:
        out = np.einsum("ij...,ij...->...", geom.Amat, G)
    return filter_field(out, plan, surface=False) if dealias else out


def lap_A(f, geom, plan, dealias=False):
    out = div_A(grad_A(f, geom, plan), geom, plan)
    return filter_field(out, plan, surface=False) if dealias else out


def sym_grad_A(u, geom, plan, dealias=False):
    """Symmetric ``A``-gradient, shape ``(3, 3) + volume``; symmetric by construction."""
    _check_volume(u, plan, 3)
    G = vector_gradient(u, plan)  # G[j, k] = d_k u_j
    if geom is None:
        T = np.swapaxes(G, 0, 1)
    else:
        T = np.einsum("ik...,jk...->ij...", geom.Amat, G)
    if dealias:
        T = filter_field(T, plan, surface=False)
    return T + np.swapaxes(T, 0, 1)


def advect_A(u, f, geom, plan, dealias=True):
    """``u . grad_A f`` for scalar or vector ``f``; the product is dealiased by default."""
    _check_volume(u, plan, 3)
    scalar = np.ndim(f) == 3
    fv = f[None] if scalar else f
    G = vector_gradient(fv, plan)  # G[i, k] = d_k f_i
    if geom is None:
        w = u
    else:
        w = np.einsum("j...,jk...->k...", u, geom.Amat)  # w_k = u_j A_jk
    out = np.einsum("k...,ik...->i...", w, G)
    if dealias:
        out = filter_field(out, plan, surface=False)
    return out[0] if scalar else out


def surface_lap(h, plan):
    """``d11 h + d22 h`` by Fourier multiplier."""
    hh = np.fft.rfft2(np.asarray(h, dtype=float), axes=(-2, -1))
    return np.fft.irfft2(-(plan.kmag ** 2) * hh, s=plan.surface_shape, axes=(-2, -1))


def boundary_stress(u, p, geom, plan):
    """Traction ``(p I - D_A u) N`` on the free surface, shape ``(3,) + surface``."""
    _check_volume(p, plan)
    S = -sym_grad_A(u, geom, plan)[..., 0]
    for i in range(3):
        S[i, i] += top(p)
    if geom is None:
        return S[:, 2].copy()
    return np.einsum("ij...,j...->i...", S, geom.Ncal)


def surface_gradient(h, plan):
    d1, d2 = horizontal_gradient(h, plan, surface=True)
    return np.stack([d1, d2])
