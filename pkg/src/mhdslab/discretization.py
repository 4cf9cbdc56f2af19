"""Fourier--Chebyshev discretization of the slab Omega = Sigma x (-1, 0).

Grid conventions
----------------
* Horizontal: uniform periodic grid, ``x1 = L1 * i / N1``, ``x2 = L2 * j / N2``.
* Vertical: Chebyshev--Lobatto nodes mapped to [-1, 0], ordered from the free
  surface (index 0, ``x3 = 0``) down to the rigid bottom (index ``N3``,
  ``x3 = -1``).

Array layouts
-------------
* surface field:         ``(N1, N2)``
* surface vector field:  ``(3, N1, N2)``
* volume field:          ``(N1, N2, N3 + 1)``
* volume vector field:   ``(3, N1, N2, N3 + 1)``
* volume tensor field:   ``(3, 3, N1, N2, N3 + 1)``

Horizontal spectra use the unnormalized ``numpy.fft.rfft2`` over the two
horizontal axes.
"""
from __future__ import annotations

from functools import cached_property

import numpy as np
from numpy.polynomial import chebyshev as cheb

from .errors import GridMismatchError, InvalidFieldError

__all__ = [
    "SpectralPlan",
    "cheb_nodes",
    "cheb_matrix",
    "clenshaw_curtis_weights",
    "d_horizontal",
    "d_vertical",
    "horizontal_gradient",
    "gradient",
    "integrate_volume",
    "integrate_surface",
    "dealias",
    "filter_field",
    "to_spectral",
    "from_spectral",
    "top",
    "bottom",
]


def cheb_nodes(n3):
    """Chebyshev--Lobatto nodes on [-1, 0], strictly decreasing from 0."""
    x = np.cos(np.pi * np.arange(n3 + 1) / n3)
    return 0.5 * (x - 1.0)


def cheb_matrix(n3):
    """Collocation differentiation matrix d/dx3 on the nodes of :func:`cheb_nodes`."""
    x = np.cos(np.pi * np.arange(n3 + 1) / n3)
    c = np.hstack([2.0, np.ones(n3 - 1), 2.0]) * (-1.0) ** np.arange(n3 + 1)
    dx = x[:, None] - x[None, :]
    d = np.outer(c, 1.0 / c) / (dx + np.eye(n3 + 1))
    # negative-sum trick: rows annihilate constants to roundoff
    d -= np.diag(d.sum(axis=1))
    return 2.0 * d


def clenshaw_curtis_weights(n3):
    """Clenshaw--Curtis weights for the nodes of :func:`cheb_nodes` (interval length 1)."""
    theta = np.pi * np.arange(n3 + 1) / n3
    w = np.zeros(n3 + 1)
    inner = np.arange(1, n3)
    v = np.ones(n3 - 1)
    if n3 % 2 == 0:
        w[0] = w[n3] = 1.0 / (n3 ** 2 - 1)
        for k in range(1, n3 // 2):
            v -= 2.0 * np.cos(2 * k * theta[inner]) / (4 * k * k - 1)
        v -= np.cos(n3 * theta[inner]) / (n3 ** 2 - 1)
    else:
        w[0] = w[n3] = 1.0 / n3 ** 2
        for k in range(1, (n3 - 1) // 2 + 1):
            v -= 2.0 * np.cos(2 * k * theta[inner]) / (4 * k * k - 1)
    w[inner] = 2.0 * v / n3
    return 0.5 * w


class SpectralPlan:
    """Immutable description of the grid plus all precomputed operators.

    Parameters
    ----------
    N1, N2 : int
        Horizontal grid sizes (even, >= 4).
    N3 : int
        Chebyshev polynomial degree; the vertical grid has ``N3 + 1`` nodes.
    L1, L2 : float
        Horizontal periods.
    """

    def __init__(self, N1=32, N2=32, N3=16, L1=1.0, L2=1.0):
        for name, n in (("N1", N1), ("N2", N2)):
            if int(n) != n or n < 4 or n % 2:
                raise ValueError(f"{name} must be an even integer >= 4, got {n}")
        if int(N3) != N3 or N3 < 4:
            raise ValueError(f"N3 must be an integer >= 4, got {N3}")
        if not (L1 > 0 and L2 > 0):
            raise ValueError("periods must be positive")
        self.N1, self.N2, self.N3 = int(N1), int(N2), int(N3)
        self.L1, self.L2 = float(L1), float(L2)

        self.x1 = self.L1 * np.arange(self.N1) / self.N1
        self.x2 = self.L2 * np.arange(self.N2) / self.N2
        self.x3 = cheb_nodes(self.N3)
        self.cheb_D = cheb_matrix(self.N3)
        self.cheb_D2 = self.cheb_D @ self.cheb_D
        self.quad_weights = clenshaw_curtis_weights(self.N3)

        # integer mode numbers and wavenumbers for the rfft2 layout
        self.n1 = np.rint(np.fft.fftfreq(self.N1, 1.0 / self.N1)).astype(int)
        self.n2 = np.arange(self.N2 // 2 + 1)
        self.k1 = 2 * np.pi * self.n1 / self.L1
        self.k2 = 2 * np.pi * self.n2 / self.L2
        # first derivatives annihilate the Nyquist modes
        self.ik1 = 1j * np.where(np.abs(self.n1) == self.N1 // 2, 0.0, self.k1)
        self.ik2 = 1j * np.where(self.n2 == self.N2 // 2, 0.0, self.k2)
        self.kmag = np.sqrt(self.k1[:, None] ** 2 + self.k2[None, :] ** 2)
        self.dealias_mask = (3 * np.abs(self.n1)[:, None] <= self.N1) & (
            3 * self.n2[None, :] <= self.N2
        )
        # Chebyshev transform: values = T @ coeffs
        j = np.arange(self.N3 + 1)
        self.cheb_T = np.cos(np.pi * np.outer(j, j) / self.N3)
        self.cheb_Tinv = np.linalg.inv(self.cheb_T)
        for arr in (
            self.x1, self.x2, self.x3, self.cheb_D, self.cheb_D2, self.quad_weights,
            self.n1, self.n2, self.k1, self.k2, self.ik1, self.ik2, self.kmag,
            self.dealias_mask, self.cheb_T, self.cheb_Tinv,
        ):
            arr.setflags(write=False)

    def __repr__(self):
        return (f"SpectralPlan(N1={self.N1}, N2={self.N2}, N3={self.N3}, "
                f"L1={self.L1}, L2={self.L2})")

    def __eq__(self, other):
        return isinstance(other, SpectralPlan) and self.key == other.key

    def __hash__(self):
        return hash(self.key)

    @property
    def key(self):
        return (self.N1, self.N2, self.N3, self.L1, self.L2)

    @property
    def surface_shape(self):
        return (self.N1, self.N2)

    @property
    def volume_shape(self):
        return (self.N1, self.N2, self.N3 + 1)

    @property
    def spectral_shape(self):
        return (self.N1, self.N2 // 2 + 1)

    @property
    def area(self):
        return self.L1 * self.L2

    @cached_property
    def mesh(self):
        """Broadcastable ``(x1, x2, x3)`` coordinate arrays of volume shape."""
        X1, X2, X3 = np.meshgrid(self.x1, self.x2, self.x3, indexing="ij")
        return X1, X2, X3

    @cached_property
    def surface_mesh(self):
        return tuple(np.meshgrid(self.x1, self.x2, indexing="ij"))

    @cached_property
    def b_tilde(self):
        """The vertical weight 1 + x3 as a volume field."""
        return np.broadcast_to(1.0 + self.x3, self.volume_shape).copy()

    @cached_property
    def retained_modes(self):
        """``(i1, i2)`` index arrays of the dealiased (2/3-rule) mode set, zero mode first."""
        i1, i2 = np.nonzero(self.dealias_mask)
        order = np.argsort((i1 != 0) | (i2 != 0), kind="stable")
        return i1[order], i2[order]

    def zeros_surface(self):
        return np.zeros(self.surface_shape)

    def zeros_volume(self, ncomp=None):
        shape = self.volume_shape if ncomp is None else (ncomp,) + self.volume_shape
        return np.zeros(shape)


def _kind(f, plan, surface=None):
    """Return ``'volume'`` or ``'surface'`` for an array living on ``plan``."""
    vol = f.ndim >= 3 and f.shape[-3:] == plan.volume_shape
    srf = f.ndim >= 2 and f.shape[-2:] == plan.surface_shape
    if surface is True:
        if not srf:
            raise GridMismatchError(f"shape {f.shape} is not a surface field on {plan}")
        return "surface"
    if surface is False:
        if not vol:
            raise GridMismatchError(f"shape {f.shape} is not a volume field on {plan}")
        return "volume"
    if vol and srf:
        raise GridMismatchError(f"shape {f.shape} is ambiguous; pass surface=True/False")
    if vol:
        return "volume"
    if srf:
        return "surface"
    raise GridMismatchError(f"shape {f.shape} does not match {plan}")


def _haxes(kind):
    return (-3, -2) if kind == "volume" else (-2, -1)


def _expand(arr, kind):
    """Reshape a (n1, n2) spectral multiplier to broadcast against a spectrum."""
    return arr[..., None] if kind == "volume" else arr


def to_spectral(f, plan, surface=None):
    """Horizontal rfft2 (unnormalized) of a surface or volume array."""
    kind = _kind(f, plan, surface)
    return np.fft.rfft2(f, axes=_haxes(kind))


def from_spectral(fh, plan, surface=None):
    """Inverse of :func:`to_spectral`."""
    if surface is None:
        surface = not (fh.ndim >= 3 and fh.shape[-3:-1] == plan.spectral_shape
                       and fh.shape[-1] == plan.N3 + 1)
    axes = (-2, -1) if surface else (-3, -2)
    return np.fft.irfft2(fh, s=plan.surface_shape, axes=axes)


def _horizontal_multiplier(plan, axis, order):
    if axis == 1:
        ik = plan.ik1[:, None] if order % 2 else 1j * plan.k1[:, None]
        m = np.broadcast_to(ik ** order, plan.spectral_shape)
    elif axis == 2:
        ik = plan.ik2[None, :] if order % 2 else 1j * plan.k2[None, :]
        m = np.broadcast_to(ik ** order, plan.spectral_shape)
    else:
        raise ValueError(f"axis must be 1 or 2, got {axis}")
    return m


def d_horizontal(f, axis, plan, order=1, surface=None):
    """Spectral derivative of order ``order`` along periodic axis 1 or 2."""
    f = np.asarray(f, dtype=float)
    kind = _kind(f, plan, surface)
    fh = np.fft.rfft2(f, axes=_haxes(kind))
    fh *= _expand(_horizontal_multiplier(plan, axis, order), kind)
    return np.fft.irfft2(fh, s=plan.surface_shape, axes=_haxes(kind))


def horizontal_gradient(f, plan, surface=None):
    """``(d1 f, d2 f)`` using a single forward transform."""
    f = np.asarray(f, dtype=float)
    kind = _kind(f, plan, surface)
    ax = _haxes(kind)
    fh = np.fft.rfft2(f, axes=ax)
    out = []
    for m in (plan.ik1[:, None], plan.ik2[None, :]):
        out.append(np.fft.irfft2(fh * _expand(np.broadcast_to(m, plan.spectral_shape), kind),
                                 s=plan.surface_shape, axes=ax))
    return out[0], out[1]


def d_vertical(f, plan, order=1):
    """Chebyshev collocation derivative along x3 (last axis)."""
    f = np.asarray(f, dtype=float)
    if f.shape[-1] != plan.N3 + 1:
        raise GridMismatchError(f"last axis {f.shape[-1]} != N3+1 = {plan.N3 + 1}")
    mat = plan.cheb_D if order == 1 else np.linalg.matrix_power(plan.cheb_D, order)
    return np.tensordot(f, mat, axes=([-1], [1]))


def gradient(f, plan):
    """Flat gradient of a volume field, returned with shape ``(3,) + f.shape``."""
    d1, d2 = horizontal_gradient(f, plan, surface=False)
    return np.stack([d1, d2, d_vertical(f, plan)])


def integrate_surface(f, plan):
    """Trapezoidal integral over Sigma (exact for band-limited integrands)."""
    f = np.asarray(f)
    _kind(f, plan, surface=True)
    res = np.mean(f, axis=(-2, -1)) * plan.area
    return float(res) if np.ndim(res) == 0 else res


def integrate_volume(f, plan):
    """Trapezoidal (horizontal) times Clenshaw--Curtis (vertical) integral over Omega."""
    f = np.asarray(f)
    _kind(f, plan, surface=False)
    col = np.mean(f, axis=(-3, -2)) * plan.area
    res = col @ plan.quad_weights
    return float(res) if np.ndim(res) == 0 else res


def dealias(fh, plan):
    """Zero the horizontal modes outside the 2/3-rule band of a spectrum."""
    mask = plan.dealias_mask
    if fh.ndim >= 3 and fh.shape[-3:-1] == plan.spectral_shape:
        mask = mask[..., None]
    return np.where(mask, fh, 0.0)


def filter_field(f, plan, surface=None):
    """Physical-space 2/3-rule filter: transform, dealias, transform back."""
    f = np.asarray(f, dtype=float)
    kind = _kind(f, plan, surface)
    ax = _haxes(kind)
    fh = np.fft.rfft2(f, axes=ax)
    mask = _expand(plan.dealias_mask, kind)
    return np.fft.irfft2(np.where(mask, fh, 0.0), s=plan.surface_shape, axes=ax)


def top(f):
    """Restriction of a volume array to the free surface x3 = 0."""
    return f[..., 0]


def bottom(f):
    """Restriction of a volume array to the rigid bottom x3 = -1."""
    return f[..., -1]


def check_finite(f, what="field"):
    f = np.asarray(f, dtype=float)
    if not np.all(np.isfinite(f)):
        raise InvalidFieldError(f"{what} contains non-finite values")
    return f


# -- Chebyshev coefficient space (used for high-order norms) -----------------

def cheb_coefficients(f, plan):
    """Chebyshev coefficients along the last axis (x3 mapped to [-1, 1])."""
    return np.tensordot(f, plan.cheb_Tinv, axes=([-1], [1]))


def cheb_values(c, plan):
    """Nodal values from Chebyshev coefficients along the last axis."""
    n = c.shape[-1]
    T = plan.cheb_T[:, :n]
    return np.tensordot(c, T, axes=([-1], [1]))


def cheb_derivative_coefficients(c, order=1):
    """Coefficients of d^order/dx3^order (the factor 2 maps [-1, 1] to [-1, 0])."""
    if order == 0:
        return c
    return cheb.chebder(c, m=order, scl=2.0, axis=-1)
