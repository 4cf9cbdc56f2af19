"""Energy functionals, energy-dissipation balances and decay fits.

Sobolev norms are computed spectrally.  On the surface any real order ``s``
uses the multiplier ``(1 + |xi|^2)^s``.  In the slab only integer orders are
used; they are weighted so that the norm equals the same multiplier form in
the horizontal variables,

    ||f||_k^2 = sum_{c <= k} binom(k, c) ||(1 + |xi|^2)^{(k-c)/2} d3^c f||^2,

with vertical derivatives taken in Chebyshev coefficient space.  Derivative
counts up to 13 are needed by the sigma = 0 functionals; at N3 = 16 these are
noise amplifying and only meaningful as trends.

Time derivatives are backward differences over the stored history at the
integrator's order of accuracy.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from math import comb

import numpy as np
from scipy import stats

from .discretization import (
    cheb_derivative_coefficients,
    horizontal_gradient,
    integrate_surface,
    integrate_volume,
)
from .errors import HistoryError, InvalidFieldError
from .geometry import compute_geometry
from .nonlinear import compute_G
from .operators import div_A, grad_A, surface_lap, sym_grad_A, vector_gradient
from .timediff import backward_derivative

__all__ = [
    "EnergyReport",
    "DecayFit",
    "G2NAccumulator",
    "volume_norm_sq",
    "surface_norm_sq",
    "energy_sigma",
    "energy_n",
    "F2N",
    "G2N_update",
    "flat_energy",
    "balance_residual_flat",
    "balance_residual_geometric",
    "fit_decay",
    "history_length",
]


# -- norms ------------------------------------------------------------------------

def _parseval_weights(plan):
    """Multiplicity of each rfft2 column in the full spectrum."""
    w = np.full(plan.spectral_shape, 2.0)
    w[:, 0] = 1.0
    if plan.N2 % 2 == 0:
        w[:, -1] = 1.0
    return w


def surface_norm_sq(h, s, plan):
    """``||h||_s^2`` on Sigma by Fourier multiplier; ``h`` scalar or stacked components."""
    h = np.asarray(h, dtype=float)
    hh = np.fft.rfft2(h, axes=(-2, -1)) / (plan.N1 * plan.N2)
    mult = (1.0 + plan.kmag ** 2) ** s * _parseval_weights(plan)
    return float(plan.area * np.sum(mult * np.abs(hh) ** 2))


_DERIV_CACHE = {}


def _vertical_derivative_matrix(plan, order):
    """Nodal matrix of ``d3^order`` built through Chebyshev coefficient space."""
    key = (plan.N3, order)
    if key not in _DERIV_CACHE:
        # row i of the identity is the i-th basis coefficient vector
        dc = cheb_derivative_coefficients(np.eye(plan.N3 + 1), order).T
        mat = plan.cheb_T[:, :dc.shape[0]] @ dc @ plan.cheb_Tinv
        mat.setflags(write=False)
        _DERIV_CACHE[key] = mat
    return _DERIV_CACHE[key]


def volume_norm_sq(f, k, plan):
    """``||f||_k^2`` on Omega for integer ``k >= 0``; ``f`` scalar or stacked components."""
    if int(k) != k or k < 0:
        raise ValueError(f"volume norms need integer order >= 0, got {k}")
    k = int(k)
    f = np.asarray(f, dtype=float)
    fh = np.fft.rfft2(f, axes=(-3, -2)) / (plan.N1 * plan.N2)
    mult = 1.0 + plan.kmag ** 2
    w = _parseval_weights(plan)
    total = 0.0
    for j in range(k + 1):
        vals = np.tensordot(fh, _vertical_derivative_matrix(plan, j), axes=([-1], [1]))
        col = (np.abs(vals) ** 2) @ plan.quad_weights
        if col.ndim > 2:
            col = col.reshape((-1,) + plan.spectral_shape).sum(axis=0)
        total += comb(k, j) * float(np.sum(w * mult ** (k - j) * col))
    return plan.area * total


# -- history helpers -------------------------------------------------------------

def history_length(n, accuracy):
    """States needed for ``energy_n(.., n, ..)`` (the ``d_t^{n+1} eta`` term)."""
    return n + 1 + accuracy


def _dt(history):
    if len(history) < 2:
        raise HistoryError("need at least 2 stored states")
    dt = history[-1].t - history[-2].t
    if not dt > 0:
        raise HistoryError("history times must be strictly increasing")
    return dt


def _time_derivatives(history, name, m, accuracy, dt):
    samples = [getattr(s, name) for s in history]
    return [backward_derivative(samples, j, accuracy, dt) for j in range(m + 1)]


# -- functionals ---------------------------------------------------------------------

def energy_sigma(history, plan, accuracy=1):
    """``(E, D)`` of the surface-tension case at the newest state.

    ``||d_t b||_0`` and ``||d_t b||_1`` enter squared like every other term.
    """
    if len(history) < 2 + accuracy:
        raise HistoryError(f"energy_sigma needs {2 + accuracy} states, got {len(history)}")
    dt = _dt(history)
    s = history[-1]
    ut = backward_derivative([h.u for h in history], 1, accuracy, dt)
    bt = backward_derivative([h.b for h in history], 1, accuracy, dt)
    et = backward_derivative([h.eta for h in history], 1, accuracy, dt)
    ett = backward_derivative([h.eta for h in history], 2, accuracy, dt)
    vn, sn = volume_norm_sq, surface_norm_sq
    E = (vn(s.u, 2, plan) + vn(ut, 0, plan) + vn(s.b, 2, plan) + vn(bt, 0, plan)
         + vn(s.p, 1, plan) + sn(s.eta, 3, plan) + sn(et, 1.5, plan) + sn(ett, -0.5, plan))
    D = (vn(s.u, 3, plan) + vn(ut, 1, plan) + vn(s.b, 3, plan) + vn(bt, 1, plan)
         + vn(s.p, 2, plan) + sn(s.eta, 3.5, plan) + sn(et, 2.5, plan) + sn(ett, 0.5, plan))
    return E, D


def energy_n(history, n, plan, accuracy=1):
    """``(E_n, D_n)`` of the sigma = 0 case at the newest state."""
    if n < 3:
        raise ValueError(f"n must be >= 3, got {n}")
    need = history_length(n, accuracy)
    if len(history) < need:
        raise HistoryError(f"energy_n(n={n}) needs {need} states, got {len(history)}")
    dt = _dt(history)
    du = _time_derivatives(history, "u", n, accuracy, dt)
    db = _time_derivatives(history, "b", n, accuracy, dt)
    dp = _time_derivatives(history, "p", n - 1, accuracy, dt)
    de = _time_derivatives(history, "eta", n + 1, accuracy, dt)
    vn, sn = volume_norm_sq, surface_norm_sq
    E = sum(vn(du[j], 2 * n - 2 * j, plan) + vn(db[j], 2 * n - 2 * j, plan)
            + sn(de[j], 2 * n - 2 * j, plan) for j in range(n + 1))
    E += sum(vn(dp[j], 2 * n - 2 * j - 1, plan) for j in range(n))
    D = sum(vn(du[j], 2 * n - 2 * j + 1, plan) + vn(db[j], 2 * n - 2 * j + 1, plan)
            for j in range(n + 1))
    D += sum(vn(dp[j], 2 * n - 2 * j, plan) for j in range(n))
    D += sn(de[0], 2 * n - 0.5, plan) + sn(de[1], 2 * n - 0.5, plan)
    D += sum(sn(de[j], 2 * n - 2 * j + 2.5, plan) for j in range(2, n + 2))
    return E, D


def F2N(eta, N, plan):
    """``||eta||^2_{4N + 1/2}``."""
    return surface_norm_sq(eta, 4 * N + 0.5, plan)


@dataclass(frozen=True)
class G2NAccumulator:
    """Running pieces of the total energy for the sigma = 0 case.

    ``int_D2N`` is a trapezoidal integral over the reports seen so far.
    """

    sup_E2N: float = 0.0
    int_D2N: float = 0.0
    sup_weighted_EN2: float = 0.0
    sup_weighted_F2N: float = 0.0
    last_t: float = None
    last_D2N: float = None

    @property
    def value(self):
        return self.sup_E2N + self.int_D2N + self.sup_weighted_EN2 + self.sup_weighted_F2N


def G2N_update(running: G2NAccumulator, report, N):
    """Fold one report (with ``E_n[2N]``, ``D_n[2N]``, ``E_n[N+2]`` and ``F2N``) into ``running``."""
    t = report.t
    E2N, D2N = report.E_n.get(2 * N), report.D_n.get(2 * N)
    EN2 = report.E_n.get(N + 2)
    if any(x is None or not np.isfinite(x) for x in (E2N, D2N, EN2, report.F2N)):
        return running
    integral = running.int_D2N
    if running.last_t is not None:
        integral += 0.5 * (t - running.last_t) * (D2N + running.last_D2N)
    return replace(
        running,
        sup_E2N=max(running.sup_E2N, E2N),
        int_D2N=integral,
        sup_weighted_EN2=max(running.sup_weighted_EN2, (1.0 + t) ** (4 * N - 8) * EN2),
        sup_weighted_F2N=max(running.sup_weighted_F2N, report.F2N / (1.0 + t)),
        last_t=t,
        last_D2N=D2N,
    )


# -- energy balances -------------------------------------------------------------------

def _l2_inner(f, g, plan):
    prod = f * g
    if prod.ndim == 4:
        prod = prod.sum(axis=0)
    return integrate_volume(prod, plan)


def _surface_inner(f, g, plan):
    prod = f * g
    if prod.ndim == 3:
        prod = prod.sum(axis=0)
    return integrate_surface(prod, plan)


def flat_energy(state, plan):
    """``1/2 ||u||^2 + 1/2 ||b||^2 + 1/2 |eta|^2 + sigma/2 |D eta|^2``."""
    sigma = state.params.sigma
    e1, e2 = horizontal_gradient(state.eta, plan, surface=True)
    return (0.5 * _l2_inner(state.u, state.u, plan) + 0.5 * _l2_inner(state.b, state.b, plan)
            + 0.5 * integrate_surface(state.eta ** 2, plan)
            + 0.5 * sigma * integrate_surface(e1 ** 2 + e2 ** 2, plan))


def _flat_dissipation(state, plan):
    Du = sym_grad_A(state.u, None, plan)
    Gb = vector_gradient(state.b, plan)
    return 0.5 * integrate_volume(np.sum(Du * Du, axis=(0, 1)), plan) + \
        integrate_volume(np.sum(Gb * Gb, axis=(0, 1)), plan)


def balance_residual_flat(history, plan, accuracy=1, linear=False):
    """Signed residual of the flat energy identity with ``Phi = G`` at the newest state.

    ``d/dt E_flat + D_flat - RHS`` where
    ``RHS = int u.(G1 - grad G2) + int (p G2 + b.G3) - int_S u.G4 + int_S (eta - sigma lap* eta) G5``.
    With ``linear=True`` the forcings are zero.
    """
    if len(history) < 1 + accuracy:
        raise HistoryError(f"balance needs {1 + accuracy} states, got {len(history)}")
    dt = _dt(history)
    s = history[-1]
    energies = [flat_energy(h, plan) for h in history[-(1 + accuracy):]]
    dE = backward_derivative(energies, 1, accuracy, dt)
    res = dE + _flat_dissipation(s, plan)
    if linear:
        return float(res)
    geom = compute_geometry(s.eta, plan)
    G = compute_G(s, geom, plan)
    grad_G2 = grad_A(G.G2, None, plan)
    sigma = s.params.sigma
    rhs = (_l2_inner(s.u, G.G1 - grad_G2, plan) + _l2_inner(s.p, G.G2, plan)
           + _l2_inner(s.b, G.G3, plan) - _surface_inner(s.u[..., 0], G.G4, plan)
           + _surface_inner(s.eta - sigma * surface_lap(s.eta, plan), G.G5, plan))
    return float(res - rhs)


def geometric_energy(state, geom, plan):
    sigma = state.params.sigma
    J = geom.J
    e1, e2 = horizontal_gradient(state.eta, plan, surface=True)
    return (0.5 * integrate_volume(J * np.sum(state.u ** 2, axis=0), plan)
            + 0.5 * integrate_volume(J * np.sum(state.b ** 2, axis=0), plan)
            + 0.5 * integrate_surface(state.eta ** 2, plan)
            + 0.5 * sigma * integrate_surface(e1 ** 2 + e2 ** 2, plan))


def balance_residual_geometric(history, plan, geom_history=None, accuracy=1):
    """Signed residual of the geometric energy identity applied to the state itself.

    ``d/dt E_J + int J |D_A u|^2 / 2 + int J |grad_A b|^2 - RHS`` with the
    surface forcing ``F4 = -sigma (M - lap* eta) N`` (the only forcing left when
    the transformed equations are cast in geometric form).  The Lorentz and
    induction couplings cancel only when ``div_A b = 0``; the term
    ``-int J div_A(b) (u.b)`` they leave behind is included in ``RHS``.
    """
    if len(history) < 1 + accuracy:
        raise HistoryError(f"balance needs {1 + accuracy} states, got {len(history)}")
    dt = _dt(history)
    recent = history[-(1 + accuracy):]
    if geom_history is None:
        geoms = [compute_geometry(h.eta, plan) for h in recent]
    else:
        geoms = list(geom_history)[-(1 + accuracy):]
        if len(geoms) != len(recent):
            raise HistoryError("geom_history shorter than the state history")
    energies = [geometric_energy(h, g, plan) for h, g in zip(recent, geoms)]
    dE = backward_derivative(energies, 1, accuracy, dt)
    s, geom = recent[-1], geoms[-1]
    J = geom.J
    DA = sym_grad_A(s.u, geom, plan)
    GAb = np.stack([grad_A(s.b[i], geom, plan) for i in range(3)])
    diss = (0.5 * integrate_volume(J * np.sum(DA * DA, axis=(0, 1)), plan)
            + integrate_volume(J * np.sum(GAb * GAb, axis=(0, 1)), plan))
    rhs = -integrate_volume(J * div_A(s.b, geom, plan) * np.sum(s.u * s.b, axis=0), plan)
    sigma = s.params.sigma
    if sigma != 0.0:
        F4 = -sigma * (geom.M - surface_lap(s.eta, plan)) * geom.Ncal
        rhs -= _surface_inner(s.u[..., 0], F4, plan)
    return float(dE + diss - rhs)


# -- reports and fits ---------------------------------------------------------------------

@dataclass
class EnergyReport:
    """All functionals at one emitted time.  Unavailable entries (history too short) are NaN."""

    t: float
    step: int
    E_sigma: float = float("nan")
    D_sigma: float = float("nan")
    E_n: dict = field(default_factory=dict)
    D_n: dict = field(default_factory=dict)
    F2N: float = float("nan")
    G2N: float = float("nan")
    balance_flat: float = float("nan")
    balance_geometric: float = float("nan")
    zero_mean_drift: float = 0.0
    mean_correction: float = 0.0
    div_A_u: float = 0.0


@dataclass
class DecayFit:
    window: tuple
    model: str
    rate: float
    r_squared: float
    n_samples: int = 0

    def __post_init__(self):
        if not self.window[1] > self.window[0]:
            raise ValueError("decay-fit window must have t1 > t0")


def fit_decay(series, model="exponential", window=None, min_samples=10):
    """Least-squares decay fit of ``E(t)``.

    ``exponential``: ``log E = c - rate t``; ``algebraic``: ``log E = c - rate log(1 + t)``.
    ``series`` is a sequence of ``(t, E)`` pairs.  The default window is
    ``[t_final / 10, t_final]``.
    """
    arr = np.asarray(series, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("series must be a sequence of (t, E) pairs")
    t, E = arr[:, 0], arr[:, 1]
    if window is None:
        window = (t.max() / 10.0, t.max())
    t0, t1 = float(window[0]), float(window[1])
    if not t1 > t0:
        raise ValueError("decay-fit window must have t1 > t0")
    sel = (t >= t0 - 1e-12) & (t <= t1 + 1e-12)
    if sel.sum() < min_samples:
        raise HistoryError(f"decay fit needs >= {min_samples} samples in window, got {int(sel.sum())}")
    tw, Ew = t[sel], E[sel]
    if not np.all(Ew > 0):
        raise InvalidFieldError("decay fit needs positive E in the window")
    if model == "exponential":
        x = tw
    elif model == "algebraic":
        x = np.log1p(tw)
    else:
        raise ValueError(f"unknown decay model {model!r}")
    y = np.log(Ew)
    fit = stats.linregress(x, y)
    r2 = float(fit.rvalue ** 2) if np.isfinite(fit.rvalue) else 1.0
    return DecayFit(window=(t0, t1), model=model, rate=float(-fit.slope),
                    r_squared=min(max(r2, 0.0), 1.0), n_samples=int(sel.sum()))
