"""Per-mode elliptic kernels and the IMEX time stepper.

Every horizontal Fourier mode gives an independent two-point boundary value
problem in x3, discretized by Chebyshev collocation.  For a mode with
wavevector ``k`` the coupled Stokes block has unknowns
``[u1 (N3+1), u2 (N3+1), u3 (N3+1), p (N3+1), eta]`` and rows

* momentum at interior nodes, boundary-condition rows at x3 = 0 and x3 = -1,
* the divergence at every node,
* the kinematic condition (time-dependent problems only).

The zero horizontal mode is singular in that form (div rows at all nodes
over-determine the mean vertical velocity) and is solved separately:
``u3`` by integrating the divergence from the bottom, ``p`` by integrating the
vertical momentum balance down from the surface.
"""
from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import scipy.linalg

from .discretization import SpectralPlan, gradient, integrate_surface, integrate_volume
from .errors import (
    DegenerateGeometryError,
    IllPosedModeError,
    InconsistentDataError,
    SolverRuntimeError,
)
from .geometry import compute_geometry, guard_quantity, GUARD_THRESHOLD
from .nonlinear import NonlinearTerms, compute_G
from .operators import div_A
from .state import Params, SimState

__all__ = [
    "Params",
    "SimState",
    "poisson_dirichlet",
    "stokes_stress_bc",
    "stokes_dirichlet",
    "initial_pressure",
    "project_divergence",
    "stokes_block",
    "mass_matrix",
    "IMEXStepper",
    "imex_step",
    "linear_eigenmode",
    "DIV_WARN",
    "DIV_ABORT",
]

log = logging.getLogger(__name__)

DIV_WARN = 1e-6
DIV_ABORT = 1e-3


def thread_count():
    """Worker count for per-mode solves (``MHDSLAB_THREADS``, default 1)."""
    raw = os.environ.get("MHDSLAB_THREADS", "1").strip().lower()
    if raw in ("max", "all"):
        return os.cpu_count() or 1
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


# -- block assembly ------------------------------------------------------------

def stokes_block(plan: SpectralPlan, ik1, ik2, kap2, a0=0.0, sigma=None, top="stress"):
    """Collocation matrix of one nonzero horizontal mode.

    ``a0`` multiplies the velocity (and ``eta``) in the time-discrete problem.
    With ``sigma`` given, the surface elevation is appended as an unknown with
    the kinematic row; the normal stress row then reads
    ``p - 2 d3 u3 - (1 + sigma |k|^2) eta``.
    """
    n = plan.N3 + 1
    D, D2 = plan.cheb_D, plan.cheb_D2
    with_eta = sigma is not None
    size = 4 * n + int(with_eta)
    M = np.zeros((size, size), dtype=complex)
    eye = np.eye(n)
    lop = (a0 + kap2) * eye - D2
    grads = (ik1 * eye, ik2 * eye, D)
    iks = (ik1, ik2)
    P = slice(3 * n, 4 * n)
    for c in range(3):
        r = slice(c * n, (c + 1) * n)
        M[r, r] = lop
        M[r, P] = grads[c]
        t, b = c * n, c * n + n - 1
        M[t, :] = 0.0
        M[b, :] = 0.0
        M[b, b] = 1.0
        if top == "stress":
            if c < 2:
                M[t, r] = -D[0]
                M[t, 2 * n] += -iks[c]
            else:
                M[t, 3 * n] = 1.0
                M[t, r] += -2.0 * D[0]
                if with_eta:
                    M[t, 4 * n] = -(1.0 + sigma * kap2)
        elif top == "dirichlet":
            M[t, t] = 1.0
        else:
            raise ValueError(f"unknown top condition {top!r}")
    M[P, 0:n] = ik1 * eye
    M[P, n:2 * n] = ik2 * eye
    M[P, 2 * n:3 * n] = D
    if with_eta:
        M[4 * n, 4 * n] = a0
        M[4 * n, 2 * n] = -1.0
    return M


def mass_matrix(plan: SpectralPlan, with_eta=True):
    """Rows of :func:`stokes_block` that carry a time derivative (momentum interior, kinematic)."""
    n = plan.N3 + 1
    size = 4 * n + int(with_eta)
    E = np.zeros((size, size))
    for c in range(3):
        for j in range(1, n - 1):
            E[c * n + j, c * n + j] = 1.0
    if with_eta:
        E[4 * n, 4 * n] = 1.0
    return E


def _diffusion_block(plan, a0, kap2, top="dirichlet"):
    """``(a0 + |k|^2) - d33`` with a Dirichlet bottom row and a Dirichlet or Neumann top row."""
    n = plan.N3 + 1
    M = (a0 + kap2) * np.eye(n) - plan.cheb_D2
    M[0, :] = 0.0
    if top == "dirichlet":
        M[0, 0] = 1.0
    else:  # stress-free form: -d3 f = data
        M[0, :] = -plan.cheb_D[0]
    M[-1, :] = 0.0
    M[-1, -1] = 1.0
    return M


def _zero_mode_u3(plan, psi0, bottom_value=0.0):
    """Solve ``d3 u3 = psi`` (all nodes but the bottom) with ``u3(-1)`` given."""
    Q = plan.cheb_D.copy()
    Q[-1, :] = 0.0
    Q[-1, -1] = 1.0
    rhs = np.array(psi0, dtype=complex)
    rhs[-1] = bottom_value
    return np.linalg.solve(Q, rhs)


def _zero_mode_p(plan, dp, top_value):
    """Solve ``d3 p = dp`` (all nodes but the top) with ``p(0)`` given."""
    P = plan.cheb_D.copy()
    P[0, :] = 0.0
    P[0, 0] = 1.0
    rhs = np.array(dp, dtype=complex)
    rhs[0] = top_value
    return np.linalg.solve(P, rhs)


def _interior_modes(plan):
    """Mask of modes away from the Nyquist lines, excluding the zero mode."""
    ok = (np.abs(plan.n1)[:, None] < plan.N1 // 2) & (plan.n2[None, :] < plan.N2 // 2)
    ok = ok.copy()
    ok[0, 0] = False
    return ok


def _spec(f, surface):
    return np.fft.rfft2(f, axes=(-2, -1) if surface else (-3, -2))


def _phys(fh, plan, surface):
    return np.fft.irfft2(fh, s=plan.surface_shape, axes=(-2, -1) if surface else (-3, -2))


# -- elliptic kernels ------------------------------------------------------------

def poisson_dirichlet(f, plan: SpectralPlan):
    """Solve ``-lap u = f`` with ``u = 0`` on both boundaries."""
    f = np.asarray(f, dtype=float)
    fh = _spec(f, False)
    uh = np.zeros_like(fh)
    n = plan.N3 + 1
    # no odd derivatives here, so the Nyquist modes are solved as well
    for kap2 in np.unique(np.round(plan.kmag ** 2, 12)):
        sel = np.abs(plan.kmag ** 2 - kap2) < 1e-9 * max(1.0, kap2)
        M = _diffusion_block(plan, 0.0, kap2)
        rhs = fh[sel].T.copy()  # (n, modes)
        rhs[0] = 0.0
        rhs[n - 1] = 0.0
        uh[sel] = np.linalg.solve(M, rhs).T
    u = _phys(uh, plan, False)
    u[..., 0] = 0.0
    u[..., -1] = 0.0
    return u


def _stokes_zero_mode(plan, phih, psih, alphah, a0=0.0):
    """Zero horizontal mode of the stress-boundary Stokes problem (eta mean = 0)."""
    n = plan.N3 + 1
    D, D2 = plan.cheb_D, plan.cheb_D2
    u0 = np.zeros((3, n), dtype=complex)
    M = _diffusion_block(plan, a0, 0.0, top="stress")
    for c in range(2):
        rhs = phih[c].copy()
        rhs[0] = alphah[c]
        rhs[-1] = 0.0
        u0[c] = np.linalg.solve(M, rhs)
    u3 = _zero_mode_u3(plan, psih)
    u0[2] = u3
    mom = phih[2] - a0 * u3 + D2 @ u3
    p0 = _zero_mode_p(plan, mom, alphah[2] + 2.0 * (D[0] @ u3))
    return u0, p0


def stokes_stress_bc(phi, psi, alpha, plan: SpectralPlan):
    """Solve ``-lap u + grad p = phi``, ``div u = psi``, ``(p I - D u) e3 = alpha`` on
    the surface, ``u = 0`` on the bottom.  Returns ``(u, p)``.
    """
    n = plan.N3 + 1
    phih = _spec(np.asarray(phi, float), False)
    psih = _spec(np.asarray(psi, float), False)
    alh = _spec(np.asarray(alpha, float), True)
    uh = np.zeros_like(phih)
    ph = np.zeros_like(psih)
    u0, p0 = _stokes_zero_mode(plan, phih[:, 0, 0], psih[0, 0], alh[:, 0, 0])
    uh[:, 0, 0] = u0
    ph[0, 0] = p0
    for i1, i2 in zip(*np.nonzero(_interior_modes(plan))):
        M = stokes_block(plan, plan.ik1[i1], plan.ik2[i2], plan.kmag[i1, i2] ** 2)
        rhs = np.concatenate([phih[0, i1, i2], phih[1, i1, i2], phih[2, i1, i2], psih[i1, i2]])
        for c in range(3):
            rhs[c * n] = alh[c, i1, i2]
            rhs[c * n + n - 1] = 0.0
        try:
            x = np.linalg.solve(M, rhs)
        except np.linalg.LinAlgError as exc:
            raise IllPosedModeError(f"mode ({plan.n1[i1]}, {plan.n2[i2]}): {exc}") from exc
        for c in range(3):
            uh[c, i1, i2] = x[c * n:(c + 1) * n]
        ph[i1, i2] = x[3 * n:]
    u = _phys(uh, plan, False)
    u[..., -1] = 0.0
    return u, _phys(ph, plan, False)


def stokes_dirichlet(phi, psi, f1, f2, plan: SpectralPlan, tol=1e-10):
    """Solve ``-lap u + grad p = phi``, ``div u = psi``, ``u = f1`` on the surface and
    ``u = f2`` on the bottom.  Returns ``(u, grad p)``; ``p`` is fixed by zero mean.

    Raises
    ------
    InconsistentDataError
        If the flux compatibility condition fails by more than ``tol``.
    """
    phi = np.asarray(phi, float)
    psi = np.asarray(psi, float)
    f1 = np.asarray(f1, float)
    f2 = np.asarray(f2, float)
    flux = integrate_surface(f1[2], plan) - integrate_surface(f2[2], plan)
    source = integrate_volume(psi, plan)
    scale = max(1.0, abs(flux), abs(source))
    if abs(source - flux) > tol * scale:
        raise InconsistentDataError(
            f"int psi = {source:.6e} but boundary flux = {flux:.6e}")
    n = plan.N3 + 1
    phih, psih = _spec(phi, False), _spec(psi, False)
    f1h, f2h = _spec(f1, True), _spec(f2, True)
    uh = np.zeros_like(phih)
    ph = np.zeros_like(psih)

    D, D2 = plan.cheb_D, plan.cheb_D2
    M = _diffusion_block(plan, 0.0, 0.0)
    for c in range(2):
        rhs = phih[c, 0, 0].copy()
        rhs[0], rhs[-1] = f1h[c, 0, 0], f2h[c, 0, 0]
        uh[c, 0, 0] = np.linalg.solve(M, rhs)
    # the surface value follows from the (checked) compatibility condition
    u3 = _zero_mode_u3(plan, psih[0, 0], f2h[2, 0, 0])
    uh[2, 0, 0] = u3
    P = D.copy()
    P[-1, :] = plan.quad_weights
    rhs = phih[2, 0, 0] + D2 @ u3
    rhs[-1] = 0.0
    ph[0, 0] = np.linalg.solve(P, rhs)

    for i1, i2 in zip(*np.nonzero(_interior_modes(plan))):
        Mk = stokes_block(plan, plan.ik1[i1], plan.ik2[i2], plan.kmag[i1, i2] ** 2,
                          top="dirichlet")
        rhs = np.concatenate([phih[0, i1, i2], phih[1, i1, i2], phih[2, i1, i2], psih[i1, i2]])
        for c in range(3):
            rhs[c * n] = f1h[c, i1, i2]
            rhs[c * n + n - 1] = f2h[c, i1, i2]
        try:
            x = np.linalg.solve(Mk, rhs)
        except np.linalg.LinAlgError as exc:
            raise IllPosedModeError(f"mode ({plan.n1[i1]}, {plan.n2[i2]}): {exc}") from exc
        for c in range(3):
            uh[c, i1, i2] = x[c * n:(c + 1) * n]
        ph[i1, i2] = x[3 * n:]
    u = _phys(uh, plan, False)
    p = _phys(ph, plan, False)
    p -= integrate_volume(p, plan) / plan.area
    return u, gradient(p, plan)


def initial_pressure(u, eta, plan: SpectralPlan, sigma=0.0):
    """Pressure compatible with ``(u, eta)`` at the linear level.

    Solves ``lap p = 0`` with the normal-stress value
    ``p = (1 - sigma lap*) eta + 2 d3 u3`` on the surface and the vertical
    momentum balance ``d3 p = lap u3`` on the bottom.
    """
    n = plan.N3 + 1
    D, D2 = plan.cheb_D, plan.cheb_D2
    uh = _spec(u[2], False)
    eh = _spec(eta, True)
    ph = np.zeros_like(uh)
    valid = (np.abs(plan.n1)[:, None] < plan.N1 // 2) & (plan.n2[None, :] < plan.N2 // 2)
    for i1, i2 in zip(*np.nonzero(valid)):
        kap2 = plan.kmag[i1, i2] ** 2
        M = kap2 * np.eye(n) - D2
        M[0, :] = 0.0
        M[0, 0] = 1.0
        M[-1, :] = D[-1]
        w = uh[i1, i2]
        rhs = np.zeros(n, dtype=complex)
        rhs[0] = (1.0 + sigma * kap2) * eh[i1, i2] + 2.0 * (D[0] @ w)
        rhs[-1] = (D2 @ w)[-1] - kap2 * w[-1]
        ph[i1, i2] = np.linalg.solve(M, rhs)
    return _phys(ph, plan, False)


def project_divergence(u, eta, plan: SpectralPlan, iterations=6, tol=1e-14):
    """Correct ``u`` so that ``div_A u = 0`` for the geometry of ``eta``.

    ``div_A u = div u - G2(u)`` is linear in ``u``; each pass adds the Stokes
    correction ``w`` with ``div w = -div_A u``, ``w = 0`` on the bottom and a
    stress-free top.  The remaining defect shrinks by a factor of order
    ``|eta|`` per pass.
    """
    geom = compute_geometry(eta, plan)
    u = np.array(u, dtype=float, copy=True)
    zero_phi = plan.zeros_volume(3)
    zero_alpha = np.zeros((3,) + plan.surface_shape)
    for _ in range(iterations):
        r = div_A(u, geom, plan)
        if np.max(np.abs(r)) <= tol:
            break
        w, _ = stokes_stress_bc(zero_phi, -r, zero_alpha, plan)
        u = u + w
    u[..., -1] = 0.0
    return u


# -- time stepping -----------------------------------------------------------------

class _ModeOperators:
    """Inverted per-mode matrices for one value of ``a0``."""

    def __init__(self, plan, sigma, a0):
        self.a0 = a0
        i1, i2 = plan.retained_modes
        nz = (i1 != 0) | (i2 != 0)
        self.i1, self.i2 = i1[nz], i2[nz]
        mats, bmats = [], []
        for a, b in zip(self.i1, self.i2):
            kap2 = plan.kmag[a, b] ** 2
            mats.append(stokes_block(plan, plan.ik1[a], plan.ik2[b], kap2, a0, sigma=sigma))
            bmats.append(_diffusion_block(plan, a0, kap2))
        try:
            self.inv = np.linalg.inv(np.array(mats))
            self.binv = np.linalg.inv(np.array(bmats))
            self.b0inv = np.linalg.inv(_diffusion_block(plan, a0, 0.0))
            self.h0inv = np.linalg.inv(_diffusion_block(plan, a0, 0.0, top="stress"))
        except np.linalg.LinAlgError as exc:
            raise IllPosedModeError(f"per-mode factorization failed: {exc}") from exc
        Q = plan.cheb_D.copy()
        Q[-1, :] = 0.0
        Q[-1, -1] = 1.0
        P = plan.cheb_D.copy()
        P[0, :] = 0.0
        P[0, 0] = 1.0
        self.qinv = np.linalg.inv(Q)
        self.pinv = np.linalg.inv(P)


def _matvec_chunks(inv, rhs, threads):
    """Batched ``inv @ rhs`` with disjoint per-chunk writes (thread-count independent)."""
    out = np.empty(rhs.shape, dtype=np.result_type(inv.dtype, rhs.dtype))
    m = rhs.shape[0]
    if threads <= 1 or m < 2 * threads:
        out[...] = np.einsum("mij,mj...->mi...", inv, rhs)
        return out
    bounds = np.linspace(0, m, threads + 1).astype(int)

    def work(lo, hi):
        out[lo:hi] = np.einsum("mij,mj...->mi...", inv[lo:hi], rhs[lo:hi])

    with ThreadPoolExecutor(max_workers=threads) as pool:
        list(pool.map(lambda b: work(*b), zip(bounds[:-1], bounds[1:])))
    return out


class IMEXStepper:
    """Backward Euler / BDF2 IMEX integrator for the perturbed linear form.

    Everything on the left of the perturbed linear form is implicit; the
    nonlinear terms are explicit (extrapolated with ``2 G^n - G^{n-1}`` for
    BDF2).  The first step of a BDF2 run is backward Euler.

    Parameters
    ----------
    plan, params : grid and physical parameters
    dt : float
    scheme : ``"be"`` or ``"bdf2"``
    nonlinear : bool
        If False the explicit terms are dropped (the linearized problem).
    """

    def __init__(self, plan, params: Params, dt, scheme="bdf2", nonlinear=True,
                 threads=None, guard_threshold=GUARD_THRESHOLD):
        if not dt > 0:
            raise ValueError(f"dt must be positive, got {dt}")
        if scheme not in ("be", "bdf2"):
            raise ValueError(f"scheme must be 'be' or 'bdf2', got {scheme!r}")
        self.plan, self.params, self.dt = plan, params, float(dt)
        self.scheme, self.nonlinear = scheme, nonlinear
        self.threads = thread_count() if threads is None else threads
        self.guard_threshold = guard_threshold
        self._ops = {}
        self.previous = None      # state at t - dt
        self._prev_G = None
        self._cache = None        # (state id, geometry, G) of the last state seen
        self.last_info = {}

    def _operators(self, a0):
        key = round(a0 * self.dt, 12)
        if key not in self._ops:
            self._ops[key] = _ModeOperators(self.plan, self.params.sigma, a0)
        return self._ops[key]

    def reset_history(self, previous=None):
        self.previous = previous
        self._prev_G = None

    def explicit_terms(self, state):
        plan = self.plan
        if not self.nonlinear:
            return NonlinearTerms.zeros(plan)
        if self._cache is not None and self._cache[0] is state:
            return self._cache[2]
        geom = compute_geometry(state.eta, plan)
        G = compute_G(state, geom, plan)
        self._cache = (state, geom, G)
        return G

    def step(self, state: SimState) -> SimState:
        plan, dt = self.plan, self.dt
        q = guard_quantity(state.eta, plan)
        if not q <= self.guard_threshold:
            raise SolverRuntimeError(
                f"validity guard failed (||J-1||^2+||A||^2+||B||^2 = {q:.3e})", state.step)
        try:
            G = self.explicit_terms(state)
        except DegenerateGeometryError as exc:
            raise SolverRuntimeError(str(exc), state.step) from exc

        prev = self.previous
        bdf2 = self.scheme == "bdf2" and prev is not None
        if bdf2:
            if self._prev_G is None:
                self._prev_G = self.explicit_terms(prev) if self.nonlinear else NonlinearTerms.zeros(plan)
            a0 = 1.5 / dt
            hu = (4.0 * state.u - prev.u) / (2.0 * dt)
            hb = (4.0 * state.b - prev.b) / (2.0 * dt)
            he = (4.0 * state.eta - prev.eta) / (2.0 * dt)
            Gx = G.scaled_difference(self._prev_G) if self.nonlinear else G
        else:
            a0 = 1.0 / dt
            hu, hb, he = state.u / dt, state.b / dt, state.eta / dt
            Gx = G
        ops = self._operators(a0)
        new_u, new_p, new_b, new_eta, drift = self._solve(ops, hu, hb, he, Gx)
        new = SimState(u=new_u, p=new_p, b=new_b, eta=new_eta, t=state.t + dt,
                       params=state.params, step=state.step + 1)

        self.previous = state
        self._prev_G = G
        self.last_info = {"mean_correction": drift}
        if self.nonlinear:
            try:
                geom = compute_geometry(new.eta, plan)
            except DegenerateGeometryError as exc:
                raise SolverRuntimeError(str(exc), new.step) from exc
            dv = div_A(new.u, geom, plan)
            ndiv = float(np.sqrt(max(integrate_volume(dv * dv, plan), 0.0)))
            self.last_info["div_A_u"] = ndiv
            if ndiv > DIV_ABORT:
                raise SolverRuntimeError(f"||div_A u|| = {ndiv:.3e} exceeds {DIV_ABORT}", new.step)
            if ndiv > DIV_WARN:
                log.warning("step %d: ||div_A u|| = %.3e", new.step, ndiv)
        return new

    def _solve(self, ops, hu, hb, he, G):
        plan = self.plan
        n = plan.N3 + 1
        a0 = ops.a0
        fu = _spec(hu + G.G1, False)           # (3, n1, n2h, n)
        fb = _spec(hb + G.G3, False)
        f2 = _spec(G.G2, False)
        f4 = _spec(G.G4, True)                  # (3, n1, n2h)
        fe = _spec(he + G.G5, True)
        i1, i2 = ops.i1, ops.i2
        m = len(i1)

        R = np.empty((m, 4 * n + 1), dtype=complex)
        for c in range(3):
            blk = fu[c][i1, i2]                 # (m, n)
            blk[:, 0] = f4[c][i1, i2]
            blk[:, -1] = 0.0
            R[:, c * n:(c + 1) * n] = blk
        R[:, 3 * n:4 * n] = f2[i1, i2]
        R[:, 4 * n] = fe[i1, i2]
        X = _matvec_chunks(ops.inv, R, self.threads)

        Rb = np.moveaxis(fb[:, i1, i2], 0, -1)  # (m, n, 3)
        Rb[:, 0, :] = 0.0
        Rb[:, -1, :] = 0.0
        Xb = _matvec_chunks(ops.binv, Rb, self.threads)

        uh = np.zeros_like(fu)
        bh = np.zeros_like(fb)
        ph = np.zeros(fu.shape[1:], dtype=complex)
        eh = np.zeros(fe.shape, dtype=complex)
        for c in range(3):
            uh[c][i1, i2] = X[:, c * n:(c + 1) * n]
            bh[c][i1, i2] = Xb[:, :, c]
        ph[i1, i2] = X[:, 3 * n:4 * n]
        eh[i1, i2] = X[:, 4 * n]

        # zero horizontal mode
        for c in range(2):
            rhs = fu[c, 0, 0].copy()
            rhs[0] = f4[c, 0, 0]
            rhs[-1] = 0.0
            uh[c, 0, 0] = ops.h0inv @ rhs
        rhs = f2[0, 0].copy()
        rhs[-1] = 0.0
        u3 = ops.qinv @ rhs
        uh[2, 0, 0] = u3
        mom = fu[2, 0, 0] - a0 * u3 + plan.cheb_D2 @ u3
        mom[0] = f4[2, 0, 0] + 2.0 * (plan.cheb_D[0] @ u3)
        ph[0, 0] = ops.pinv @ mom
        for c in range(3):
            rhs = fb[c, 0, 0].copy()
            rhs[0] = rhs[-1] = 0.0
            bh[c, 0, 0] = ops.b0inv @ rhs
        # the kinematic row for the mean; re-projected to zero mean afterwards
        drift = float(np.real(fe[0, 0] + u3[0]) / a0) / (plan.N1 * plan.N2)
        eh[0, 0] = 0.0

        u = _phys(uh, plan, False)
        b = _phys(bh, plan, False)
        p = _phys(ph, plan, False)
        eta = _phys(eh, plan, True)
        u[..., -1] = 0.0
        b[..., 0] = 0.0
        b[..., -1] = 0.0
        return u, p, b, eta, drift


def imex_step(state: SimState, dt, plan, previous=None, scheme="bdf2", nonlinear=True):
    """One IMEX step from ``state`` (and ``previous`` at ``t - dt`` for BDF2).

    Stateless convenience wrapper around :class:`IMEXStepper`; long runs
    should reuse a stepper so the per-mode inverses are built once.
    """
    stepper = IMEXStepper(plan, state.params, dt, scheme=scheme, nonlinear=nonlinear)
    stepper.previous = previous
    return stepper.step(state)


def linear_eigenmode(plan, params: Params, mode=(1, 0), amplitude=1e-3):
    """Slowest-decaying eigenmode of the semi-discrete linear problem at one mode.

    Returns a real :class:`SimState` whose surface elevation has maximum
    ``amplitude``, together with the (real, negative) decay rate.
    """
    n = plan.N3 + 1
    i1 = int(np.nonzero(plan.n1 == mode[0])[0][0])
    i2 = int(mode[1])
    if (mode[0], mode[1]) == (0, 0) or i2 < 0:
        raise ValueError("mode must be a nonzero (n1, n2) with n2 >= 0")
    kap2 = plan.kmag[i1, i2] ** 2
    L = stokes_block(plan, plan.ik1[i1], plan.ik2[i2], kap2, 0.0, sigma=params.sigma)
    E = mass_matrix(plan)
    w, V = scipy.linalg.eig(L, -E)
    finite = np.isfinite(w) & (np.abs(w) < 1e8)
    idx = np.flatnonzero(finite)[np.argmax(w[finite].real)]
    lam, v = w[idx], V[:, idx]
    v = v / v[4 * n]
    spec_u = np.zeros((3,) + plan.spectral_shape + (n,), dtype=complex)
    spec_p = np.zeros(plan.spectral_shape + (n,), dtype=complex)
    spec_e = np.zeros(plan.spectral_shape, dtype=complex)
    # rfft2 storage: for n2 > 0 one coefficient represents the conjugate pair
    targets = [(i1, i2, v)]
    if i2 == 0:
        targets.append(((-i1) % plan.N1, 0, np.conj(v)))
    for a, b, vv in targets:
        for c in range(3):
            spec_u[c, a, b] = vv[c * n:(c + 1) * n]
        spec_p[a, b] = vv[3 * n:4 * n]
        spec_e[a, b] = vv[4 * n]
    eta = _phys(spec_e, plan, True)
    fac = amplitude / np.max(np.abs(eta))
    st = SimState(u=_phys(spec_u, plan, False) * fac, p=_phys(spec_p, plan, False) * fac,
                  b=plan.zeros_volume(3), eta=eta * fac, params=params)
    return st, float(lam.real)
