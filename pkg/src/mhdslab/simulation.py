"""Experiment driver: initial data, the time loop and per-emission reports."""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .config import RunConfig
from .diagnostics import (
    EnergyReport,
    G2NAccumulator,
    F2N,
    G2N_update,
    balance_residual_flat,
    balance_residual_geometric,
    energy_n,
    energy_sigma,
    fit_decay,
    history_length,
    volume_norm_sq,
    surface_norm_sq,
)
from .discretization import SpectralPlan, integrate_surface
from .errors import MHDSlabError
from .geometry import GUARD_THRESHOLD, guard_quantity, validity_guard
from .io import read_snapshot_bundle, snapshot_write
from .solver import IMEXStepper, initial_pressure, linear_eigenmode, project_divergence
from .state import Params, SimState

__all__ = ["RunResult", "initial_state", "make_report", "run", "summarize", "plan_for"]

log = logging.getLogger(__name__)

# presets keep the guard quantity this far below its threshold
GUARD_MARGIN = 10.0


def plan_for(cfg: RunConfig):
    return SpectralPlan(cfg.N1, cfg.N2, cfg.N3, cfg.L1, cfg.L2)


def _band_limited(rng, plan, shape_extra, nmax, decay):
    """Random real field with horizontal modes |n_i| <= nmax and spectrum ~ (1+|n|^2)^-decay."""
    spec = np.zeros(shape_extra + plan.spectral_shape, dtype=complex)
    n1, n2 = plan.n1[:, None], plan.n2[None, :]
    band = (np.abs(n1) <= nmax) & (n2 <= nmax)
    weight = np.where(band, (1.0 + n1 ** 2 + n2 ** 2) ** (-decay), 0.0)
    noise = rng.standard_normal(spec.shape) + 1j * rng.standard_normal(spec.shape)
    spec = noise * weight
    spec[..., 0, 0] = 0.0
    return np.fft.irfft2(spec, s=plan.surface_shape, axes=(-2, -1)) * plan.N1 * plan.N2


def _random_state(cfg, plan, params):
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    eta = _band_limited(rng, plan, (), 4, 2.0)
    x3 = plan.x3
    # horizontal structure times a random cubic in x3; u vanishes at the bottom, b at both ends
    prof_u = np.stack([np.polynomial.Polynomial(rng.standard_normal(4))(x3) * (1.0 + x3)
                       for _ in range(3)])
    prof_b = np.stack([np.polynomial.Polynomial(rng.standard_normal(4))(x3) * x3 * (1.0 + x3)
                       for _ in range(3)])
    hu = _band_limited(rng, plan, (3,), 4, 2.0)
    hb = _band_limited(rng, plan, (3,), 4, 2.0)
    u = hu[..., None] * prof_u[:, None, None, :]
    b = hb[..., None] * prof_b[:, None, None, :]
    scale = cfg.amplitude / max(np.max(np.abs(eta)), 1e-300)
    return SimState(u=u * scale, p=plan.zeros_volume(), b=b * scale, eta=eta * scale,
                    params=params)


def initial_state(cfg: RunConfig, plan: SpectralPlan, params: Params):
    """Initial data for ``cfg.preset``, scaled so the guard quantity is at most
    ``GUARD_THRESHOLD / GUARD_MARGIN``.  Returns ``(state, info)``.
    """
    preset = cfg.preset
    info = {"preset": preset, "scale_factor": 1.0}
    if preset == "zero":
        return SimState.zeros(plan, params), info
    if preset == "single-mode":
        X1, X2 = plan.surface_mesh
        m1, m2 = cfg.mode
        eta = cfg.amplitude * np.cos(2 * np.pi * (m1 * X1 / cfg.L1 + m2 * X2 / cfg.L2))
        state = SimState(u=plan.zeros_volume(3), p=plan.zeros_volume(), b=plan.zeros_volume(3),
                         eta=eta, params=params)
    elif preset == "eigenmode":
        state, rate = linear_eigenmode(plan, params, tuple(cfg.mode), cfg.amplitude)
        info["linear_rate"] = rate
    elif preset == "random":
        state = _random_state(cfg, plan, params)
    elif preset == "file":
        src = read_snapshot_bundle(cfg.path, plan).state
        state = SimState(u=src.u, p=src.p, b=src.b, eta=src.eta - np.mean(src.eta),
                         params=params)
    else:  # pragma: no cover - RunConfig validates the name
        raise ValueError(preset)

    limit = GUARD_THRESHOLD / GUARD_MARGIN
    for _ in range(50):
        q = guard_quantity(state.eta, plan)
        if q <= limit:
            break
        factor = 0.95 * np.sqrt(limit / q)
        state = state.scaled(factor)
        info["scale_factor"] *= factor
    info["guard"] = guard_quantity(state.eta, plan)
    if np.any(state.u) or np.any(state.eta):
        state.u = project_divergence(state.u, state.eta, plan)
    if preset != "eigenmode":
        state.p = initial_pressure(state.u, state.eta, plan, params.sigma)
    state.b[..., 0] = 0.0
    state.b[..., -1] = 0.0
    state.t, state.step = 0.0, 0
    return state.validate(plan), info


def make_report(history, plan, cfg: RunConfig, accumulator: G2NAccumulator, step_info=None):
    """Energy report at the newest state of ``history``; returns ``(report, accumulator)``."""
    s = history[-1]
    q = cfg.accuracy
    step_info = step_info or {}
    E, D = energy_sigma(history, plan, q)
    En, Dn = {}, {}
    for n in sorted({cfg.N + 2, 2 * cfg.N}):
        En[n], Dn[n] = energy_n(history, n, plan, q)
    rep = EnergyReport(
        t=s.t, step=s.step, E_sigma=E, D_sigma=D, E_n=En, D_n=Dn, F2N=F2N(s.eta, cfg.N, plan),
        balance_flat=abs(balance_residual_flat(history, plan, q, linear=not cfg.nonlinear)),
        balance_geometric=(abs(balance_residual_geometric(history, plan, accuracy=q))
                           if cfg.nonlinear else float("nan")),
        zero_mean_drift=abs(integrate_surface(s.eta, plan)) / plan.area,
        mean_correction=abs(step_info.get("mean_correction", 0.0)),
        div_A_u=step_info.get("div_A_u", 0.0),
    )
    accumulator = G2N_update(accumulator, rep, cfg.N)
    rep.G2N = accumulator.value
    return rep, accumulator


@dataclass
class RunResult:
    config: RunConfig
    reports: list
    final_state: SimState
    status: str = "ok"
    message: str = ""
    history: list = field(default_factory=list)
    accumulator: G2NAccumulator = field(default_factory=G2NAccumulator)
    states: list = field(default_factory=list)
    init_info: dict = field(default_factory=dict)

    def series(self, key):
        """``(t, value)`` pairs of one report field; ``E_5`` style keys index ``E_n``."""
        out = []
        for r in self.reports:
            if key.startswith(("E_", "D_")) and key[2:].isdigit():
                val = (r.E_n if key[0] == "E" else r.D_n)[int(key[2:])]
            else:
                val = getattr(r, key)
            out.append((r.t, val))
        return out


def run(cfg: RunConfig, resume=None, threads=None, keep_states=False, on_report=None):
    """Advance from the configured initial data (or a snapshot) to ``t_final``.

    Reports are emitted every ``cadence`` steps (and at the last step) once
    the history window holds enough states for every functional.  A failing
    validity guard stops the run with ``status = "guard_failed"``; other step
    failures raise :class:`~mhdslab.errors.SolverRuntimeError`.
    """
    plan = plan_for(cfg)
    params = Params(cfg.sigma, cfg.Bbar)
    window = history_length(2 * cfg.N, cfg.accuracy)
    # BLAS stays single threaded so results cannot depend on the thread count
    with threadpool_limits(limits=1):
        if resume is None:
            state, init_info = initial_state(cfg, plan, params)
            history = deque([state], maxlen=window)
            acc = G2NAccumulator()
        else:
            if resume.grid != (plan.N1, plan.N2, plan.N3, plan.L1, plan.L2):
                raise MHDSlabError(f"snapshot grid {resume.grid} does not match the config")
            history = deque(resume.history[-window:], maxlen=window)
            acc = resume.accumulator
            init_info = {"resumed_from_step": history[-1].step}
        stepper = IMEXStepper(plan, params, cfg.dt, scheme=cfg.integrator,
                              nonlinear=cfg.nonlinear, threads=threads)
        if len(history) >= 2:
            stepper.previous = history[-2]
        reports, states = [], []
        status, message = "ok", ""
        if keep_states:
            states.append(history[-1])
        while history[-1].step < cfg.n_steps:
            current = history[-1]
            if not validity_guard(current.eta, plan):
                status = "guard_failed"
                message = (f"step {current.step}: validity guard failed "
                           f"(quantity {guard_quantity(current.eta, plan):.3e})")
                log.warning(message)
                break
            new = stepper.step(current)
            history.append(new)
            if new.step % cfg.cadence == 0 or new.step == cfg.n_steps:
                if len(history) >= window:
                    rep, acc = make_report(list(history), plan, cfg, acc, stepper.last_info)
                    reports.append(rep)
                    if on_report is not None:
                        on_report(rep)
                if keep_states:
                    states.append(new)
            if cfg.snapshot_step is not None and new.step == cfg.snapshot_step:
                path = Path(cfg.directory) / f"{Path(cfg.snapshot).stem}_step{new.step}.npz"
                path.parent.mkdir(parents=True, exist_ok=True)
                snapshot_write(new, path, plan, history=list(history), accumulator=acc)
    return RunResult(config=cfg, reports=reports, final_state=history[-1], status=status,
                     message=message, history=list(history), accumulator=acc, states=states,
                     init_info=init_info)


def _safe_fit(series, model, window):
    try:
        return fit_decay(series, model, window)
    except (MHDSlabError, ValueError) as exc:
        return {"error": str(exc)}


def summarize(result: RunResult):
    """Structured summary: decay fits, integrated dissipation, final norms and status."""
    cfg = result.config
    plan = plan_for(cfg)
    window = cfg.fit_window or (cfg.t_final / 10.0, cfg.t_final)
    fits = {}
    if result.reports:
        n = cfg.N + 2
        fits["E_sigma_exponential"] = _safe_fit(result.series("E_sigma"), "exponential", window)
        fits[f"E_{n}_exponential"] = _safe_fit(result.series(f"E_{n}"), "exponential", window)
        fits[f"E_{n}_algebraic"] = _safe_fit(result.series(f"E_{n}"), "algebraic", window)
    td = np.array(result.series("D_sigma")) if result.reports else np.zeros((0, 2))
    int_D = float(np.trapezoid(td[:, 1], td[:, 0])) if len(td) > 1 else 0.0
    s = result.final_state

    def worst(key):
        vals = [abs(getattr(r, key)) for r in result.reports if np.isfinite(getattr(r, key))]
        return max(vals) if vals else None

    return {
        "package_version": __version__,
        "config": cfg.to_dict(),
        "status": result.status,
        "message": result.message,
        "initial": result.init_info,
        "final_step": s.step,
        "final_time": s.t,
        "n_reports": len(result.reports),
        "fits": fits,
        "integral_D_sigma": int_D,
        "G2N": result.accumulator.value,
        "max_abs_mean_eta": worst("zero_mean_drift"),
        "max_balance_flat": worst("balance_flat"),
        "max_balance_geometric": worst("balance_geometric"),
        "max_div_A_u": worst("div_A_u"),
        "final_norms": {
            "u_L2": float(np.sqrt(volume_norm_sq(s.u, 0, plan))),
            "b_L2": float(np.sqrt(volume_norm_sq(s.b, 0, plan))),
            "eta_L2": float(np.sqrt(surface_norm_sq(s.eta, 0, plan))),
        },
    }
