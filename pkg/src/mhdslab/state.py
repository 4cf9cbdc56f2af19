"""Simulation state and physical parameters."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .discretization import SpectralPlan
from .errors import GridMismatchError, InvalidFieldError

__all__ = ["Params", "SimState"]


@dataclass(frozen=True)
class Params:
    """Physical parameters (viscosity, resistivity and gravity are scaled to 1).

    sigma : surface tension coefficient, >= 0
    Bbar  : constant magnetic field outside the fluid
    """

    sigma: float = 0.0
    Bbar: tuple = (0.0, 0.0, 0.5)

    def __post_init__(self):
        if not (self.sigma >= 0.0):
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        bb = tuple(float(x) for x in self.Bbar)
        if len(bb) != 3:
            raise ValueError("Bbar must have three components")
        object.__setattr__(self, "Bbar", bb)
        object.__setattr__(self, "sigma", float(self.sigma))


@dataclass
class SimState:
    """The unknowns ``(u, p, b, eta)`` at time ``t``.

    ``b`` is the perturbation of the magnetic field from ``Bbar``.
    """

    u: np.ndarray
    p: np.ndarray
    b: np.ndarray
    eta: np.ndarray
    t: float = 0.0
    params: Params = field(default_factory=Params)
    step: int = 0

    @classmethod
    def zeros(cls, plan: SpectralPlan, params=None, t=0.0):
        return cls(
            u=plan.zeros_volume(3), p=plan.zeros_volume(), b=plan.zeros_volume(3),
            eta=plan.zeros_surface(), t=t, params=params or Params(),
        )

    def validate(self, plan: SpectralPlan):
        expected = {
            "u": (3,) + plan.volume_shape, "p": plan.volume_shape,
            "b": (3,) + plan.volume_shape, "eta": plan.surface_shape,
        }
        for name, shape in expected.items():
            arr = getattr(self, name)
            if arr.shape != shape:
                raise GridMismatchError(f"{name} has shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise InvalidFieldError(f"{name} contains non-finite values")
        return self

    def copy(self, **changes):
        new = replace(self, **changes)
        for name in ("u", "p", "b", "eta"):
            if name not in changes:
                setattr(new, name, getattr(self, name).copy())
        return new

    def scaled(self, factor):
        """All fields multiplied by ``factor`` (time and parameters unchanged)."""
        return self.copy(u=self.u * factor, p=self.p * factor, b=self.b * factor,
                         eta=self.eta * factor)

    def is_equilibrium(self):
        return not (np.any(self.u) or np.any(self.p) or np.any(self.b) or np.any(self.eta))
