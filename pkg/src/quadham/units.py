"""MKS <-> natural-unit conversion.

With length unit ``lam`` the MKS field Hamiltonian (couplings ``1/2h``,
``mc^2/2h``, ``c/2``) maps onto the natural-unit one (couplings ``1/2``,
``m/2``, ``1/2``) exactly when

* energy unit  ``E0  = h c / lam``
* time unit    ``tau = h / E0 = lam / c``
* natural mass ``m   = M c lam / h`` (the Planck frequency in units of ``1/tau``).

``h`` is whatever action constant the caller supplies; the MKS Schrodinger
equation then reads ``i h dpsi/dt = (-h^2/2M lap + V) psi``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

PLANCK_H = 6.62607015e-34
SPEED_OF_LIGHT = 2.99792458e8
ELECTRON_MASS = 9.1093837015e-31


@dataclass(frozen=True)
class UnitSystem:
    h: float
    c: float
    mass: float
    length_unit: float = 1.0

    def __post_init__(self):
        for name in ("h", "c", "mass", "length_unit"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive and finite, got {v}")

    @classmethod
    def natural(cls, m: float) -> "UnitSystem":
        return cls(h=1.0, c=1.0, mass=m, length_unit=1.0)

    @classmethod
    def si(cls, mass: float, length_unit: float, h: float = PLANCK_H) -> "UnitSystem":
        return cls(h=h, c=SPEED_OF_LIGHT, mass=mass, length_unit=length_unit)

    @property
    def energy_unit(self) -> float:
        return self.h * self.c / self.length_unit

    @property
    def time_unit(self) -> float:
        return self.h / self.energy_unit

    @property
    def natural_mass(self) -> float:
        return self.mass * self.c * self.length_unit / self.h


class Scales(NamedTuple):
    energy: float
    length: float
    time: float


def scales(u: UnitSystem) -> Scales:
    return Scales(u.energy_unit, u.length_unit, u.time_unit)


def planck_frequency(u: UnitSystem) -> float:
    """``mass c^2 / h`` in the system's own frequency unit (1/s for SI)."""
    return u.mass * u.c**2 / u.h


@dataclass(frozen=True, eq=False)
class Params:
    """A bundle of energies, lengths and times (any may be scalars or arrays)."""

    mass: float
    energy: np.ndarray | float | None = None
    length: np.ndarray | float | None = None
    time: np.ndarray | float | None = None


def _scale(x, factor):
    if x is None:
        return None
    return np.asarray(x, dtype=float) * factor if np.ndim(x) else float(x) * factor


def to_natural(u: UnitSystem, mks: Params) -> tuple[Params, Scales]:
    """Divide energies, lengths and times by the unit scales; mass -> natural mass."""
    s = scales(u)
    nat = Params(
        mass=u.natural_mass,
        energy=_scale(mks.energy, 1.0 / s.energy),
        length=_scale(mks.length, 1.0 / s.length),
        time=_scale(mks.time, 1.0 / s.time),
    )
    return nat, s


def from_natural(u: UnitSystem, nat: Params) -> Params:
    s = scales(u)
    return Params(
        mass=u.mass,
        energy=_scale(nat.energy, s.energy),
        length=_scale(nat.length, s.length),
        time=_scale(nat.time, s.time),
    )


def natural_frequency(u: UnitSystem, omega: float) -> float:
    """An angular frequency in 1/s expressed in units of ``1/tau``."""
    return omega * u.time_unit


def separation_ratio(planck: float, slow_frequency: float) -> float:
    return planck / abs(slow_frequency) if slow_frequency else np.inf
