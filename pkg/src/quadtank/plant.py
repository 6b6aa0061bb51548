"""Quadruple-tank process: parameters, nonlinear level dynamics, linearization.

Tanks 1 and 2 are the measured lower tanks; tank 3 drains into tank 1 and
tank 4 into tank 2. Pump 1 feeds tanks 1 and 4, pump 2 feeds tanks 2 and 3,
split by the valve ratios ``gamma``. Units are cm, s, V throughout.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import NonPositiveLevel, ValidationError

# row i of the dynamics receives outflow from FEEDER[i] (None: upper tank)
FEEDER = (2, 3, None, None)


class Phase(str, Enum):
    MINUS = "minus"
    PLUS = "plus"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        aliases = {"minus": cls.MINUS, "p-": cls.MINUS, "-": cls.MINUS,
                   "plus": cls.PLUS, "p+": cls.PLUS, "+": cls.PLUS}
        if key not in aliases:
            raise ValidationError("phase", f"expected 'minus' or 'plus', got {value!r}")
        return aliases[key]


def _vec(values, n, name):
    arr = tuple(float(v) for v in values)
    if len(arr) != n:
        raise ValidationError(name, f"expected {n} values, got {len(arr)}")
    if not all(np.isfinite(arr)):
        raise ValidationError(name, "values must be finite")
    return arr


@dataclass(frozen=True)
class TankGeometry:
    area: tuple          # tank cross sections A_i, cm^2
    outlet_area: tuple   # outlet holes a_i, cm^2
    k_c: float = 0.5     # level sensor gain, V/cm
    g: float = 981.0     # cm/s^2

    def __post_init__(self):
        object.__setattr__(self, "area", _vec(self.area, 4, "area"))
        object.__setattr__(self, "outlet_area", _vec(self.outlet_area, 4, "outlet_area"))
        if any(x <= 0 for x in self.area):
            raise ValidationError("area", "all tank areas must be > 0")
        if any(x < 0 for x in self.outlet_area):
            raise ValidationError("outlet_area", "outlet areas must be >= 0")
        if any(o >= a for o, a in zip(self.outlet_area, self.area)):
            raise ValidationError("outlet_area", "each outlet must be smaller than its tank")
        if not self.k_c > 0:
            raise ValidationError("k_c", "must be > 0")
        if not self.g > 0:
            raise ValidationError("g", "must be > 0")


@dataclass(frozen=True)
class OperatingPoint:
    phase: Phase
    h0: tuple         # cm
    v0: tuple         # V
    pump_gain: tuple  # cm^3/(V s)
    gamma: tuple      # valve ratios, dimensionless

    def __post_init__(self):
        object.__setattr__(self, "phase", Phase.parse(self.phase))
        object.__setattr__(self, "h0", _vec(self.h0, 4, "h0"))
        object.__setattr__(self, "v0", _vec(self.v0, 2, "v0"))
        object.__setattr__(self, "pump_gain", _vec(self.pump_gain, 2, "pump_gain"))
        object.__setattr__(self, "gamma", _vec(self.gamma, 2, "gamma"))
        if any(h <= 0 for h in self.h0):
            raise ValidationError("h0", "operating levels must be > 0")
        if any(not 0.0 <= g <= 1.0 for g in self.gamma):
            raise ValidationError("gamma", "valve ratios must lie in [0, 1]")
        if any(k <= 0 for k in self.pump_gain):
            raise ValidationError("pump_gain", "must be > 0")


@dataclass(frozen=True)
class LinearModel:
    """Deviation-variable model ``dx/dt = a x + b u``, ``y = c x``."""

    a_mat: np.ndarray
    b_mat: np.ndarray
    c_mat: np.ndarray
    time_const: np.ndarray


def default_geometry():
    return TankGeometry(area=(28.0, 32.0, 28.0, 32.0),
                        outlet_area=(0.071, 0.057, 0.071, 0.057),
                        k_c=0.5, g=981.0)


_TABLE = {
    Phase.MINUS: dict(h0=(12.4, 12.7, 1.8, 1.4), v0=(3.00, 3.00),
                      pump_gain=(3.33, 3.35), gamma=(0.70, 0.60)),
    Phase.PLUS: dict(h0=(12.6, 13.0, 4.8, 4.9), v0=(3.15, 3.15),
                     pump_gain=(3.14, 3.29), gamma=(0.43, 0.34)),
}


def operating_point(phase):
    phase = Phase.parse(phase)
    return OperatingPoint(phase=phase, **_TABLE[phase])


def inflow_matrix(op):
    """4x2 map from pump voltages to tank inflows, cm^3/(V s)."""
    (g1, g2), (k1, k2) = op.gamma, op.pump_gain
    return np.array([[g1 * k1, 0.0],
                     [0.0, g2 * k2],
                     [0.0, (1.0 - g2) * k2],
                     [(1.0 - g1) * k1, 0.0]])


def nonlinear_rhs(geom, op, h, v):
    """Level rates dh/dt (cm/s) for absolute levels ``h`` and voltages ``v``.

    Negative levels are clamped to zero inside the square root.
    """
    h = np.asarray(h, dtype=float)
    area = np.asarray(geom.area)
    out = np.asarray(geom.outlet_area) * np.sqrt(2.0 * geom.g * np.maximum(h, 0.0))
    flow = inflow_matrix(op) @ np.asarray(v, dtype=float) - out
    flow[0] += out[2]
    flow[1] += out[3]
    return flow / area


def conductance(geom, i):
    """K_i = (a_i / A_i) sqrt(2 g) for tank ``i`` (1-based)."""
    if i not in (1, 2, 3, 4):
        raise ValueError(f"tank index must be 1..4, got {i}")
    return geom.outlet_area[i - 1] / geom.area[i - 1] * np.sqrt(2.0 * geom.g)


def time_constants(geom, op):
    h0 = np.asarray(op.h0)
    if np.any(h0 <= 0):
        raise NonPositiveLevel("operating levels must be > 0")
    area, outlet = np.asarray(geom.area), np.asarray(geom.outlet_area)
    with np.errstate(divide="ignore"):
        return area / outlet * np.sqrt(2.0 * h0 / geom.g)


def linearize(geom, op):
    T = time_constants(geom, op)
    area = np.asarray(geom.area)
    a = np.diag(-1.0 / T)
    for i, feeder in enumerate(FEEDER):
        if feeder is not None:
            a[i, feeder] = area[feeder] / (area[i] * T[feeder])
    b = inflow_matrix(op) / area[:, None]
    c = np.zeros((2, 4))
    c[0, 0] = c[1, 1] = geom.k_c
    return LinearModel(a_mat=a, b_mat=b, c_mat=c, time_const=T)


def equilibrium_residual(geom, op):
    """dh/dt evaluated at the tabulated operating point (h0, v0)."""
    return nonlinear_rhs(geom, op, op.h0, op.v0)


def finite_diff_jacobian(geom, op, eps=1e-4):
    if not eps > 0:
        raise ValueError("eps must be > 0")
    h0 = np.asarray(op.h0, dtype=float)
    jac = np.empty((4, 4))
    for j in range(4):
        step = np.zeros(4)
        step[j] = eps
        jac[:, j] = (nonlinear_rhs(geom, op, h0 + step, op.v0)
                     - nonlinear_rhs(geom, op, h0 - step, op.v0)) / (2.0 * eps)
    return jac
