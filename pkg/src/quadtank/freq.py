"""Frequency-domain analysis of the linearized tank process.

The 2x2 transfer matrix has first-order diagonal entries and second-order
off-diagonal entries, so its transmission zeros are the roots of a single
quadratic whose constant term is set by the valve ratios.
"""

import cmath
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DegenerateValve, NotAZero, PoleEvaluation, SingularDcGain
from .plant import linearize, time_constants


class PhaseClass(str, Enum):
    MINIMUM = "minimum"
    NONMINIMUM = "nonminimum"
    BOUNDARY = "boundary"


@dataclass(frozen=True)
class TransferMatrix:
    """Parametric form of G(s).

    ``c_gain[n] = T_n k_n k_c / A_n``. ``dc`` holds the four static gains; the
    off-diagonal ones carry the pump gain of the feeding pump, e.g.
    ``dc[0, 1] = (1 - gamma2) c1 k2 / k1``.
    """

    c_gain: tuple
    gamma: tuple
    time_const: tuple
    dc: np.ndarray

    def denominators(self, s):
        T1, T2, T3, T4 = self.time_const
        return np.array([[1 + s * T1, (1 + s * T3) * (1 + s * T1)],
                         [(1 + s * T4) * (1 + s * T2), 1 + s * T2]])


@dataclass(frozen=True)
class ZeroAnalysis:
    eta: float
    zero_poly: np.ndarray
    zeros: tuple          # sorted by real part, largest first
    complex_pair: bool
    classification: PhaseClass


@dataclass(frozen=True)
class RgaResult:
    lam: float
    lam_tilde: float
    rga_mat: np.ndarray


def transfer_matrix(model, op, geom):
    T = tuple(float(t) for t in model.time_const)
    (g1, g2), (k1, k2) = op.gamma, op.pump_gain
    c1 = T[0] * k1 * geom.k_c / geom.area[0]
    c2 = T[1] * k2 * geom.k_c / geom.area[1]
    dc = np.array([[g1 * c1, (1 - g2) * c1 * k2 / k1],
                   [(1 - g1) * c2 * k1 / k2, g2 * c2]])
    return TransferMatrix(c_gain=(c1, c2), gamma=(g1, g2), time_const=T, dc=dc)


def eval_transfer(tm, s):
    den = tm.denominators(complex(s))
    scale = 1.0 + abs(s) * max(tm.time_const)
    if np.any(np.abs(den) < 1e-12 * scale * scale):
        raise PoleEvaluation(f"s = {s} is a pole of G(s)")
    return tm.dc / den


def dc_gain(tm):
    return tm.dc.copy()


def eta(gamma):
    g1, g2 = gamma
    if g1 * g2 == 0:
        raise DegenerateValve("eta is undefined when a valve ratio is 0")
    return (1 - g1) * (1 - g2) / (g1 * g2)


def zero_poly(tm):
    """T3 T4 s^2 + (T3 + T4) s + (1 - eta)."""
    T3, T4 = tm.time_const[2], tm.time_const[3]
    return np.array([T3 * T4, T3 + T4, 1.0 - eta(tm.gamma)])


def classify_by_valve(gamma):
    total = gamma[0] + gamma[1]
    if total > 1:
        return PhaseClass.MINIMUM
    if total < 1:
        return PhaseClass.NONMINIMUM
    return PhaseClass.BOUNDARY


def zero_analysis(tm, op=None):
    gamma = tm.gamma if op is None else op.gamma
    e = eta(gamma)
    p = zero_poly(tm)
    a2, a1, a0 = p
    disc = a1 * a1 - 4 * a2 * a0
    root = cmath.sqrt(disc)
    # stable quadratic formula: avoid cancellation in the small root
    q = -0.5 * (a1 + (root if a1 >= 0 else -root))
    r1 = q / a2
    r2 = a0 / q if q != 0 else -a1 / a2 - r1
    complex_pair = disc < 0
    if complex_pair:
        zeros = tuple(sorted((r1, r2), key=lambda z: (-z.real, -z.imag)))
    else:
        zeros = tuple(sorted((r1.real, r2.real), reverse=True))
    if gamma[0] + gamma[1] == 1:
        cls = PhaseClass.BOUNDARY
    elif max(np.real(zeros)) > 0:
        cls = PhaseClass.NONMINIMUM
    else:
        cls = PhaseClass.MINIMUM
    return ZeroAnalysis(eta=e, zero_poly=p, zeros=zeros,
                        complex_pair=complex_pair, classification=cls)


def det_transfer(tm, s):
    g = eval_transfer(tm, s)
    return g[0, 0] * g[1, 1] - g[0, 1] * g[1, 0]


def zero_direction(tm, z, rtol=1e-8):
    """Unit left null vector psi with psi^T G(z) = 0.

    Taken from the larger row of adj(G(z)); sign fixed so the first nonzero
    component is positive.
    """
    g = eval_transfer(tm, z)
    det = g[0, 0] * g[1, 1] - g[0, 1] * g[1, 0]
    ref = abs(g[0, 0] * g[1, 1]) + abs(g[0, 1] * g[1, 0])
    if ref == 0 or abs(det) > rtol * ref:
        raise NotAZero(f"|det G({z})| = {abs(det):.3g} is not ~0")
    rows = np.array([[g[1, 1], -g[0, 1]], [-g[1, 0], g[0, 0]]])
    psi = rows[int(np.argmax(np.linalg.norm(rows, axis=1)))]
    if np.isrealobj(z) or complex(z).imag == 0:
        psi = psi.real
    psi = psi / np.linalg.norm(psi)
    lead = psi[np.flatnonzero(np.abs(psi) > 1e-15)[0]]
    if np.real(lead) < 0:
        psi = -psi
    return psi


def rga(op):
    g1, g2 = op.gamma
    total = g1 + g2
    if total == 1:
        raise SingularDcGain("gamma1 + gamma2 = 1: the DC gain is singular")
    lam = g1 * g2 / (total - 1)
    lam_tilde = (1 - g1) * (1 - g2) / (1 - total)
    if not np.isclose(lam_tilde, 1 - lam, rtol=1e-12, atol=1e-12):
        raise AssertionError(f"lambda~ = {lam_tilde} differs from 1 - lambda = {1 - lam}")
    mat = np.array([[lam, 1 - lam], [1 - lam, lam]])
    return RgaResult(lam=lam, lam_tilde=lam_tilde, rga_mat=mat)


def rga_from_gain(gain):
    """Bristol's array G(0) * inv(G(0))^T, elementwise."""
    gain = np.asarray(gain, dtype=float)
    return gain * np.linalg.inv(gain).T


def input_gain_nonsingular(op):
    """Determinant of the pump-to-flow gain matrix and whether it is nonzero."""
    (g1, g2), (k1, k2) = op.gamma, op.pump_gain
    mat = np.array([[g1 * k1, (1 - g2) * k2], [(1 - g1) * k1, g2 * k2]])
    det = float(mat[0, 0] * mat[1, 1] - mat[0, 1] * mat[1, 0])
    return abs(det) > 1e-12 * k1 * k2, det


def analyze(geom, op, model=None):
    """Bundle of everything the ``analyze`` report prints."""
    model = model or linearize(geom, op)
    tm = transfer_matrix(model, op, geom)
    out = dict(time_const=time_constants(geom, op), transfer=tm)
    try:
        out["zeros"] = zero_analysis(tm, op)
    except DegenerateValve as exc:
        out["zeros"] = exc
    try:
        out["rga"] = rga(op)
    except SingularDcGain as exc:
        out["rga"] = exc
    out["input_gain"] = input_gain_nonsingular(op)
    out["valve_class"] = classify_by_valve(op.gamma)
    return out
