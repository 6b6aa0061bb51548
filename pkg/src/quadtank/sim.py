"""Fixed-step closed-loop simulation: plant, decentralized PI, observer bank.

The full state is stacked as ``[h (4), PI integrals (2), estimates (4 N)]``
and advanced by classic RK4. References are piecewise constant and frozen at
the start of each step.
"""

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .control import PiGains, SetpointSchedule, default_schedule, reference_gains
from .errors import NonFiniteState, ValidationError
from .observer import ObserverConfig, design_bank
from .plant import OperatingPoint, Phase, TankGeometry, default_geometry, linearize, operating_point

log = logging.getLogger(__name__)

REFERENCE_X0 = (8.0, 5.0, -2.0, 1.0)
REFERENCE_T_END = {Phase.MINUS: 500.0, Phase.PLUS: 5000.0}


@dataclass(frozen=True)
class SimConfig:
    geometry: TankGeometry
    op: OperatingPoint
    pi_gains: tuple
    schedule: SetpointSchedule
    observer: ObserverConfig = field(default_factory=ObserverConfig)
    dt: float = 0.01
    t_end: float = 500.0
    x0: tuple = REFERENCE_X0               # initial level deviation, cm
    estimate_init: tuple = None        # per node, deviation cm; None = zeros
    nonlinear_plant: bool = True
    v_max: float = None                # pump clamp [0, v_max]; None = off
    band: float = 0.02                 # settling band, fraction of step size

    def __post_init__(self):
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise ValidationError("dt", "must be > 0")
        if not (np.isfinite(self.t_end) and self.t_end >= self.dt):
            raise ValidationError("t_end", "must be >= dt")
        steps = self.t_end / self.dt
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise ValidationError("t_end", "must be an integer multiple of dt")
        if len(self.pi_gains) != 2 or not all(isinstance(g, PiGains) for g in self.pi_gains):
            raise ValidationError("pi_gains", "need two PiGains")
        if len(self.x0) != 4 or not np.all(np.isfinite(self.x0)):
            raise ValidationError("x0", "need 4 finite values")
        object.__setattr__(self, "x0", tuple(float(v) for v in self.x0))
        if self.estimate_init is not None:
            est = tuple(tuple(float(v) for v in row) for row in self.estimate_init)
            if len(est) != self.observer.n_nodes or any(len(row) != 4 for row in est):
                raise ValidationError("estimate_init", "need 4 values per observer node")
            object.__setattr__(self, "estimate_init", est)
        if self.v_max is not None and not self.v_max > 0:
            raise ValidationError("v_max", "must be > 0")
        if not self.band > 0:
            raise ValidationError("band", "must be > 0")
        if not self.schedule.entries:
            raise ValidationError("setpoints", "schedule needs at least one entry")

    @property
    def phase(self):
        return self.op.phase

    @property
    def n_steps(self):
        return int(round(self.t_end / self.dt))

    @classmethod
    def reference(cls, phase=Phase.MINUS, **overrides):
        """The reference numerical scenario for one operating point."""
        phase = Phase.parse(phase)
        base = cls(geometry=default_geometry(), op=operating_point(phase),
                   pi_gains=reference_gains(phase), schedule=default_schedule(),
                   t_end=REFERENCE_T_END[phase])
        return replace(base, **overrides) if overrides else base


@dataclass
class ClosedLoopState:
    h: np.ndarray
    integral: np.ndarray
    estimates: np.ndarray   # (N, 4)

    def pack(self):
        return np.concatenate([self.h, self.integral, self.estimates.ravel()])

    @classmethod
    def unpack(cls, vec, n_nodes):
        vec = np.asarray(vec, dtype=float)
        return cls(h=vec[:4].copy(), integral=vec[4:6].copy(),
                   estimates=vec[6:].reshape(n_nodes, 4).copy())


@dataclass
class SimTrace:
    t: np.ndarray
    h: np.ndarray
    v: np.ndarray
    y: np.ndarray
    r: np.ndarray
    xhat: np.ndarray        # (steps, N, 4)
    err_norm: np.ndarray    # (steps, N)
    final_state: ClosedLoopState = None
    bank: object = None
    notes: list = field(default_factory=list)

    @property
    def n_nodes(self):
        return self.xhat.shape[1]

    def columns(self):
        cols = ["t", "h1", "h2", "h3", "h4", "v1", "v2", "y1", "y2", "r1", "r2"]
        for i in range(1, self.n_nodes + 1):
            cols += [f"xhat{i}_{k}" for k in range(1, 5)] + [f"errnorm{i}"]
        return cols

    def table(self):
        n = len(self.t)
        parts = [self.t[:, None], self.h, self.v, self.y, self.r]
        for i in range(self.n_nodes):
            parts += [self.xhat[:, i, :], self.err_norm[:, i:i + 1]]
        out = np.hstack(parts)
        assert out.shape == (n, len(self.columns()))
        return out

    def to_csv(self, path):
        np.savetxt(path, self.table(), delimiter=",", fmt="%.12g",
                   header=",".join(self.columns()), comments="")


def rk4_step(state, t, dt, rhs):
    """One classic Runge-Kutta step of ``dstate/dt = rhs(t, state)``."""
    k1 = rhs(t, state)
    k2 = rhs(t + 0.5 * dt, state + 0.5 * dt * k1)
    k3 = rhs(t + 0.5 * dt, state + 0.5 * dt * k2)
    k4 = rhs(t + dt, state + dt * k3)
    return state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


class _ClosedLoop:
    """Stacked right-hand side with every constant matrix precomputed."""

    def __init__(self, cfg, model, bank):
        geom, op = cfg.geometry, cfg.op
        area = np.asarray(geom.area)
        self.h0 = np.asarray(op.h0, dtype=float)
        self.v0 = np.asarray(op.v0, dtype=float)
        self.c = model.c_mat
        self.a = model.a_mat
        self.b = model.b_mat
        self.K = np.array([g.K for g in cfg.pi_gains])
        self.inv_ti = np.array([1.0 / g.Ti for g in cfg.pi_gains])
        self.nonlinear = cfg.nonlinear_plant
        self.v_max = cfg.v_max
        # outflow q_i = coef_i sqrt(h_i); dh = drain @ q + b @ v
        self.coef = np.asarray(geom.outlet_area) * np.sqrt(2.0 * geom.g)
        drain = -np.eye(4)
        drain[0, 2] = drain[1, 3] = 1.0
        self.drain = drain / area[:, None]
        self.obs_a, self.obs_l, self.obs_b = bank.stacked_system(model)

    def inputs(self, s, r):
        x = s[:4] - self.h0
        y = self.c @ x
        u = self.K * ((r - y) + s[4:6] * self.inv_ti)
        v = self.v0 + u
        if self.v_max is not None:
            v = np.clip(v, 0.0, self.v_max)
            u = v - self.v0
        return x, y, u, v

    def rhs(self, s, r):
        """Direct evaluation, signal by signal."""
        x, y, u, v = self.inputs(s, r)
        if self.nonlinear:
            dh = self.drain @ (self.coef * np.sqrt(np.maximum(s[:4], 0.0))) + self.b @ v
        else:
            dh = self.a @ x + self.b @ u
        dest = self.obs_a @ s[6:] + self.obs_l @ y + self.obs_b @ u
        return np.concatenate([dh, r - y, dest])

    def affine_form(self):
        """``(M, E, w)`` with ``rhs = M s + E r + w`` (+ outflow term if nonlinear).

        Valid only without the pump clamp, which makes the loop non-affine.
        """
        n_est = self.obs_a.shape[0]
        size = 6 + n_est
        c, h0, K = self.c, self.h0, self.K
        u_s = np.zeros((2, size))
        u_s[:, :4] = -K[:, None] * c
        u_s[:, 4:6] = np.diag(K * self.inv_ti)
        u_r = np.diag(K)
        u_0 = K * (c @ h0)

        m = np.zeros((size, size))
        e = np.zeros((size, 2))
        w = np.zeros(size)
        m[:4] = self.b @ u_s
        e[:4] = self.b @ u_r
        w[:4] = self.b @ u_0
        if self.nonlinear:
            w[:4] += self.b @ self.v0
        else:
            m[:4, :4] += self.a
            w[:4] -= self.a @ h0
        m[4:6, :4] = -c
        e[4:6] = np.eye(2)
        w[4:6] = c @ h0
        m[6:, :4] = self.obs_l @ c
        m[6:, 6:] = self.obs_a
        m[6:] += self.obs_b @ u_s
        e[6:] = self.obs_b @ u_r
        w[6:] = self.obs_b @ u_0 - self.obs_l @ (c @ h0)
        return m, e, w

    def fast_rhs(self):
        """Factory for a per-reference rhs built on the affine form."""
        if self.v_max is not None:
            return lambda r: (lambda _t, z: self.rhs(z, r))
        m, e, w = self.affine_form()
        drain, coef = self.drain, self.coef
        if self.nonlinear:
            def make(r):
                bias = e @ r + w

                def f(_t, z):
                    out = m @ z + bias
                    out[:4] += drain @ (coef * np.sqrt(np.maximum(z[:4], 0.0)))
                    return out
                return f
        else:
            def make(r):
                bias = e @ r + w
                return lambda _t, z: m @ z + bias
        return make


def run_scenario(cfg, bank=None):
    """Simulate ``cfg`` and return the sampled trace (``n_steps + 1`` rows)."""
    model = linearize(cfg.geometry, cfg.op)
    notes = []
    if bank is None:
        bank = design_bank(model, cfg.observer)
    for i, d in enumerate(bank.designs):
        if d.rejection is not None:
            notes.append(f"node {i + 1}: supplied L_d rejected ({d.rejection}); placed gain used")
    loop = _ClosedLoop(cfg, model, bank)
    big_n = bank.n_nodes

    h_init = np.asarray(cfg.op.h0) + np.asarray(cfg.x0)
    if cfg.nonlinear_plant and np.any(h_init < 0):
        msg = f"initial levels {np.round(h_init, 6).tolist()} clamped to >= 0"
        log.warning(msg)
        notes.append(msg)
        h_init = np.maximum(h_init, 0.0)
    est = np.zeros((big_n, 4)) if cfg.estimate_init is None else np.array(cfg.estimate_init)
    s = ClosedLoopState(h=h_init, integral=np.zeros(2), estimates=est).pack()

    n = cfg.n_steps
    dt = cfg.dt
    t = np.arange(n + 1) * dt
    starts = np.array([e[0] for e in cfg.schedule.entries])
    refs = np.array([e[1:] for e in cfg.schedule.entries])
    r_grid = refs[np.searchsorted(starts, t, side="right") - 1]

    states = np.empty((n + 1, s.size))
    states[0] = s
    make_rhs = loop.fast_rhs()
    rhs, r_prev = None, None
    # a diverging run is reported through NonFiniteState, not float warnings
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(n):
            if rhs is None or not np.array_equal(r_grid[k], r_prev):
                r_prev = r_grid[k]
                rhs = make_rhs(r_prev)
            s = rk4_step(s, t[k], dt, rhs)
            if not np.all(np.isfinite(s)):
                raise NonFiniteState(t[k + 1])
            states[k + 1] = s

    h = states[:, :4]
    x = h - loop.h0
    y = x @ loop.c.T
    u = loop.K * ((r_grid - y) + states[:, 4:6] * loop.inv_ti)
    v = loop.v0 + u
    if cfg.v_max is not None:
        v = np.clip(v, 0.0, cfg.v_max)
    xhat = states[:, 6:].reshape(n + 1, big_n, 4)
    err = np.linalg.norm(xhat - x[:, None, :], axis=2)
    return SimTrace(t=t, h=h, v=v, y=y, r=r_grid.copy(), xhat=xhat, err_norm=err,
                    final_state=ClosedLoopState.unpack(s, big_n), bank=bank, notes=notes)


@dataclass(frozen=True)
class Metrics:
    band_abs: float
    last_change: float
    settled_at: tuple          # absolute time per output, None = not settled
    settling_time: tuple       # measured from the last set-point change
    final_estimation_error: tuple
    peak_estimation_error_after_steps: tuple

    @property
    def settled(self):
        return all(s is not None for s in self.settled_at)


def compute_metrics(trace, schedule, band=0.02):
    """Settling times per output and estimation-error summaries per node.

    The band is ``band`` times the largest reference jump of the schedule.
    """
    if not band > 0:
        raise ValueError("band must be > 0")
    band_abs = band * schedule.step_scale()
    changes = schedule.change_times
    last = changes[-1] if changes else 0.0
    tail = trace.t >= last - 1e-12
    t_tail = trace.t[tail]
    settled_at, settling = [], []
    for j in range(trace.y.shape[1]):
        outside = np.flatnonzero(np.abs(trace.y[tail, j] - trace.r[tail, j]) > band_abs)
        if t_tail.size == 0:
            at = None  # the run ended before the final set point was applied
        elif outside.size == 0:
            at = float(t_tail[0])
        elif outside[-1] == t_tail.size - 1:
            at = None
        else:
            at = float(t_tail[outside[-1] + 1])
        settled_at.append(at)
        settling.append(None if at is None else at - last)
    final = tuple(float(e) for e in trace.err_norm[-1])
    after = trace.t >= changes[0] - 1e-12 if changes else np.zeros(len(trace.t), dtype=bool)
    if np.any(after):
        peaks = tuple(float(p) for p in trace.err_norm[after].max(axis=0))
    else:
        peaks = tuple(None for _ in final)
    return Metrics(band_abs=band_abs, last_change=last, settled_at=tuple(settled_at),
                   settling_time=tuple(settling), final_estimation_error=final,
                   peak_estimation_error_after_steps=peaks)
