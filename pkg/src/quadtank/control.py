"""Decentralized PI control: loop n drives pump n from output n's error.

Controllers work in deviation variables: ``e = r - y`` with
``y = k_c (h - h0)`` in volts and the pump voltage is ``v0 + u``.
"""

import bisect
from dataclasses import dataclass

import numpy as np

from .errors import EmptySchedule, ValidationError
from .plant import Phase


@dataclass(frozen=True)
class PiGains:
    K: float   # proportional gain, V/V
    Ti: float  # integral time, s

    def __post_init__(self):
        if not (np.isfinite(self.K) and np.isfinite(self.Ti)):
            raise ValidationError("PiGains", "K and Ti must be finite")
        if self.Ti == 0:
            raise ValidationError("Ti", "integral time must be nonzero")


REFERENCE_GAINS = {
    Phase.MINUS: (PiGains(3.0, 30.0), PiGains(2.7, 40.0)),
    Phase.PLUS: (PiGains(1.5, 110.0), PiGains(-0.12, 220.0)),
}


def reference_gains(phase):
    return REFERENCE_GAINS[Phase.parse(phase)]


@dataclass(frozen=True)
class SetpointSchedule:
    """Piecewise-constant references ``(t_start, r1, r2)``; left-closed steps."""

    entries: tuple

    def __post_init__(self):
        entries = tuple((float(t), float(r1), float(r2)) for t, r1, r2 in self.entries)
        if entries:
            if entries[0][0] != 0.0:
                raise ValidationError("setpoints", "first entry must start at t = 0")
            starts = [e[0] for e in entries]
            if any(b <= a for a, b in zip(starts, starts[1:])):
                raise ValidationError("setpoints", "start times must be strictly increasing")
            if not np.all(np.isfinite(np.array(entries))):
                raise ValidationError("setpoints", "values must be finite")
        object.__setattr__(self, "entries", entries)

    @property
    def change_times(self):
        return [e[0] for e in self.entries[1:]]

    def step_scale(self):
        """Largest reference jump in the schedule (1.0 when nothing changes)."""
        jumps = [max(abs(b[1] - a[1]), abs(b[2] - a[2]))
                 for a, b in zip(self.entries, self.entries[1:])]
        jumps = [j for j in jumps if j > 0]
        return max(jumps) if jumps else 1.0


def default_schedule():
    # step times at 100, 200, 300 and 350 s; unit magnitudes
    return SetpointSchedule(((0.0, 0.0, 0.0), (100.0, 1.0, 0.0), (200.0, 1.0, 1.0),
                             (300.0, 0.0, 1.0), (350.0, 0.0, 0.0)))


def schedule_lookup(schedule, t):
    if not schedule.entries:
        raise EmptySchedule("set-point schedule has no entries")
    starts = [e[0] for e in schedule.entries]
    i = bisect.bisect_right(starts, t) - 1
    _, r1, r2 = schedule.entries[max(i, 0)]
    return r1, r2


def pi_output(gains, e, integ):
    return gains.K * (e + integ / gains.Ti)


def pi_rhs(e):
    """The integrator state accumulates the raw error."""
    return e


def closed_loop_matrix(model, gains):
    """Linear closed loop with r = 0, states (x1..x4, integral1, integral2)."""
    K = np.array([g.K for g in gains])
    Ti = np.array([g.Ti for g in gains])
    a, b, c = model.a_mat, model.b_mat, model.c_mat
    top = np.hstack([a - b @ np.diag(K) @ c, b @ np.diag(K / Ti)])
    bottom = np.hstack([-c, np.zeros((2, 2))])
    return np.vstack([top, bottom])
