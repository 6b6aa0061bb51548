"""Scenario files: sectioned ``key = value`` text.

Example (every section and key is optional; omitted values fall back to
the reference scenario for the chosen phase)::

    [plant]
    area = 28, 32, 28, 32          # cm^2
    outlet_area = 0.071, 0.057, 0.071, 0.057   # cm^2
    k_c = 0.5                      # V/cm
    g = 981                        # cm/s^2

    [operating_point]
    phase = minus                  # minus | plus
    h0 = 12.4, 12.7, 1.8, 1.4      # cm
    v0 = 3, 3                      # V
    pump_gain = 3.33, 3.35         # cm^3/(V s)
    gamma = 0.7, 0.6

    [control]
    K1 = 3                         # V/V
    Ti1 = 30                       # s
    K2 = 2.7
    Ti2 = 40

    [setpoints]                    # t_start (s) = r1, r2 (V)
    0 = 0, 0
    100 = 1, 0

    [observer]
    k = 3, 4.5                     # weights k_i >= 1
    L1 = 3, 1                      # row-major L_id, or "place"
    L2 = place
    gamma = 6                      # coupling gain
    eps_bar = 1.0
    edges = 1-2                    # undirected, 1-based
    node_outputs = 1; 2            # outputs per node, ';' between nodes
    reject_policy = place          # place | error
    poles = -1, -2                 # or "default"

    [sim]
    dt = 0.01                      # s
    t_end = 500                    # s
    x0 = 8, 5, -2, 1               # cm, deviation from h0
    estimate_init = zeros          # or "0,0,0,0; 0,0,0,0"
    nonlinear = true
    observer_feedforward = true
    v_max = none                   # V, pump clamp
    band = 0.02                    # settling band, fraction of step size

Comments start with ``#`` or ``;`` at the beginning of a line, or `` #``
after a value. Several pairs may share a line (``K1 = 3, Ti1 = 30``). Keys
are case-insensitive. Unknown sections or keys, and
repeated keys, are errors.
"""

import math
import re
from dataclasses import replace

from .control import PiGains, SetpointSchedule, default_schedule, reference_gains
from .errors import ParseError, ValidationError
from .observer import ObserverConfig
from .plant import OperatingPoint, Phase, TankGeometry, default_geometry, operating_point
from .sim import REFERENCE_T_END, REFERENCE_X0, SimConfig

KEYS = {
    "plant": {"area", "outlet_area", "k_c", "g"},
    "operating_point": {"phase", "h0", "v0", "pump_gain", "gamma"},
    "control": {"k1", "ti1", "k2", "ti2"},
    "setpoints": None,  # keys are start times
    "observer": {"k", "gamma", "eps_bar", "edges", "node_outputs", "reject_policy", "poles"},
    "sim": {"dt", "t_end", "x0", "estimate_init", "nonlinear", "observer_feedforward",
            "v_max", "band"},
}

# "K1 = 3, Ti1 = 30": a comma followed by a name and '=' starts a new pair
_PAIR_SPLIT = re.compile(r",\s*(?=[A-Za-z_]\w*\s*=)")

DEFAULT_OUTPUTS = ((1,), (2,))
REFERENCE_L = ((3.0, 1.0), (-1.0, 3.0))


def read_sections(text):
    """``{section: {key: (value, lineno)}}`` from raw text."""
    sections = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split(" #", 1)[0].split("\t#", 1)[0].strip()
        if not line or line[0] in "#;":
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ParseError(f"malformed section header {line!r}", lineno)
            name = line[1:-1].strip().lower()
            if name not in KEYS:
                raise ParseError(f"unknown section [{name}]", lineno)
            if name in sections:
                raise ParseError(f"section [{name}] appears twice", lineno)
            current = sections[name] = {}
            continue
        if current is None:
            raise ParseError("key outside of any section", lineno)
        for pair in _PAIR_SPLIT.split(line):
            if "=" not in pair:
                raise ParseError(f"expected 'key = value', got {pair!r}", lineno)
            key, value = (part.strip() for part in pair.split("=", 1))
            key = key.lower()
            allowed = KEYS[name]
            if allowed is not None and key not in allowed and not (
                    name == "observer" and key[:1] == "l" and key[1:].isdigit()):
                raise ParseError(f"unknown key {key!r} in [{name}]", lineno)
            if key in current:
                raise ParseError(f"key {key!r} repeated in [{name}]", lineno)
            current[key] = (value, lineno)
    return sections


def _float(text, field, lineno):
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"{field}: {text!r} is not a number", lineno) from None
    if not math.isfinite(value):
        raise ValidationError(field, "must be finite")
    return value


def _floats(text, field, lineno, n=None):
    values = tuple(_float(t.strip(), field, lineno) for t in text.split(",") if t.strip())
    if n is not None and len(values) != n:
        raise ValidationError(field, f"expected {n} values, got {len(values)}")
    return values


def _bool(text, field, lineno):
    low = text.strip().lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ParseError(f"{field}: expected true/false, got {text!r}", lineno)


def _is_none(text, *words):
    return text.strip().lower() in ("none",) + words


def parse_scenario(text, phase=None, dt=None, t_end=None):
    """Build a validated ``SimConfig``; keyword arguments override the file."""
    sec = read_sections(text)
    get = lambda s, k: sec.get(s, {}).get(k)  # noqa: E731

    op_sec = sec.get("operating_point", {})
    if phase is None and "phase" in op_sec:
        phase = op_sec["phase"][0]
    phase = Phase.parse(phase or Phase.MINUS)

    geom = default_geometry()
    plant_kw = {}
    for key in ("area", "outlet_area"):
        if get("plant", key):
            value, ln = get("plant", key)
            plant_kw[key] = _floats(value, f"plant.{key}", ln, 4)
    for key in ("k_c", "g"):
        if get("plant", key):
            value, ln = get("plant", key)
            plant_kw[key] = _float(value, f"plant.{key}", ln)
    if plant_kw:
        geom = TankGeometry(**{**geom.__dict__, **plant_kw})

    op = operating_point(phase)
    op_kw = {}
    for key, n in (("h0", 4), ("v0", 2), ("pump_gain", 2), ("gamma", 2)):
        if key in op_sec:
            value, ln = op_sec[key]
            op_kw[key] = _floats(value, f"operating_point.{key}", ln, n)
    if op_kw:
        op = OperatingPoint(**{**op.__dict__, **op_kw})

    gains = list(reference_gains(phase))
    for n in (1, 2):
        k, ti = gains[n - 1].K, gains[n - 1].Ti
        if get("control", f"k{n}"):
            value, ln = get("control", f"k{n}")
            k = _float(value, f"control.K{n}", ln)
        if get("control", f"ti{n}"):
            value, ln = get("control", f"ti{n}")
            ti = _float(value, f"control.Ti{n}", ln)
        if ti == 0:
            raise ValidationError(f"control.Ti{n}", "integral time must be nonzero")
        gains[n - 1] = PiGains(k, ti)

    if "setpoints" in sec:
        rows = []
        for key, (value, ln) in sec["setpoints"].items():
            r1, r2 = _floats(value, f"setpoints.{key}", ln, 2)
            rows.append((_float(key, "setpoints time", ln), r1, r2))
        schedule = SetpointSchedule(tuple(rows))
    else:
        schedule = default_schedule()

    obs = _parse_observer(sec.get("observer", {}))

    sim_sec = sec.get("sim", {})
    kw = dict(t_end=REFERENCE_T_END[phase], x0=REFERENCE_X0)
    for key in ("dt", "t_end", "band"):
        if key in sim_sec:
            kw[key] = _float(sim_sec[key][0], f"sim.{key}", sim_sec[key][1])
    if "x0" in sim_sec:
        kw["x0"] = _floats(sim_sec["x0"][0], "sim.x0", sim_sec["x0"][1], 4)
    if "estimate_init" in sim_sec:
        value, ln = sim_sec["estimate_init"]
        if not _is_none(value, "zeros"):
            kw["estimate_init"] = tuple(_floats(part, "sim.estimate_init", ln, 4)
                                        for part in value.split(";"))
    if "nonlinear" in sim_sec:
        value, ln = sim_sec["nonlinear"]
        kw["nonlinear_plant"] = _bool(value, "sim.nonlinear", ln)
    if "observer_feedforward" in sim_sec:
        value, ln = sim_sec["observer_feedforward"]
        obs = replace(obs, feedforward=_bool(value, "sim.observer_feedforward", ln))
    if "v_max" in sim_sec:
        value, ln = sim_sec["v_max"]
        kw["v_max"] = None if _is_none(value, "off") else _float(value, "sim.v_max", ln)
    if dt is not None:
        kw["dt"] = float(dt)
    if t_end is not None:
        kw["t_end"] = float(t_end)

    return SimConfig(geometry=geom, op=op, pi_gains=tuple(gains), schedule=schedule,
                     observer=obs, **kw)


def _parse_observer(obs_sec):
    kw = {}
    if "node_outputs" in obs_sec:
        value, ln = obs_sec["node_outputs"]
        nodes = []
        for part in value.split(";"):
            idx = _floats(part, "observer.node_outputs", ln)
            if not idx or any(i != int(i) for i in idx):
                raise ValidationError("observer.node_outputs", "need integer output indices")
            nodes.append(tuple(int(i) for i in idx))
        kw["node_outputs"] = tuple(nodes)
    outputs = kw.get("node_outputs", DEFAULT_OUTPUTS)
    n = len(outputs)

    if "k" in obs_sec:
        value, ln = obs_sec["k"]
        kw["k_weights"] = _floats(value, "observer.k", ln, n)
    elif n != 2:
        kw["k_weights"] = (1.0,) * n
    l_d = list(REFERENCE_L if outputs == DEFAULT_OUTPUTS else (None,) * n)
    for key, (value, ln) in obs_sec.items():
        if key[:1] == "l" and key[1:].isdigit():
            i = int(key[1:])
            if not 1 <= i <= n:
                raise ValidationError(f"observer.L{i}", f"node index must be 1..{n}")
            l_d[i - 1] = None if _is_none(value, "place") else _floats(value, f"observer.L{i}", ln)
    kw["l_d"] = tuple(l_d)
    for key in ("gamma", "eps_bar"):
        if key in obs_sec:
            kw[key] = _float(obs_sec[key][0], f"observer.{key}", obs_sec[key][1])
    if "edges" in obs_sec:
        value, ln = obs_sec["edges"]
        edges = []
        for part in value.split(","):
            part = part.strip()
            if not part:
                continue
            try:
                i, j = (int(x) for x in part.split("-"))
            except ValueError:
                raise ParseError(f"observer.edges: bad pair {part!r} (use i-j)", ln) from None
            edges.append((i, j))
        kw["edges"] = tuple(edges)
    elif n != 2:
        kw["edges"] = tuple((i, i + 1) for i in range(1, n))
    if "reject_policy" in obs_sec:
        kw["reject_policy"] = obs_sec["reject_policy"][0].strip().lower()
    if "poles" in obs_sec:
        value, ln = obs_sec["poles"]
        kw["poles"] = None if _is_none(value, "default") else _floats(value, "observer.poles", ln)
    try:
        return ObserverConfig(**kw)
    except ValidationError as exc:
        raise ValidationError(f"observer.{exc.field}", exc.constraint) from None


def _fmt(values):
    return ", ".join(repr(float(v)) for v in values)


def emit_scenario(cfg):
    """Render ``cfg`` as scenario text with every value explicit."""
    g, op, obs = cfg.geometry, cfg.op, cfg.observer
    lines = [
        "[plant]",
        f"area = {_fmt(g.area)}",
        f"outlet_area = {_fmt(g.outlet_area)}",
        f"k_c = {g.k_c!r}",
        f"g = {g.g!r}",
        "",
        "[operating_point]",
        f"phase = {op.phase.value}",
        f"h0 = {_fmt(op.h0)}",
        f"v0 = {_fmt(op.v0)}",
        f"pump_gain = {_fmt(op.pump_gain)}",
        f"gamma = {_fmt(op.gamma)}",
        "",
        "[control]",
    ]
    for n, gain in enumerate(cfg.pi_gains, start=1):
        lines += [f"K{n} = {float(gain.K)!r}", f"Ti{n} = {float(gain.Ti)!r}"]
    lines += ["", "[setpoints]"]
    lines += [f"{t!r} = {r1!r}, {r2!r}" for t, r1, r2 in cfg.schedule.entries]
    lines += [
        "",
        "[observer]",
        f"node_outputs = {'; '.join(', '.join(str(o) for o in outs) for outs in obs.node_outputs)}",
        f"k = {_fmt(obs.k_weights)}",
    ]
    for i, l_d in enumerate(obs.l_d, start=1):
        lines.append(f"L{i} = {'place' if l_d is None else _fmt(l_d)}")
    lines += [
        f"gamma = {float(obs.gamma)!r}",
        f"eps_bar = {float(obs.eps_bar)!r}",
        f"edges = {', '.join(f'{i}-{j}' for i, j in obs.edges)}",
        f"reject_policy = {obs.reject_policy}",
        f"poles = {'default' if obs.poles is None else _fmt(obs.poles)}",
        "",
        "[sim]",
        f"dt = {float(cfg.dt)!r}",
        f"t_end = {float(cfg.t_end)!r}",
        f"x0 = {_fmt(cfg.x0)}",
        "estimate_init = " + ("zeros" if cfg.estimate_init is None
                              else "; ".join(_fmt(row) for row in cfg.estimate_init)),
        f"nonlinear = {'true' if cfg.nonlinear_plant else 'false'}",
        f"observer_feedforward = {'true' if obs.feedforward else 'false'}",
        f"v_max = {'none' if cfg.v_max is None else repr(float(cfg.v_max))}",
        f"band = {float(cfg.band)!r}",
        "",
    ]
    return "\n".join(lines)


def load_scenario(path, **overrides):
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read(), **overrides)
