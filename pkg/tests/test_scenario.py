import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quadtank.control import PiGains, SetpointSchedule, default_schedule, reference_gains
from quadtank.errors import ParseError, ValidationError
from quadtank.observer import ObserverConfig
from quadtank.plant import Phase, default_geometry, operating_point
from quadtank.scenario import emit_scenario, load_scenario, parse_scenario, read_sections
from quadtank.sim import REFERENCE_X0, SimConfig


def test_empty_file_is_the_reference_scenario():
    cfg = parse_scenario("")
    assert cfg == SimConfig.reference("minus")
    assert cfg.observer == ObserverConfig()
    assert cfg.x0 == REFERENCE_X0 and cfg.t_end == 500.0 and cfg.dt == 0.01
    assert cfg.schedule == default_schedule()


def test_phase_plus_loads_table_values():
    cfg = parse_scenario("[operating_point]\nphase = plus\n")
    assert cfg.op == operating_point("plus")
    assert cfg.pi_gains == reference_gains("plus")
    assert cfg.t_end == 5000.0


def test_phase_override_beats_file():
    cfg = parse_scenario("[operating_point]\nphase = plus\n", phase="minus", dt=0.05, t_end=10)
    assert cfg.phase is Phase.MINUS and cfg.dt == 0.05 and cfg.t_end == 10.0


def test_zero_integral_time_is_rejected():
    with pytest.raises(ValidationError) as info:
        parse_scenario("[control]\nK1 = 3, Ti1 = 0\n")
    assert "Ti1" in str(info.value)


def test_full_file():
    text = """
# a complete scenario
[plant]
k_c = 0.25               # V/cm
[operating_point]
phase = minus
gamma = 0.8, 0.7
[control]
K1 = 1.5
Ti1 = 20
[setpoints]
0 = 0, 0
50 = 0.5, -0.5
[observer]
k = 2, 2
L1 = place
L2 = place
gamma = 3
eps_bar = 0.5
edges = 1-2
reject_policy = error
poles = -0.5, -0.8
[sim]
dt = 0.05
t_end = 100
x0 = 1, 0, 0, 0
estimate_init = 1, 1, 1, 1; 0, 0, 0, 0
nonlinear = false
observer_feedforward = off
v_max = 6
band = 0.05
"""
    cfg = parse_scenario(text)
    assert cfg.geometry.k_c == 0.25
    assert cfg.op.gamma == (0.8, 0.7)
    assert cfg.pi_gains == (PiGains(1.5, 20.0), PiGains(2.7, 40.0))
    assert cfg.schedule == SetpointSchedule(((0, 0, 0), (50, 0.5, -0.5)))
    obs = cfg.observer
    assert obs.k_weights == (2.0, 2.0) and obs.l_d == (None, None)
    assert obs.gamma == 3.0 and obs.eps_bar == 0.5 and obs.poles == (-0.5, -0.8)
    assert obs.reject_policy == "error" and not obs.feedforward
    assert cfg.estimate_init == ((1, 1, 1, 1), (0, 0, 0, 0))
    assert not cfg.nonlinear_plant and cfg.v_max == 6.0 and cfg.band == 0.05


def test_single_node_defaults():
    cfg = parse_scenario("[observer]\nnode_outputs = 1, 2\n")
    obs = cfg.observer
    assert obs.node_outputs == ((1, 2),)
    assert obs.k_weights == (1.0,) and obs.l_d == (None,) and obs.edges == ()


@pytest.mark.parametrize("text, line", [
    ("[plant]\narea = 1, 2\n", None),                        # wrong count
    ("[bogus]\n", 1),
    ("[plant]\nradius = 3\n", 2),
    ("[sim]\ndt = 0.1\ndt = 0.2\n", 3),
    ("dt = 0.1\n", 1),
    ("[sim]\ndt = fast\n", 2),
    ("[sim]\nnonlinear = maybe\n", 2),
    ("[observer]\nedges = 1:2\n", 2),
    ("[sim\n", 1),
    ("[sim]\n[sim]\n", 2),
    ("[sim]\njust text\n", 2),
])
def test_bad_files(text, line):
    with pytest.raises((ParseError, ValidationError)) as info:
        parse_scenario(text)
    if line is not None:
        assert isinstance(info.value, ParseError)
        assert info.value.lineno == line
        assert str(info.value).startswith(f"line {line}:")


@pytest.mark.parametrize("text, field", [
    ("[observer]\nk = 0.5, 2\n", "observer.k"),
    ("[observer]\nL3 = 1, 2\n", "observer.L3"),
    ("[setpoints]\n5 = 0, 0\n", "setpoints"),
    ("[operating_point]\ngamma = 1.5, 0.5\n", "gamma"),
    ("[sim]\nt_end = 0.001\n", "t_end"),
])
def test_validation_errors_name_the_field(text, field):
    with pytest.raises(ValidationError) as info:
        parse_scenario(text)
    assert info.value.field == field


def test_comments_and_case():
    secs = read_sections("; header\n[SIM]\nDT = 0.5   # half a second\n\n# end\n")
    assert secs == {"sim": {"dt": ("0.5", 3)}}


def test_emitted_default_round_trips():
    for phase in ("minus", "plus"):
        cfg = SimConfig.reference(phase)
        assert parse_scenario(emit_scenario(cfg)) == cfg


def test_load_from_file(tmp_path):
    path = tmp_path / "s.ini"
    path.write_text("[sim]\nt_end = 20\n")
    assert load_scenario(path, dt=0.1).t_end == 20.0


finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)
positive = st.floats(0.01, 50, allow_nan=False)


@st.composite
def configs(draw):
    phase = draw(st.sampled_from(["minus", "plus"]))
    gains = tuple(PiGains(draw(finite), draw(positive)) for _ in range(2))
    times = sorted(set(draw(st.lists(st.floats(0.5, 400), max_size=4))))
    entries = [(0.0, draw(finite), draw(finite))] + [(t, draw(finite), draw(finite)) for t in times]
    obs = ObserverConfig(
        k_weights=(draw(st.floats(1, 20)), draw(st.floats(1, 20))),
        l_d=tuple(draw(st.one_of(st.none(), st.tuples(finite, finite))) for _ in range(2)),
        gamma=draw(st.floats(0, 20)),
        eps_bar=draw(st.floats(0.01, 1.4)),
        reject_policy=draw(st.sampled_from(["place", "error"])),
        poles=draw(st.one_of(st.none(), st.tuples(st.floats(-5, -0.1), st.floats(-5, -0.1)))),
        feedforward=draw(st.booleans()),
    )
    dt = draw(st.sampled_from([0.01, 0.02, 0.05, 0.1]))
    return SimConfig(
        geometry=default_geometry(), op=operating_point(phase), pi_gains=gains,
        schedule=SetpointSchedule(tuple(entries)), observer=obs, dt=dt,
        t_end=dt * draw(st.integers(1, 10000)),
        x0=tuple(draw(finite) for _ in range(4)),
        estimate_init=draw(st.one_of(st.none(), st.just(((1.0, 2.0, 3.0, 4.0), (0.5,) * 4)))),
        nonlinear_plant=draw(st.booleans()),
        v_max=draw(st.one_of(st.none(), positive)),
        band=draw(st.floats(0.001, 0.5)),
    )


@settings(max_examples=100, deadline=None)
@given(configs())
def test_round_trip_property(cfg):
    assert parse_scenario(emit_scenario(cfg)) == cfg
