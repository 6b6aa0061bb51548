import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quadtank.errors import DegenerateValve, NotAZero, PoleEvaluation, SingularDcGain
from quadtank.freq import (PhaseClass, analyze, classify_by_valve, dc_gain, det_transfer, eta,
                           eval_transfer, input_gain_nonsingular, rga, rga_from_gain,
                           transfer_matrix, zero_analysis, zero_direction)
from quadtank.plant import OperatingPoint, default_geometry, linearize, operating_point

# frozen from a plain-math quadratic-formula evaluation with unrounded time constants
ZEROS = {
    "minus": (-0.017182125798393295, -0.058017499340776234),
    "plus": (0.012779802512504336, -0.05623437445480728),
}
ETA = {"minus": 0.28571428571428575, "plus": 2.573187414500684}


def _tm(phase_or_op):
    geom = default_geometry()
    op = phase_or_op if isinstance(phase_or_op, OperatingPoint) else operating_point(phase_or_op)
    return transfer_matrix(linearize(geom, op), op, geom), op


def _op_with_gamma(g1, g2):
    base = operating_point("minus")
    return OperatingPoint(base.phase, base.h0, base.v0, base.pump_gain, (g1, g2))


def test_minus_gains_against_reference():
    tm, _ = _tm("minus")
    g = dc_gain(tm)
    assert abs(g[0, 0] - 2.6) <= 0.15 and abs(g[1, 1] - 2.8) <= 0.15
    assert abs(g[0, 1] - 1.5) <= 0.15 and abs(g[1, 0] - 1.4) <= 0.15


def test_plus_gains_against_reference():
    tm, _ = _tm("plus")
    g = dc_gain(tm)
    assert abs(g[0, 0] - 1.5) <= 0.15 and abs(g[1, 1] - 1.6) <= 0.15
    assert round(tm.time_const[0]) == 63


@pytest.mark.parametrize("phase", ["minus", "plus"])
def test_dc_gain_matches_state_space(phase):
    geom = default_geometry()
    op = operating_point(phase)
    m = linearize(geom, op)
    direct = m.c_mat @ np.linalg.solve(-m.a_mat, m.b_mat)
    np.testing.assert_allclose(dc_gain(transfer_matrix(m, op, geom)), direct, atol=1e-6)


@pytest.mark.parametrize("phase", ["minus", "plus"])
def test_eval_transfer_matches_state_space(phase):
    geom = default_geometry()
    op = operating_point(phase)
    m = linearize(geom, op)
    tm = transfer_matrix(m, op, geom)
    for s in (0.01, 0.3j, -0.002 + 0.05j):
        direct = m.c_mat @ np.linalg.solve(s * np.eye(4) - m.a_mat, m.b_mat)
        np.testing.assert_allclose(eval_transfer(tm, s), direct, rtol=1e-10, atol=1e-12)


def test_eval_transfer_limits():
    tm, _ = _tm("minus")
    np.testing.assert_allclose(eval_transfer(tm, 0), tm.dc)
    assert np.max(np.abs(eval_transfer(tm, 1e9))) < 1e-8
    with pytest.raises(PoleEvaluation):
        eval_transfer(tm, -1.0 / tm.time_const[0])


@pytest.mark.parametrize("phase", ["minus", "plus"])
def test_zero_analysis_frozen(phase):
    tm, op = _tm(phase)
    za = zero_analysis(tm, op)
    assert za.eta == pytest.approx(ETA[phase], rel=1e-12)
    np.testing.assert_allclose(za.zeros, ZEROS[phase], rtol=1e-9)
    assert not za.complex_pair
    expected = PhaseClass.MINIMUM if phase == "minus" else PhaseClass.NONMINIMUM
    assert za.classification is expected


@pytest.mark.parametrize("phase", ["minus", "plus"])
def test_zeros_annihilate_determinant(phase):
    tm, op = _tm(phase)
    for z in zero_analysis(tm, op).zeros:
        g = eval_transfer(tm, z)
        ref = abs(g[0, 0] * g[1, 1]) + abs(g[0, 1] * g[1, 0])
        assert abs(det_transfer(tm, z)) <= 1e-8 * ref


def test_unit_valves_zeros_at_upper_poles():
    tm, op = _tm(_op_with_gamma(1.0, 1.0))
    za = zero_analysis(tm, op)
    assert za.eta == 0
    T3, T4 = tm.time_const[2:]
    np.testing.assert_allclose(sorted(za.zeros), sorted((-1 / T3, -1 / T4)), rtol=1e-12)


def test_degenerate_valve():
    with pytest.raises(DegenerateValve):
        eta((0.0, 0.5))


def test_boundary_classification():
    tm, op = _tm(_op_with_gamma(0.5, 0.5))
    za = zero_analysis(tm, op)
    assert za.classification is PhaseClass.BOUNDARY
    assert max(za.zeros) == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("gamma, expected", [
    ((0.70, 0.60), PhaseClass.MINIMUM),
    ((0.43, 0.34), PhaseClass.NONMINIMUM),
    ((0.5, 0.5), PhaseClass.BOUNDARY),
])
def test_classify_by_valve(gamma, expected):
    assert classify_by_valve(gamma) is expected


def test_valve_rule_agrees_with_zero_signs_on_grid():
    geom = default_geometry()
    base = operating_point("minus")
    model = linearize(geom, base)
    grid = np.linspace(0.05, 0.95, 18)
    checked = 0
    for g1 in grid:
        for g2 in grid:
            if abs(g1 + g2 - 1) < 1e-9:
                continue
            op = OperatingPoint(base.phase, base.h0, base.v0, base.pump_gain, (g1, g2))
            za = zero_analysis(transfer_matrix(model, op, geom), op)
            assert classify_by_valve(op.gamma) is za.classification
            checked += 1
    assert checked >= 18 * 18 - 18


def test_large_eta_roots_straddle_origin():
    # pick gamma1 = gamma2 = g with ((1 - g) / g)^2 = 1000
    g = 1.0 / (1.0 + np.sqrt(1000.0))
    tm, op = _tm(_op_with_gamma(g, g))
    za = zero_analysis(tm, op)
    assert za.eta == pytest.approx(1000.0, rel=1e-9)
    assert za.zeros[0] > 0 > za.zeros[1]


def test_zero_direction_plus_rhp_zero():
    tm, op = _tm("plus")
    z = zero_analysis(tm, op).zeros[0]
    assert z > 0
    psi = zero_direction(tm, z)
    assert np.linalg.norm(psi) == pytest.approx(1.0)
    assert np.linalg.norm(psi @ eval_transfer(tm, z)) <= 1e-8
    assert np.all(np.abs(psi) > 1e-3)
    assert psi[0] > 0


def test_zero_direction_rejects_non_zero():
    tm, _ = _tm(_op_with_gamma(1.0, 1.0))
    for s in (0.0, 0.1, -0.5 + 0.1j):
        with pytest.raises(NotAZero):
            zero_direction(tm, s)


@pytest.mark.parametrize("phase, lam", [("minus", 1.4), ("plus", -0.6357)])
def test_rga_values(phase, lam):
    res = rga(operating_point(phase))
    assert res.lam == pytest.approx(lam, abs=1e-3)
    assert res.lam_tilde == pytest.approx(1 - res.lam, abs=1e-12)
    np.testing.assert_allclose(res.rga_mat.sum(axis=0), 1.0, atol=1e-12)
    np.testing.assert_allclose(res.rga_mat.sum(axis=1), 1.0, atol=1e-12)


def test_rga_matches_bristol_definition():
    for phase in ("minus", "plus"):
        tm, op = _tm(phase)
        np.testing.assert_allclose(rga_from_gain(tm.dc), rga(op).rga_mat, atol=1e-9)


def test_rga_unit_valves_and_boundary():
    assert rga(_op_with_gamma(1.0, 1.0)).lam == 1.0
    with pytest.raises(SingularDcGain):
        rga(_op_with_gamma(0.5, 0.5))


@settings(max_examples=200, deadline=None)
@given(st.floats(0.01, 1.0), st.floats(0.01, 1.0))
def test_rga_rows_sum_to_one(g1, g2):
    if abs(g1 + g2 - 1) < 1e-6:
        return
    res = rga(_op_with_gamma(g1, g2))
    np.testing.assert_allclose(res.rga_mat.sum(axis=1), 1.0, atol=1e-12)
    assert res.lam_tilde == pytest.approx(1 - res.lam, abs=1e-9 * max(1, abs(res.lam)))


@pytest.mark.parametrize("phase, det", [("minus", 3.33 * 3.35 * 0.30), ("plus", 3.14 * 3.29 * -0.23)])
def test_input_gain_determinant(phase, det):
    ok, value = input_gain_nonsingular(operating_point(phase))
    assert ok
    assert value == pytest.approx(det, rel=1e-9)


def test_input_gain_boundary():
    ok, value = input_gain_nonsingular(_op_with_gamma(0.5, 0.5))
    assert not ok and value == pytest.approx(0.0, abs=1e-12)


def test_analyze_bundle_handles_boundary():
    out = analyze(default_geometry(), _op_with_gamma(0.5, 0.5))
    assert isinstance(out["rga"], SingularDcGain)
    assert out["valve_class"] is PhaseClass.BOUNDARY
    out = analyze(default_geometry(), _op_with_gamma(0.0, 0.5))
    assert isinstance(out["zeros"], DegenerateValve)
