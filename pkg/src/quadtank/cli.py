"""Command-line front end.

    quadtank analyze          [--scenario FILE] [--phase minus|plus]
    quadtank design-observer  [--scenario FILE] [--phase minus|plus]
    quadtank simulate         [--scenario FILE] [--phase ...] [--out trace.csv]
                              [--dt S] [--t-end S]

Exit codes: 0 success, 1 parse/validation/design failure (including I/O),
2 numeric failure such as a non-finite simulation state.
"""

import argparse
import logging
import sys

import numpy as np

from . import smallmat as sm
from .errors import DegenerateValve, InputError, NumericError, SingularDcGain
from .freq import analyze, zero_direction
from .observer import check_gain_condition, design_bank, error_dynamics_matrix, laplacian_lambda2
from .plant import equilibrium_residual, linearize
from .scenario import parse_scenario
from .sim import compute_metrics, run_scenario

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2


def _f(x, digits=4):
    return f"{x:.{digits}f}"


def _vec(values, digits=4):
    return ", ".join(_f(v, digits) for v in np.ravel(values))


def _mat(m, digits=4):
    m = np.atleast_2d(m)
    return "[" + "; ".join(_vec(row, digits) for row in m) + "]"


def report_analyze(cfg):
    res = analyze(cfg.geometry, cfg.op)
    g1, g2 = cfg.op.gamma
    tm = res["transfer"]
    lines = [
        f"phase: {cfg.op.phase.value}",
        f"valve_ratio: gamma1 = {g1:g}, gamma2 = {g2:g}, sum = {g1 + g2:g}",
        f"time_constants: {_vec(res['time_const'], 3)} s",
        f"time_constants_rounded: {', '.join(str(int(round(t))) for t in res['time_const'])} s",
        f"equilibrium_residual: {_vec(equilibrium_residual(cfg.geometry, cfg.op), 5)} cm/s",
        f"c_gain: c1 = {_f(tm.c_gain[0], 3)}, c2 = {_f(tm.c_gain[1], 3)}",
        f"dc_gain: {_mat(tm.dc, 3)}",
    ]
    za = res["zeros"]
    if isinstance(za, DegenerateValve):
        lines.append(f"zeros: undefined ({za})")
    else:
        a2, a1, a0 = za.zero_poly
        lines.append(f"eta = {_f(za.eta)}")
        lines.append(f"zero_poly: {a2:.4g} s^2 {'-' if a1 < 0 else '+'} {abs(a1):.4g} s "
                     f"{'-' if a0 < 0 else '+'} {abs(a0):.4g}")
        if za.complex_pair:
            zs = ", ".join(f"{z.real:.4f}{z.imag:+.4f}j" for z in za.zeros)
        else:
            zs = ", ".join(_f(z) for z in za.zeros)
        label = {"minimum": "minimum phase", "nonminimum": "non-minimum phase",
                 "boundary": "boundary (zero at origin)"}[za.classification.value]
        lines.append(f"zeros: {zs} -> {label}")
        if not za.complex_pair:
            for z in za.zeros:
                try:
                    psi = zero_direction(tm, z)
                except (InputError, NumericError):
                    continue
                lines.append(f"zero_direction({_f(z)}): psi = ({_vec(psi)})")
    lines.append(f"valve_rule: {res['valve_class'].value}")
    rga = res["rga"]
    if isinstance(rga, SingularDcGain):
        lines.append("lambda: undefined")
        lines.append("dc_gain_singular: yes (gamma1 + gamma2 = 1)")
    else:
        lines.append(f"lambda = {rga.lam:.3f}")
        lines.append(f"lambda_tilde = {rga.lam_tilde:.3f}")
        lines.append(f"rga: {_mat(rga.rga_mat, 3)}")
        lines.append("dc_gain_singular: no")
    ok, det = res["input_gain"]
    lines.append(f"input_gain_det = {det:.4f} ({'nonsingular' if ok else 'singular'})")
    return "\n".join(lines)


def _coords(perm, r):
    if perm is None:
        return "non-permutation basis"
    names = [f"x{i + 1}" for i in perm]
    return "(" + ", ".join(names[:r]) + " | " + ", ".join(names[r:]) + ")"


def report_design_observer(cfg):
    model = linearize(cfg.geometry, cfg.op)
    bank = design_bank(model, cfg.observer)
    lines = [f"phase: {cfg.op.phase.value}", f"nodes: {bank.n_nodes}"]
    for i, d in enumerate(bank.designs, start=1):
        dec = d.decomp
        if d.rejection is not None:
            verdict = (f"L_{i}d REJECTED (not Hurwitz), replaced by placement")
        elif d.gain_source == "given":
            verdict = f"L_{i}d accepted"
        else:
            verdict = f"L_{i}d placed"
        lines.append(f"node {i}: sigma = {dec.sigma}, {verdict}")
        lines.append(f"node {i}: basis = {_coords(dec.permutation(), dec.n_observed)}")
        if d.rejection is not None:
            rej = d.rejection
            lines.append(f"node {i}: counter-certificate trace = {rej.trace:.6g}, "
                         f"char_poly = ({_vec(rej.char_poly, 6)})")
        res = dec.residuals(model.a_mat)
        lines.append(f"node {i}: structure_residual = {max(res.values()):.3g}")
        if dec.n_observed:
            f = dec.a_d - d.l_d @ dec.h_d
            lines.append(f"node {i}: L_{i}d = {_mat(d.l_d)}")
            lines.append(f"node {i}: observed_poles_charpoly = ({_vec(sm.char_poly(f), 6)})")
            lines.append(f"node {i}: M_{i}d = {_mat(d.m_d)}, lyap_residual = {d.lyap_residual:.3g}")
        lines.append(f"node {i}: identity_residual = {d.identity_residual(model.a_mat):.3g}")
    if bank.n_nodes >= 2:
        lam2 = laplacian_lambda2(bank.graph)
        cond = check_gain_condition(bank.designs, bank.graph, cfg.observer.gamma,
                                    cfg.observer.eps_bar)
        lines += [
            f"lambda2 = {lam2:.6g}",
            "beta = " + ", ".join(f"{b:.6g}" for b in cond.beta),
            f"beta_bar = {cond.beta_bar:.6g}, beta_sum = {cond.beta_sum:.6g}",
            f"theta = {cond.theta:.6g} (eps_bar = {cond.eps_bar:g})",
            "gain_condition: " + ("satisfied" if cond.satisfied else "NOT satisfied")
            + " (" + ", ".join(f"{k} = {'yes' if v else 'no'}" for k, v in cond.clauses.items())
            + ")",
        ]
    else:
        lines.append("gain_condition: n/a (single node)")
    err = error_dynamics_matrix(bank, model)
    hurwitz = sm.is_hurwitz_matrix(err)
    size = err.shape[0]
    lines.append(f"error_dynamics: {size}x{size} {'Hurwitz' if hurwitz else 'NOT Hurwitz'}")
    return "\n".join(lines)


def report_simulate(cfg, out_path):
    trace = run_scenario(cfg)
    trace.to_csv(out_path)
    m = compute_metrics(trace, cfg.schedule, cfg.band)

    def when(x):
        return "not settled" if x is None else f"{x:.2f} s"

    lines = [
        f"phase: {cfg.op.phase.value}",
        f"plant: {'nonlinear' if cfg.nonlinear_plant else 'linear'}",
        f"csv: {out_path} ({len(trace.t)} rows, {len(trace.columns())} columns)",
        f"band = {m.band_abs:.4g} V",
        f"last_setpoint_change = {m.last_change:g} s",
        "settled_at: " + ", ".join(f"y{j + 1} = {when(s)}" for j, s in enumerate(m.settled_at)),
        "settling_time: " + ", ".join(f"y{j + 1} = {when(s)}"
                                      for j, s in enumerate(m.settling_time)),
        "final_estimation_error: " + ", ".join(
            f"node {i + 1} = {e:.6g} cm" for i, e in enumerate(m.final_estimation_error)),
        "peak_estimation_error_after_steps: " + ", ".join(
            f"node {i + 1} = {'n/a' if e is None else f'{e:.6g} cm'}"
            for i, e in enumerate(m.peak_estimation_error_after_steps)),
    ]
    lines += [f"note: {n}" for n in trace.notes]
    return "\n".join(lines)


def build_parser():
    parser = argparse.ArgumentParser(prog="quadtank", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("analyze", "design-observer", "simulate"):
        p = sub.add_parser(name)
        p.add_argument("--scenario", help="scenario file (default: reference P- scenario)")
        p.add_argument("--phase", choices=["minus", "plus"], help="override operating point")
        if name == "simulate":
            p.add_argument("--out", default="trace.csv", help="CSV output path")
            p.add_argument("--dt", type=float, help="step size, s")
            p.add_argument("--t-end", dest="t_end", type=float, help="horizon, s")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        text = ""
        if args.scenario:
            with open(args.scenario, encoding="utf-8") as fh:
                text = fh.read()
        overrides = dict(phase=args.phase)
        if args.command == "simulate":
            overrides.update(dt=args.dt, t_end=args.t_end)
        cfg = parse_scenario(text, **overrides)
        if args.command == "analyze":
            print(report_analyze(cfg))
        elif args.command == "design-observer":
            print(report_design_observer(cfg))
        else:
            print(report_simulate(cfg, args.out))
    except (InputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
