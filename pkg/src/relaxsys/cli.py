"""Command-line interface.

Reports are JSON on stdout (or ``--out``); a one-line summary goes to
stderr.  Exit codes: 0 success, 1 domain failure, 2 usage or I/O error.
"""

import argparse
import json
import sys

import numpy as np

from . import analysis, netlab, realization, relaxation, synthesis
from .config import ToleranceConfig
from .errors import NotMinimal, ParseError, RelaxsysError, ValidationError

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return float(obj) if np.isfinite(obj) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _emit(args, payload, text=None):
    out = text if text is not None else json.dumps(_clean(payload), indent=2) + "\n"
    if getattr(args, "out", None):
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(out)
    else:
        sys.stdout.write(out)


def _say(msg):
    print(msg, file=sys.stderr)


def _read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise UsageError(f"{path}: {exc.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: line {exc.lineno}: {exc.msg}") from None


def _load_model(path):
    data = _read_json(path)
    if not isinstance(data, dict):
        raise UsageError(f"{path}: model file must hold a JSON object")
    try:
        return realization.model_from_dict(data)
    except (ValueError, TypeError, ValidationError) as exc:
        raise UsageError(f"{path}: {exc}") from None


def _tol(args):
    return ToleranceConfig(tau_sym=args.tau_sym, tau_psd=args.tau_psd,
                           tau_rank=args.tau_rank, tau_singular=args.tau_singular)


def _certify(ss, Q_file, tol):
    """Certificate with the recovered storage, or the file's when not minimal."""
    try:
        return relaxation.check_relaxation(ss, tol)
    except NotMinimal:
        if Q_file is None:
            raise
        return relaxation.check_relaxation(ss, tol, Q=Q_file)


def cmd_check(args):
    ss, Q = _load_model(args.model)
    cert = _certify(ss, Q, _tol(args))
    _emit(args, cert.to_dict())
    _say(f"check: {cert.to_dict()['verdict']}")
    return EXIT_OK if cert.ok else EXIT_FAIL


def _synth(ss, cert, alpha, problem, tol, force=False):
    fn = synthesis.synth_p1 if synthesis._problem(problem) == "P1" else synthesis.synth_p2
    return fn(ss, alpha, cert, tol, force=force)


def cmd_synth(args):
    ss, Q = _load_model(args.model)
    tol = _tol(args)
    cert = _certify(ss, Q, tol)
    ctrl = _synth(ss, cert, args.alpha, args.problem, tol, force=args.force)
    payload = ctrl.to_dict()
    payload["certified"] = cert.ok
    _emit(args, payload)
    _say(f"synth: problem {ctrl.problem}, alpha={args.alpha:g}, K={np.array2string(ctrl.K, precision=6)}"
         + ("" if cert.ok else f" (forced; {cert.reason})"))
    return EXIT_OK


def cmd_verify(args):
    ss, Q = _load_model(args.model)
    tol = _tol(args)
    cert = _certify(ss, Q, tol)
    ctrl = _synth(ss, cert, args.alpha, args.problem, tol)
    identity = analysis.worst_case_identity(ss, ctrl.K, args.alpha, cert.Q)
    report = {"certificate": cert.to_dict()["verdict"], "controller": ctrl.to_dict(),
              "identity": identity, "optimality": None}
    ok = identity["pass"]
    if args.trials > 0:
        opt = synthesis.verify_static_optimality(ss, args.alpha, ctrl, n_trials=args.trials,
                                                 radius=args.radius, seed=args.seed, Q=cert.Q, tol=tol)
        report["optimality"] = opt
        ok = ok and opt["pass"]
    report["pass"] = bool(ok)
    _emit(args, report)
    _say(f"verify: {'pass' if ok else 'FAIL'} (identity gap {identity['gap']:.2e}"
         + (f", optimality fraction {report['optimality']['fraction']:.3f})" if report["optimality"] else ")"))
    return EXIT_OK if ok else EXIT_FAIL


def cmd_simulate(args):
    ss, _ = _load_model(args.model)
    data = _read_json(args.controller)
    try:
        ctrl = synthesis.StaticController.from_dict(data)
    except (KeyError, ValueError, TypeError) as exc:
        raise UsageError(f"{args.controller}: {exc}") from None
    try:
        w = analysis.parse_disturbance(args.disturbance, ss.n)
    except ValueError as exc:
        raise UsageError(f"--disturbance: {exc}") from None
    cl = analysis.close_loop(ss, ctrl.K)
    if not analysis.is_stable(cl):
        raise RelaxsysError("closed loop is not stable")
    horizon = args.horizon if args.horizon is not None else analysis.default_horizon(cl)
    trace = analysis.simulate(cl, w, horizon, args.dt)
    alpha = ctrl.alpha
    report = {"alpha": alpha, "problem": ctrl.problem, "horizon": trace.horizon, "dt": trace.dt,
              "disturbance": args.disturbance, "costs": analysis.costs(trace, alpha).to_dict()}
    if isinstance(w, analysis.Step) and ss.n:
        report["step_average"] = analysis.step_limit_costs(trace, alpha)
        report["step_cost_limit"] = {p: analysis.step_cost_limit(ss, ctrl.K, alpha, w.v, p)
                                     for p in synthesis.PROBLEMS}
    if args.csv:
        with open(args.csv, "w", encoding="utf-8", newline="") as fh:
            trace.to_csv(fh)
    _emit(args, report)
    c = report["costs"]
    _say(f"simulate: {trace.t.size - 1} steps of {trace.dt:.3g}, cost P1={c['cost_p1']:.6g}, P2={c['cost_p2']:.6g}")
    return EXIT_OK


def _read_netlist(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return netlab.parse_netlist(fh.read())
    except OSError as exc:
        raise UsageError(f"{path}: {exc.strerror}") from None
    except ValidationError as exc:
        raise UsageError(f"{path}: {exc}") from None


def cmd_net(args):
    net = _read_netlist(args.netlist)
    tol = _tol(args)
    if args.action == "build":
        model = netlab.build_model(net, tol)
        cert = relaxation.check_relaxation(model.ss, tol, Q=model.Q)
        payload = realization.model_to_dict(model.ss, model.Q)
        payload["states"] = list(model.edge_index)
        _emit(args, payload)
        _say(f"net build: {model.ss.n} inductor states, certificate {cert.to_dict()['verdict']}")
        return EXIT_OK if cert.ok else EXIT_FAIL
    if args.alpha is None:
        raise UsageError("net dual requires --alpha")
    dual = netlab.dual_controller(net, args.alpha, tol)
    _emit(args, None, text=netlab.format_netlist(dual))
    _say(f"net dual: {len(dual.edges)} resistors, port resistance {netlab.port_resistance(dual, tol):.12g}")
    return EXIT_OK


def _matrix(path, name):
    arr = np.array(_read_json(path), dtype=float)
    if not np.all(np.isfinite(arr)):
        raise UsageError(f"{path}: {name} has non-finite entries")
    return arr


def cmd_lsq(args):
    A = _matrix(args.matrix, "A")
    b = _matrix(args.rhs, "b")
    try:
        circuit = netlab.LsqCircuit(A, args.alpha, b)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    try:
        res = netlab.lsq_solve(circuit, args.horizon, args.dt, _tol(args))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.csv:
        with open(args.csv, "w", encoding="utf-8", newline="") as fh:
            res["trace"].to_csv(fh)
    payload = {k: v for k, v in res.items() if k != "trace"}
    payload["alpha"] = args.alpha
    _emit(args, payload)
    _say(f"lsq: residual {res['residual']:.6g}, distance to pinv solution {res['distance_to_pinv']:.2e}")
    return EXIT_OK


def _positive(text):
    try:
        x = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a number") from None
    if not (np.isfinite(x) and x > 0):
        raise argparse.ArgumentTypeError(f"{text!r} must be positive")
    return x


def _nonneg_int(text):
    try:
        k = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer") from None
    if k < 0:
        raise argparse.ArgumentTypeError(f"{text!r} must be non-negative")
    return k


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="write the report here instead of stdout")
    d = ToleranceConfig()
    common.add_argument("--tau-sym", type=_positive, default=d.tau_sym)
    common.add_argument("--tau-psd", type=_positive, default=d.tau_psd)
    common.add_argument("--tau-rank", type=_positive, default=d.tau_rank)
    common.add_argument("--tau-singular", type=_positive, default=d.tau_singular)

    parser = argparse.ArgumentParser(prog="relaxsys", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", parents=[common], help="certify relaxation structure")
    p.add_argument("model")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("synth", parents=[common], help="closed-form static controller")
    p.add_argument("model")
    p.add_argument("--alpha", type=_positive, required=True)
    p.add_argument("--problem", choices=["1", "2"], default="1")
    p.add_argument("--force", action="store_true", help="emit the formula even without a certificate")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("verify", parents=[common], help="identity and perturbation checks")
    p.add_argument("model")
    p.add_argument("--alpha", type=_positive, required=True)
    p.add_argument("--problem", choices=["1", "2"], default="1")
    p.add_argument("--trials", type=_nonneg_int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--radius", type=_positive, default=1.0)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("simulate", parents=[common], help="closed-loop RK4 simulation and costs")
    p.add_argument("model")
    p.add_argument("controller")
    p.add_argument("--disturbance", default="step:1", help="step:v1,..|box:T:v1,..|zero")
    p.add_argument("--horizon", type=_positive)
    p.add_argument("--dt", type=_positive)
    p.add_argument("--csv", help="write the trace as CSV")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("net", parents=[common], help="RL network model or dual controller")
    p.add_argument("action", choices=["build", "dual"])
    p.add_argument("netlist")
    p.add_argument("--alpha", type=_positive)
    p.set_defaults(func=cmd_net)

    p = sub.add_parser("lsq", parents=[common], help="least squares by circuit simulation")
    p.add_argument("--matrix", required=True, help="JSON matrix A")
    p.add_argument("--rhs", required=True, help="JSON vector b")
    p.add_argument("--alpha", type=_positive, default=1.0)
    p.add_argument("--horizon", type=_positive)
    p.add_argument("--dt", type=_positive)
    p.add_argument("--csv")
    p.set_defaults(func=cmd_lsq)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        _say(f"error: {exc}")
        return EXIT_USAGE
    except ParseError as exc:
        _say(f"error: {exc}")
        return EXIT_USAGE
    except OSError as exc:
        _say(f"error: {exc}")
        return EXIT_USAGE
    except RelaxsysError as exc:
        _say(f"{type(exc).__name__}: {exc}")
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
