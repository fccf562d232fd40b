"""Command-line front end.

Exit codes: 0 ok, 1 invalid input (config, schema, arguments), 2 numeric
failure (integrator error or a failed verification case), 3 internal error.
Every flag may also come from ``SHALLOWLAKE_<FLAG>`` in the environment;
command-line values win.
"""

from __future__ import annotations

import argparse
import os
import sys
import traceback
from pathlib import Path

from .. import __version__
from ..control import ControlSignal
from ..dynamics import IntegrationError, integrate_state
from ..localization import improve, maximizing_bounds
from ..objective import evaluate_objective, lower_bound_unit_control, value_upper_bound
from ..search import ascend, maximizing_sequence
from . import report
from .config import ENV_PREFIX, ConfigError, load_config, with_overrides
from .suites import SUITES, run_suite

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC, EXIT_INTERNAL = 0, 1, 2, 3
COMMANDS = ("simulate", "evaluate", "bound", "localize", "optimize", "verify")


def _env(name: str):
    return os.environ.get(ENV_PREFIX + name) or None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="shallowlake", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", default=_env("CONFIG"), help="JSON run configuration (default: reference lake)")
    parser.add_argument("--seed", type=int, default=_env("SEED"), help="override the config seed")
    parser.add_argument("--out", default=_env("OUT"), help="output directory (default: stdout)")
    parser.add_argument("--tol", type=float, default=_env("TOL"), help="override the quadrature tolerance")
    parser.add_argument("--suite", default=_env("SUITE") or "all", choices=("all", *SUITES),
                        help="verification suite (verify only)")
    parser.add_argument("--cases", type=int, default=_env("CASES"), help="number of random cases (verify only)")
    return parser


def _control(cfg) -> ControlSignal:
    return cfg.control if cfg.control is not None else ControlSignal.constant(1.0)


def _emit(out: Path | None, name: str, text: str, stream) -> None:
    if out is None:
        stream.write(text)
    else:
        report.write_text(out / name, text)
        stream.write(f"wrote {out / name}\n")


def cmd_simulate(cfg, args, out, stream) -> int:
    u = _control(cfg)
    tr = integrate_state(cfg.params, u, cfg.t_end, cfg.step)
    meta = report.envelope("simulate", cfg, {"t_end": cfg.t_end, "x_end": tr.x_end, "x_min": tr.x_min,
                                             "samples": int(tr.times.size), "step_error_estimate": tr.step_stats,
                                             "control": u.to_dict()})
    _emit(out, "trajectory.csv", report.trajectory_csv(tr), stream)
    if out is not None:
        _emit(out, "trajectory.meta.json", report.dumps(meta), stream)
    return EXIT_OK


def cmd_evaluate(cfg, args, out, stream) -> int:
    u = _control(cfg)
    est = evaluate_objective(cfg.params, u, cfg.truncation_T, cfg.step, cfg.quad_tol)
    body = {"objective": est.to_dict(), "control": u.to_dict()}
    _emit(out, "evaluate.json", report.dumps(report.envelope("evaluate", cfg, body)), stream)
    return EXIT_OK


def cmd_bound(cfg, args, out, stream) -> int:
    body = {"value_upper_bound": value_upper_bound(cfg.params),
            "unit_control_lower_bound": lower_bound_unit_control(cfg.params)}
    _emit(out, "bound.json", report.dumps(report.envelope("bound", cfg, body)), stream)
    return EXIT_OK


def cmd_localize(cfg, args, out, stream) -> int:
    u = _control(cfg)
    bounds = maximizing_bounds(cfg.params, cfg.V_lb)
    u_T, reps = improve(cfg.params, bounds, u, cfg.T, step=cfg.step, quad_tol=cfg.quad_tol,
                        T_trunc=cfg.truncation_T)
    body = {"I_tilde": reps[0].I_tilde, "I": reps[1].I, "surgery": [r.to_dict() for r in reps],
            "control": u.to_dict(), "best_control": u_T.to_dict()}
    _emit(out, "localize.json", report.dumps(report.envelope("localize", cfg, body)), stream)
    return EXIT_OK


def cmd_optimize(cfg, args, out, stream) -> int:
    bounds = maximizing_bounds(cfg.params, cfg.V_lb)
    if cfg.schedule:
        sched = [(T, cfg.search) for T in cfg.schedule]
        results = maximizing_sequence(cfg.params, bounds, sched, initial=cfg.control)
        T = cfg.schedule[-1]
        body = {"heuristic": True, "schedule": list(cfg.schedule), "steps": [r.to_dict() for r in results],
                "best_control": results[-1].best_control.to_dict(),
                "best_objective": results[-1].best_objective.to_dict()}
    else:
        res = ascend(cfg.params, bounds, cfg.search, initial=cfg.control, T_corridor=cfg.T)
        T = cfg.T
        body = {"heuristic": True, **res.to_dict()}
    _emit(out, "optimize.json", report.dumps(report.envelope("optimize", cfg, body, T)), stream)
    return EXIT_OK


def cmd_verify(cfg, args, out, stream) -> int:
    names = list(SUITES) if args.suite == "all" else [args.suite]
    ok = True
    for name in names:
        rep = run_suite(name, cfg, args.cases)
        rep["version"] = __version__
        rep["model"] = cfg.model
        ok &= rep["passed"]
        _emit(out, f"verify_{name}.json", report.dumps(rep), stream)
        stream.write(f"{name}: {'PASS' if rep['passed'] else 'FAIL'} "
                     f"({rep['n_cases'] - rep['n_failed']}/{rep['n_cases']} cases, "
                     f"worst slack {rep['worst_slack']:.3e})\n")
    return EXIT_OK if ok else EXIT_NUMERIC


HANDLERS = {
    "simulate": cmd_simulate,
    "evaluate": cmd_evaluate,
    "bound": cmd_bound,
    "localize": cmd_localize,
    "optimize": cmd_optimize,
    "verify": cmd_verify,
}


def main(argv=None, stream=None) -> int:
    stream = sys.stdout if stream is None else stream
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    try:
        seed = None if args.seed is None else int(args.seed)
        tol = None if args.tol is None else float(args.tol)
        if args.cases is not None and int(args.cases) < 1:
            raise ConfigError("--cases must be >= 1")
        args.cases = None if args.cases is None else int(args.cases)
        cfg = with_overrides(load_config(args.config), seed=seed, quad_tol=tol)
        out = None if args.out is None else Path(args.out)
        return HANDLERS[args.command](cfg, args, out, stream)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (IntegrationError, ArithmeticError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except Exception:  # noqa: BLE001 - last-resort exit code
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
