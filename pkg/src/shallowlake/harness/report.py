"""Deterministic serialization of trajectories and reports."""

from __future__ import annotations

import io
import json
import math
from pathlib import Path

import numpy as np

from .. import __version__
from ..dynamics import Trajectory
from ..localization import log_beta, log_bound_eta, log_bound_N, maximizing_bounds, solve_beta
from ..objective import value_upper_bound


def _clean(obj):
    """JSON-safe copy: non-finite floats become strings, numpy scalars become Python ones."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def constants_block(cfg, T: float) -> dict:
    """Every constant of the localization machinery at horizon ``T``."""
    params = cfg.params
    b0, rho = params.dynamics.b0, params.rho
    bounds = maximizing_bounds(params, cfg.V_lb)
    log_N = log_bound_N(bounds, T, b0, rho)
    log_eta = log_bound_eta(bounds, T)
    return {
        **bounds.to_dict(),
        "T": T,
        "beta_T": solve_beta(T, b0),
        "log_beta_T": log_beta(T, b0),
        "N": math.exp(log_N) if log_N < 700 else math.inf,
        "eta": math.exp(log_eta),
        "log_N": log_N,
        "log_eta": log_eta,
        "value_upper_bound": value_upper_bound(params),
    }


def envelope(kind: str, cfg, body: dict, T: float | None = None) -> dict:
    """Common report frame: model, seed, tolerances and the constant set."""
    return {
        "kind": kind,
        "version": __version__,
        "model": cfg.model,
        "seed": cfg.seed,
        "tolerances": cfg.tolerances(),
        "constants": constants_block(cfg, cfg.T if T is None else T),
        **body,
    }


def trajectory_csv(tr: Trajectory) -> str:
    buf = io.StringIO()
    buf.write("t,x,u\n")
    for t, x, u in zip(tr.times.tolist(), tr.states.tolist(), tr.controls().tolist()):
        buf.write(f"{t!r},{x!r},{u!r}\n")
    return buf.getvalue()


def write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(text)
