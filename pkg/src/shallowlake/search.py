"""Heuristic maximizing sequences: projected ascent inside the ``[eta, N]`` corridor."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .control import ControlSignal
from .dynamics import ModelParams
from .localization import (KNOT_TOL, LocalizationReport, MaximizingBounds, improve, log_bound_eta,
                           log_bound_N)
from .objective import DEFAULT_QUAD_TOL, DEFAULT_STEP, ObjectiveEstimate, evaluate_objective

TAIL_POLICIES = ("last", "fixed", "free")


@dataclass(frozen=True)
class SearchConfig:
    """Ascent settings.

    ``tail_policy``: ``"last"`` ties the tail to the last cell, ``"fixed"``
    keeps ``tail_value``, ``"free"`` optimizes the tail as its own variable.
    """

    horizon_T: float = 10.0
    cells: int = 10
    tail_policy: str = "last"
    tail_value: float = 1.0
    max_iters: int = 100
    step_init: float = 1.0
    step_shrink: float = 0.5
    step_grow: float = 2.0
    min_step: float = 1e-12
    grad_eps: float = 1e-5
    seed: int = 0
    restarts: int = 0
    truncation_T: float | None = None
    ode_step: float = DEFAULT_STEP
    quad_tol: float = DEFAULT_QUAD_TOL

    def __post_init__(self):
        if self.cells < 1:
            raise ValueError("cells must be >= 1")
        if self.horizon_T < 1:
            raise ValueError("horizon_T must be >= 1")
        if self.tail_policy not in TAIL_POLICIES:
            raise ValueError(f"tail_policy must be one of {TAIL_POLICIES}")
        if not (0 < self.step_shrink < 1 and self.step_grow >= 1):
            raise ValueError("need 0 < step_shrink < 1 <= step_grow")
        for name in ("step_init", "min_step", "grad_eps", "ode_step", "quad_tol", "tail_value"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class SearchResult:
    best_control: ControlSignal
    best_objective: ObjectiveEstimate
    iterate_log: list = field(default_factory=list)
    corridor: tuple = (0.0, math.inf)
    log_corridor: tuple = (-math.inf, math.inf)
    corridor_T: float = 0.0
    converged: bool = False
    reason: str = ""
    evaluations: int = 0
    surgery: list[LocalizationReport] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "best_control": self.best_control.to_dict(),
            "best_objective": self.best_objective.to_dict(),
            "iterate_log": self.iterate_log,
            "corridor": {"eta": self.corridor[0], "N": self.corridor[1], "log_eta": self.log_corridor[0],
                         "log_N": self.log_corridor[1], "T": self.corridor_T},
            "converged": self.converged,
            "reason": self.reason,
            "evaluations": self.evaluations,
            "surgery": [r.to_dict() for r in self.surgery],
        }


class _Problem:
    """Log-space parameterization of one control grid."""

    def __init__(self, params, cfg: SearchConfig, initial: ControlSignal):
        self.params = params
        self.cfg = cfg
        self.grid = initial.grid
        self.m = initial.n_cells
        self.tail_fixed = initial.tail
        self.tail_mode = cfg.tail_policy
        if self.tail_mode == "last" and (self.m == 0 or initial.values[-1] != initial.tail):
            # a start whose tail differs from its last cell (e.g. after surgery) keeps its tail
            self.tail_mode = "fixed"
        self.free_tail = self.tail_mode == "free"
        self.evaluations = 0

    def control(self, w) -> ControlSignal:
        vals = np.exp(w[:self.m])
        if self.free_tail:
            tail = math.exp(w[self.m])
        elif self.tail_mode == "last":
            tail = vals[-1]
        else:
            tail = self.tail_fixed
        return ControlSignal(self.grid, vals, tail)

    def evaluate(self, w) -> ObjectiveEstimate:
        self.evaluations += 1
        return evaluate_objective(self.params, self.control(w), self.cfg.truncation_T,
                                  self.cfg.ode_step, self.cfg.quad_tol)

    def gradient(self, w) -> np.ndarray:
        eps = self.cfg.grad_eps
        g = np.empty_like(w)
        for i in range(w.size):
            wp = w.copy()
            wm = w.copy()
            wp[i] += eps
            wm[i] -= eps
            g[i] = (self.evaluate(wp).mid - self.evaluate(wm).mid) / (2.0 * eps)
        return g


def _bounds(problem: _Problem, w0, T, log_eta, log_N):
    lower = np.full(w0.size, log_eta)
    upper = np.full(w0.size, log_N)
    # only cells starting before T are confined to the corridor from above
    outside = np.ones(w0.size, dtype=bool)
    outside[:problem.m] = problem.grid[:-1] >= T - KNOT_TOL
    upper[outside] = np.maximum(log_N, w0[outside])
    return lower, upper


def _run(problem: _Problem, w, lower, upper, cfg: SearchConfig):
    w = np.clip(w, lower, upper)
    est = problem.evaluate(w)
    log = [{"iter": 0, "lo": est.lo, "hi": est.hi, "step": 0.0}]
    alpha = cfg.step_init
    reason = "max_iters"
    converged = False
    for it in range(1, cfg.max_iters + 1):
        g = problem.gradient(w)
        accepted = False
        while alpha >= cfg.min_step:
            trial = np.clip(w + alpha * g, lower, upper)
            if np.max(np.abs(trial - w)) < 1e-14:
                break
            trial_est = problem.evaluate(trial)
            if trial_est.lo >= est.lo:
                w, est = trial, trial_est
                accepted = True
                break
            alpha *= cfg.step_shrink
        if not accepted:
            reason = "stationary" if alpha >= cfg.min_step else "step_underflow"
            converged = True
            break
        log.append({"iter": it, "lo": est.lo, "hi": est.hi, "step": alpha})
        alpha *= cfg.step_grow
    return w, est, log, converged, reason


def ascend(params: ModelParams, bounds: MaximizingBounds, cfg: SearchConfig,
           initial: ControlSignal | None = None, T_corridor: float | None = None) -> SearchResult:
    """Projected ascent on log cell values, each cell kept inside ``[eta(T), N(T)]``.

    Gradients are central differences of the bracket midpoint; a step is
    accepted only when the bracket's lower end does not decrease, otherwise
    the step length shrinks until it underflows ``cfg.min_step``. With
    ``initial`` the search runs on that control's grid, otherwise on
    ``cfg.cells`` equal cells over ``[0, cfg.horizon_T]`` starting from ``u = 1``.
    """
    T = cfg.horizon_T if T_corridor is None else T_corridor
    log_eta = log_bound_eta(bounds, T)
    log_N = log_bound_N(bounds, T, params.dynamics.b0, params.rho)
    if initial is None:
        initial = ControlSignal.uniform(cfg.horizon_T, np.ones(cfg.cells),
                                        cfg.tail_value if cfg.tail_policy == "fixed" else None)
    problem = _Problem(params, cfg, initial)
    w0 = np.log(initial.values)
    if problem.free_tail:
        w0 = np.append(w0, math.log(initial.tail))
    lower, upper = _bounds(problem, w0, T, log_eta, log_N)

    starts = [w0]
    rng = np.random.default_rng(cfg.seed)
    for _ in range(cfg.restarts):
        lo_box = np.maximum(lower, -3.0)
        hi_box = np.minimum(upper, 3.0)
        starts.append(rng.uniform(lo_box, np.maximum(lo_box, hi_box)))

    best = None
    for w_start in starts:
        w, est, log, converged, reason = _run(problem, w_start, lower, upper, cfg)
        if best is None or est.lo > best[1].lo:
            best = (w, est, log, converged, reason)
    w, est, log, converged, reason = best
    return SearchResult(best_control=problem.control(w), best_objective=est, iterate_log=log,
                        corridor=(math.exp(log_eta), math.exp(log_N)), log_corridor=(log_eta, log_N),
                        corridor_T=T, converged=converged, reason=reason, evaluations=problem.evaluations)


def maximizing_sequence(params: ModelParams, bounds: MaximizingBounds, schedule,
                        initial: ControlSignal | None = None) -> list[SearchResult]:
    """For each ``(T, cfg)``: localize the previous best at ``T``, then ascend from it."""
    Ts = [float(T) for T, _ in schedule]
    if any(T < 1 for T in Ts) or any(b < a for a, b in zip(Ts, Ts[1:])):
        raise ValueError("schedule horizons must be >= 1 and non-decreasing")
    results = []
    current = initial
    for T, cfg in schedule:
        if current is None:
            current = ControlSignal.uniform(cfg.horizon_T, np.ones(cfg.cells),
                                            cfg.tail_value if cfg.tail_policy == "fixed" else None)
        localized, reports = improve(params, bounds, current, T, step=cfg.ode_step, quad_tol=cfg.quad_tol,
                                     T_trunc=cfg.truncation_T)
        result = ascend(params, bounds, cfg, initial=localized, T_corridor=T)
        result.surgery = reports
        results.append(result)
        current = result.best_control
    return results
