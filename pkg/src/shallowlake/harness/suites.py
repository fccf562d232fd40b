"""Reproducible verification suites with per-case pass/fail and measured slack."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..control import ControlSignal
from ..dynamics import envelope_bounds, integrate_state, variation_identity_residual
from ..localization import (asymptotic_N_check, beta_residual, localize_above, localize_below, log_bound_eta,
                            log_bound_N, maximizing_bounds, solve_beta)
from ..objective import evaluate_B1, evaluate_objective
from . import generators
from .config import RunConfig
from .report import constants_block

ENVELOPE_TOL = 1e-6
IDENTITY_TOL = 1e-6
IDENTITY_STEP = 1e-3
#: improvement certificates may lose at most this many quadrature budgets
DELTA_TOL_FACTOR = 10.0
DOMINATION_TOL = 1e-6
MASS_RTOL = 1e-9
BETA_TOL = 1e-12
DECOMPOSITION_TOL = 1e-5
#: corridor controls reach x ~ 1e3, where the default step leaves ~1e-5 of Simpson error
DECOMPOSITION_STEP = 2.5e-3
ASYMPTOTIC_TOL = 1e-3
ASYMPTOTIC_RATIO_TOL = 0.1
#: bound for strict ``value < 0`` checks
STRICT = math.nextafter(0.0, -math.inf)

ENVELOPE_X0 = (0.0, 1.0, 5.0)
SURGERY_T = (1.0, 5.0, 10.0)
BETA_T_GRID = (0.0, 0.5, 1.0, 2.0, 5.0, 10.0, 50.0)
BETA_B0_GRID = (0.65, 1.0, 2.0)
BOUNDARY_T_MAX = (20.0, 40.0, 80.0)

DEFAULT_CASES = {"envelopes": 200, "identity": 50, "clamp": 100, "lift": 100, "decomposition": 20}


@dataclass
class Check:
    """``value <= bound`` with ``slack = bound - value``."""

    name: str
    value: float
    bound: float

    @property
    def slack(self) -> float:
        return self.bound - self.value

    @property
    def passed(self) -> bool:
        return bool(self.slack >= 0.0)

    def to_dict(self) -> dict:
        return {"value": self.value, "bound": self.bound, "slack": self.slack, "passed": self.passed}


@dataclass
class Case:
    id: str
    checks: list[Check] = field(default_factory=list)
    info: dict = field(default_factory=dict)

    def add(self, name: str, value: float, bound: float) -> None:
        self.checks.append(Check(name, float(value), float(bound)))

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {"id": self.id, "passed": self.passed, "checks": {c.name: c.to_dict() for c in self.checks},
                **({"info": self.info} if self.info else {})}


def _envelopes(cfg: RunConfig, rng, n):
    cases = []
    for i in range(n):
        params = cfg.params.with_x0(ENVELOPE_X0[i % len(ENVELOPE_X0)])
        u = generators.random_control(rng)
        tr = integrate_state(params, u, cfg.t_end, cfg.step)
        lower, upper = envelope_bounds(params, u, tr.times)
        case = Case(f"envelopes-{i}", info={"x0": params.x0, "cells": u.n_cells})
        case.add("above_lower", float(np.max(lower - tr.states)), ENVELOPE_TOL)
        case.add("below_upper", float(np.max(tr.states - upper)), ENVELOPE_TOL)
        # comparison monotonicity: a larger control never gives a smaller state
        bump = generators.random_control(rng, spike_prob=0.0)
        big = u.with_knots(bump.grid)
        knots = big.grid
        mids = 0.5 * (knots[:-1] + knots[1:])
        big = ControlSignal(knots, big.values + bump(mids), big.tail + bump.tail)
        tr_big = integrate_state(params, big, cfg.t_end, cfg.step, companions=[u])
        tr_u = integrate_state(params, u, cfg.t_end, cfg.step, companions=[big])
        case.add("monotone_in_control", float(np.max(tr_u.states - tr_big.states)), ENVELOPE_TOL)
        cases.append(case)
    return cases


def _identity(cfg: RunConfig, rng, n):
    cases = []
    for i in range(n):
        u1 = generators.random_control(rng, horizon=10.0)
        u2 = generators.random_control(rng, horizon=10.0)
        res = variation_identity_residual(cfg.params, u1, u2, 10.0, IDENTITY_STEP)
        case = Case(f"identity-{i}")
        case.add("residual", res, IDENTITY_TOL)
        cases.append(case)
    return cases


def _surgery_common(case: Case, rep, quad_tol: float) -> None:
    case.add("delta_lo_negated", -rep.delta.lo, DELTA_TOL_FACTOR * quad_tol)
    case.add("bracket_overlap_negated", -rep.certificate_slack, DELTA_TOL_FACTOR * quad_tol)
    case.add("hypothesis_negated", -rep.hypothesis_slack, 0.0)


def _clamp(cfg: RunConfig, rng, n):
    params = cfg.params
    bounds = maximizing_bounds(params, cfg.V_lb)
    cases = []
    for i in range(n):
        T = SURGERY_T[i % len(SURGERY_T)]
        u = generators.spiky_control(rng, params, bounds, T)
        new, rep = localize_above(params, bounds, u, T, cfg.step, cfg.quad_tol, T_trunc=cfg.truncation_T)
        case = Case(f"clamp-{i}", info={"T": T, "I_tilde": rep.I_tilde, "beta_T": rep.beta_T})
        case.add("clamped_mass_negated", -rep.I_tilde, 0.0)
        if rep.applied:
            _surgery_common(case, rep, cfg.quad_tol)
            case.add("state_domination", rep.domination_gap, DOMINATION_TOL)
            end = T + rep.beta_T
            expected = u.integral(0.0, end) - (1.0 - rep.beta_T) * rep.I_tilde
            case.add("mass_relation", abs(new.integral(0.0, end) - expected), MASS_RTOL * max(1.0, abs(expected)))
        cases.append(case)
    return cases


def _lift(cfg: RunConfig, rng, n):
    params = cfg.params
    bounds = maximizing_bounds(params, cfg.V_lb)
    cases = []
    for i in range(n):
        T = SURGERY_T[i % len(SURGERY_T)]
        u = generators.plateau_control(rng, params, bounds, T)
        _, rep = localize_below(params, bounds, u, T, cfg.step, cfg.quad_tol, T_trunc=cfg.truncation_T)
        case = Case(f"lift-{i}", info={"T": T, "I": rep.I, "log_eta": rep.log_eta})
        case.add("lifted", 0.0 if rep.applied else 1.0, 0.0)
        if rep.applied:
            _surgery_common(case, rep, cfg.quad_tol)
            case.add("state_gap", rep.domination_gap, rep.I + DOMINATION_TOL)
            case.add("lift_mass", rep.I, T * rep.eta)
        cases.append(case)
    return cases


def _bounds(cfg: RunConfig, rng, n):
    params = cfg.params
    bounds = maximizing_bounds(params, cfg.V_lb)
    b0, rho = params.dynamics.b0, params.rho
    cases = []
    for T in BETA_T_GRID:
        for b in BETA_B0_GRID:
            case = Case(f"beta-T{T:g}-b{b:g}")
            case.add("beta_residual", abs(beta_residual(solve_beta(T, b), T, b)), BETA_TOL)
            cases.append(case)
    for T in range(1, 51):
        lN, lN1 = log_bound_N(bounds, T, b0, rho), log_bound_N(bounds, T + 1, b0, rho)
        le, le1 = log_bound_eta(bounds, T), log_bound_eta(bounds, T + 1)
        case = Case(f"levels-T{T}")
        case.add("N_increasing", lN - lN1, STRICT)
        case.add("eta_decreasing", le1 - le, STRICT)
        case.add("eta_below_N", le - lN, STRICT)
        cases.append(case)
    return cases


def _decomposition(cfg: RunConfig, rng, n):
    params = cfg.params
    bounds = maximizing_bounds(params, cfg.V_lb)
    T_max = 10.0 / params.rho
    step = min(cfg.step, DECOMPOSITION_STEP)
    cases = []
    for i in range(n):
        u = generators.corridor_control(rng, params, bounds, cfg.T)
        est = evaluate_objective(params, u, T_max, step, cfg.quad_tol)
        dec = evaluate_B1(params, u, T_max, step)
        case = Case(f"decomposition-{i}")
        case.add("consistency", abs(est.mid - (dec.boundary + dec.B1)), DECOMPOSITION_TOL)
        mags = [abs(evaluate_B1(params, u, t, step).boundary) for t in BOUNDARY_T_MAX]
        case.info["boundary"] = mags
        case.add("boundary_decreasing", max(b - a for a, b in zip(mags, mags[1:])),
                 STRICT)
        cases.append(case)
    return cases


def _asymptotics(cfg: RunConfig, rng, n):
    params = cfg.params
    bounds = maximizing_bounds(params, cfg.V_lb)
    rho, b0 = params.rho, params.dynamics.b0
    grid = np.linspace(5.0 / rho, 20.0 / rho, 151)
    rows = asymptotic_N_check(bounds, rho, b0, grid)
    w = np.array([r[1] for r in rows])
    mono = Case("weighted_logN_decreasing")
    mono.add("max_increment", float(np.max(np.diff(w))), STRICT)
    at = asymptotic_N_check(bounds, rho, b0, [10.0 / rho])[0]
    small = Case("weighted_logN_at_10_over_rho")
    small.add("value", at[1], ASYMPTOTIC_TOL)
    T, val, ref = asymptotic_N_check(bounds, rho, b0, [300.0])[0]
    ratio = Case("ratio_at_T300", info={"ratio": val / ref})
    ratio.add("relative_gap", abs(val / ref - 1.0), ASYMPTOTIC_RATIO_TOL)
    return [mono, small, ratio]


SUITES = {
    "envelopes": _envelopes,
    "identity": _identity,
    "clamp": _clamp,
    "lift": _lift,
    "bounds": _bounds,
    "decomposition": _decomposition,
    "asymptotics": _asymptotics,
}


def run_suite(name: str, cfg: RunConfig, n_cases: int | None = None) -> dict:
    """Run one suite; the report's ``passed`` is false if any case fails."""
    if name not in SUITES:
        raise ValueError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
    n = n_cases or cfg.n_cases or DEFAULT_CASES.get(name, 0)
    rng = np.random.default_rng(cfg.seed)
    cases = SUITES[name](cfg, rng, n)
    failed = [c.id for c in cases if not c.passed]
    slacks = [ch.slack for c in cases for ch in c.checks]
    by_check = {}
    for c in cases:
        for ch in c.checks:
            by_check[ch.name] = min(by_check.get(ch.name, math.inf), ch.slack)
    return {
        "suite": name,
        "seed": cfg.seed,
        "n_cases": len(cases),
        "passed": not failed,
        "n_failed": len(failed),
        "failed": failed,
        "worst_slack": min(slacks) if slacks else None,
        "worst_slack_by_check": by_check,
        "cases": [c.to_dict() for c in cases],
        "constants": constants_block(cfg, cfg.T),
        "tolerances": {**cfg.tolerances(), "envelope": ENVELOPE_TOL, "identity": IDENTITY_TOL,
                       "identity_step": IDENTITY_STEP, "delta": DELTA_TOL_FACTOR * cfg.quad_tol,
                       "domination": DOMINATION_TOL, "beta": BETA_TOL, "decomposition": DECOMPOSITION_TOL, "decomposition_step": DECOMPOSITION_STEP,
                       "asymptotic": ASYMPTOTIC_TOL, "asymptotic_ratio": ASYMPTOTIC_RATIO_TOL},
    }
