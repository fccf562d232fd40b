"""Explicit localization constants and the clamp/lift control surgeries.

Given a horizon ``T``, ``localize_above`` clamps a control at ``N(x0, T)`` on
``[0, T]`` and adds the clipped mass as a constant increment on
``(T, T + beta_T]``; ``localize_below`` lifts it to at least
``eta(x0, T) = exp(-L T)`` on ``[0, T]``. Neither move lowers the objective
for controls satisfying the maximizing-sequence estimates, and every
application returns a ``LocalizationReport`` with the numbers needed to
check that claim.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .control import ControlSignal
from .dynamics import ModelParams, integrate_state
from .objective import (DEFAULT_QUAD_TOL, DEFAULT_STEP, DeltaBracket, ObjectiveEstimate, _envelope_coeffs,
                        default_truncation, lower_bound_unit_control, objective_delta, value_upper_bound)

ROOT_TOL = 1e-12
#: knots closer than this are the same knot (matches the control merge distance)
KNOT_TOL = 1e-12
L_MARGIN = 1e-6
DOMINATION_TOL = 1e-6
#: how far past T + beta_T the trajectory comparison is checked
DOMINATION_HORIZON = 20.0


@dataclass(frozen=True)
class MaximizingBounds:
    """Constants bounding members of a maximizing sequence at ``x0``."""

    K1: float
    K2: float
    K: float
    L: float
    V_lb: float

    def to_dict(self) -> dict:
        return {"K1": self.K1, "K2": self.K2, "K": self.K, "L": self.L, "V_lb": self.V_lb}


def log_beta(T: float, b0: float) -> float:
    """``log(beta_T)`` where ``beta_T`` is the unique root of ``log(beta) + b0 beta = -T b0``.

    Bisection runs on ``y = log(beta)`` over ``[-b0 (T + 1), 0]``, where the
    map ``y + b0 e^y + T b0`` is increasing with slope in ``[1, 1 + b0]``,
    so the result stays accurate after ``beta`` itself underflows.
    """
    if T < 0 or not b0 > 0:
        raise ValueError("need T >= 0 and b0 > 0")
    lo, hi = -b0 * (T + 1.0), 0.0
    y = 0.5 * (lo + hi)
    for _ in range(400):
        y = 0.5 * (lo + hi)
        g = y + b0 * math.exp(y) + T * b0
        if abs(g) <= 0.1 * ROOT_TOL or hi - lo <= 4e-16 * max(1.0, abs(y)):
            break
        if g > 0:
            hi = y
        else:
            lo = y
    return y


def solve_beta(T: float, b0: float) -> float:
    """Root ``beta_T`` in ``(0, 1)`` (underflows to 0 once ``T b0`` exceeds about 745)."""
    return math.exp(log_beta(T, b0))


def beta_residual(beta: float, T: float, b0: float) -> float:
    return math.log(beta) + b0 * beta + T * b0


def log_bound_N(bounds: MaximizingBounds, T: float, b0: float, rho: float) -> float:
    y = log_beta(T, b0)
    return math.log(bounds.K) - 2.0 * y + 2.0 * rho * (T + math.exp(y))


def bound_N(bounds: MaximizingBounds, T: float, b0: float, rho: float) -> float:
    """Upper clamp level ``N(x0, T) = K beta_T^{-2} exp(2 rho (T + beta_T))``."""
    return math.exp(log_bound_N(bounds, T, b0, rho))


def log_bound_eta(bounds: MaximizingBounds, T: float) -> float:
    return -bounds.L * T


def bound_eta(bounds: MaximizingBounds, T: float) -> float:
    """Lower lift level ``eta(x0, T) = exp(-L T)`` (underflows to 0 for large ``L T``)."""
    return math.exp(-bounds.L * T)


def k1_objective(params: ModelParams, z):
    """``phi(z) = (1/rho) log z - c z^2 / (rho (rho + b0)^2)``."""
    rho, c, b0 = params.rho, params.c, params.dynamics.b0
    return np.log(z) / rho - c * np.square(z) / (rho * (rho + b0) ** 2)


def compute_K1(params: ModelParams, V_lb: float) -> float:
    """``K1 = K~ / rho`` with ``K~`` the largest root of ``phi(z) = V_lb - 1``.

    ``phi`` peaks at ``z* = (rho + b0)/sqrt(2c)`` and decreases afterwards, so
    the root is bracketed right of ``z*`` and found by bisection. Any
    ``V_lb <= V(x0)`` gives a valid, possibly larger, constant.
    """
    rho, c, b0 = params.rho, params.c, params.dynamics.b0
    target = V_lb - 1.0
    z_star = (rho + b0) / math.sqrt(2.0 * c)
    peak = float(k1_objective(params, z_star))
    if target >= peak:
        raise ValueError(f"V_lb - 1 = {target:g} is not below max phi = {peak:g}; V_lb exceeds the value bound")
    lo, hi = z_star, 2.0 * z_star
    while k1_objective(params, hi) >= target:
        lo, hi = hi, 2.0 * hi
    while hi - lo > ROOT_TOL * hi:
        mid = 0.5 * (lo + hi)
        if k1_objective(params, mid) >= target:
            lo = mid
        else:
            hi = mid
    return hi / rho


def compute_K2(params: ModelParams, K1: float) -> float:
    """Bound on ``∫ e^{-rho t} x dt``: ``x0/(rho+b) + M/(rho(rho+b)) + K1/(rho+b)``."""
    rho, b, M = params.rho, params.dynamics.b_up, params.dynamics.M
    return params.x0 / (rho + b) + M / (rho * (rho + b)) + K1 / (rho + b)


def l_condition(params: ModelParams, K2: float, L: float, T: float = 1.0) -> float:
    """``e^{(L - rho) T} - 2 c rho^{-1} T e^{-L T} - 2 c K2`` (nonnegative for a valid ``L``)."""
    rho, c = params.rho, params.c
    return math.exp((L - rho) * T) - 2.0 * c / rho * T * math.exp(-L * T) - 2.0 * c * K2


def compute_L(params: ModelParams, K2: float) -> float:
    """Smallest ``L`` with ``l_condition(L) >= 0`` and ``L > rho + 2c/rho``.

    The root of ``l_condition`` is approached from above, so when it is the
    binding constraint the returned value satisfies the condition.
    """
    rho, c = params.rho, params.c

    def g(L):
        return l_condition(params, K2, L)

    lo, hi = rho, rho + 1.0
    while g(lo) >= 0:
        lo -= max(1.0, abs(lo))
    while g(hi) < 0:
        hi += max(1.0, abs(hi))
    while hi - lo > ROOT_TOL:
        mid = 0.5 * (lo + hi)
        if g(mid) >= 0:
            hi = mid
        else:
            lo = mid
    return max(rho + 2.0 * c / rho + L_MARGIN, hi)


def maximizing_bounds(params: ModelParams, V_lb: float | None = None) -> MaximizingBounds:
    """All constants at ``x0``; ``V_lb`` defaults to the unit-control lower bound."""
    if V_lb is None:
        V_lb = lower_bound_unit_control(params)
    if V_lb > value_upper_bound(params):
        raise ValueError("V_lb exceeds the value upper bound")
    K1 = compute_K1(params, V_lb)
    K2 = compute_K2(params, K1)
    return MaximizingBounds(K1=K1, K2=K2, K=max(K1, 1.0), L=compute_L(params, K2), V_lb=V_lb)


@dataclass(frozen=True)
class LocalizationReport:
    kind: str
    T: float
    beta_T: float
    N: float
    eta: float
    log_N: float
    log_eta: float
    I_tilde: float = 0.0
    I: float = 0.0
    applied: bool = False
    objective_before: ObjectiveEstimate | None = None
    objective_after: ObjectiveEstimate | None = None
    delta: DeltaBracket | None = None
    trajectory_dominated: bool = True
    domination_gap: float = 0.0
    hypothesis_slack: float = math.nan
    extra: dict = field(default_factory=dict)

    @property
    def certificate_slack(self) -> float:
        """``after.hi - before.lo``; nonnegative up to tolerance for a sound surgery."""
        if self.objective_before is None:
            return math.inf
        return self.objective_after.hi - self.objective_before.lo

    def to_dict(self) -> dict:
        d = {
            "kind": self.kind, "T": self.T, "beta_T": self.beta_T, "N": self.N, "eta": self.eta,
            "log_N": self.log_N, "log_eta": self.log_eta, "I_tilde": self.I_tilde, "I": self.I,
            "applied": self.applied, "trajectory_dominated": self.trajectory_dominated,
            "domination_gap": self.domination_gap, "hypothesis_slack": self.hypothesis_slack,
        }
        if self.objective_before is not None:
            d["objective_before"] = self.objective_before.to_dict()
            d["objective_after"] = self.objective_after.to_dict()
            d["delta"] = {"lo": self.delta.lo, "hi": self.delta.hi}
            d["certificate_slack"] = self.certificate_slack
        d.update(self.extra)
        return d


def _levels(params, bounds, T):
    b0 = params.dynamics.b0
    beta = solve_beta(T, b0)
    log_N = log_bound_N(bounds, T, b0, params.rho)
    log_eta = log_bound_eta(bounds, T)
    return beta, log_N, log_eta


def _certify(params, new, old, T_check, step, quad_tol, T_trunc):
    delta, est_new, est_old = objective_delta(params, new, old, T_trunc, step, quad_tol)
    tr_new = integrate_state(params, new, T_check, step, companions=[old])
    tr_old = integrate_state(params, old, T_check, step, companions=[new])
    gap = float(np.max(tr_new.states - tr_old.states))
    return delta, est_new, est_old, gap


def localize_above(params: ModelParams, bounds: MaximizingBounds, u: ControlSignal, T: float,
                   step: float = DEFAULT_STEP, quad_tol: float = DEFAULT_QUAD_TOL,
                   certify: bool = True, T_trunc: float | None = None):
    """Clamp ``u`` at ``N`` on ``[0, T]`` and add the clipped mass on ``(T, T + beta_T]``.

    ``u_tilde = min(u, N)`` on ``[0, T]``, ``u + I_tilde`` on
    ``(T, T + beta_T]`` and ``u`` afterwards, with
    ``I_tilde = ∫_0^T (u - min(u, N))``. Returns ``(u_tilde, report)``;
    ``u`` itself comes back when nothing exceeds ``N``.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    beta, log_N, log_eta = _levels(params, bounds, T)
    N = math.exp(log_N)
    base = dict(kind="above", T=T, beta_T=beta, N=N, eta=math.exp(log_eta), log_N=log_N, log_eta=log_eta)
    split = u.with_knots([T, T + beta])
    a, b = split.grid[:-1], split.grid[1:]
    vals = split.values.copy()
    head = b <= T + KNOT_TOL
    excess = np.where(head, np.maximum(vals - N, 0.0), 0.0)
    I_tilde = float(np.sum(excess * (b - a)))
    # hypothesis of the clamp guarantee: ∫_0^t u <= K e^{rho t} at t = T + beta
    slack = bounds.K * math.exp(params.rho * (T + beta)) - u.integral(0.0, T + beta)
    if I_tilde == 0.0:
        return u, LocalizationReport(**base, hypothesis_slack=slack)
    vals = np.where(head, np.minimum(vals, N), vals)
    bump = (a >= T - KNOT_TOL) & (b <= T + beta + KNOT_TOL)
    vals[bump] += I_tilde
    new = ControlSignal(split.grid, vals, split.tail)
    if not certify:
        return new, LocalizationReport(**base, I_tilde=I_tilde, applied=True, hypothesis_slack=slack)
    delta, est_new, est_old, gap = _certify(params, new, u, T + beta + DOMINATION_HORIZON, step, quad_tol, T_trunc)
    return new, LocalizationReport(**base, I_tilde=I_tilde, applied=True, objective_before=est_old,
                                   objective_after=est_new, delta=delta,
                                   trajectory_dominated=gap <= DOMINATION_TOL, domination_gap=gap,
                                   hypothesis_slack=slack)


def discounted_state_integral(params: ModelParams, u: ControlSignal, step: float = DEFAULT_STEP,
                              T: float | None = None) -> float:
    """Estimate of ``∫_0^∞ e^{-rho t} x dt``: trapezoid on ``[0, T]``, upper-envelope tail."""
    rho = params.rho
    T = default_truncation(params, u) if T is None else T
    tr = integrate_state(params, u, T, step)
    w = np.exp(-rho * tr.times) * tr.states
    body = float(np.sum(0.5 * (w[1:] + w[:-1]) * np.diff(tr.times)))
    _, _, C, D = _envelope_coeffs(params, u.tail, tr.x_end)
    return body + math.exp(-rho * T) * (C / rho + D / (rho + params.dynamics.b_up))


def localize_below(params: ModelParams, bounds: MaximizingBounds, u_tilde: ControlSignal, T: float,
                   step: float = DEFAULT_STEP, quad_tol: float = DEFAULT_QUAD_TOL,
                   certify: bool = True, T_trunc: float | None = None):
    """Lift ``u_tilde`` to at least ``eta = exp(-L T)`` on ``[0, T]``.

    Requires ``T >= 1``. Returns ``(u_T, report)`` with
    ``I = ∫_0^T (max(u_tilde, eta) - u_tilde) <= T eta``.
    """
    if T < 1:
        raise ValueError("lifting from below needs T >= 1")
    beta, log_N, log_eta = _levels(params, bounds, T)
    eta = math.exp(log_eta)
    base = dict(kind="below", T=T, beta_T=beta, N=math.exp(log_N), eta=eta, log_N=log_N, log_eta=log_eta)
    split = u_tilde.with_knots([T])
    a, b = split.grid[:-1], split.grid[1:]
    head = b <= T + KNOT_TOL
    vals = split.values
    lift = head & (vals < eta)
    I = float(np.sum(np.where(lift, eta - vals, 0.0) * (b - a)))
    if not np.any(lift):
        return u_tilde, LocalizationReport(**base)
    new = ControlSignal(split.grid, np.where(lift, eta, vals), split.tail)
    if not certify:
        return new, LocalizationReport(**base, I=I, applied=True)
    # hypothesis of the lift guarantee: ∫ e^{-rho t} x <= K2 along u_tilde
    slack = bounds.K2 - discounted_state_integral(params, u_tilde, step)
    delta, est_new, est_old, gap = _certify(params, new, u_tilde, T + DOMINATION_HORIZON, step, quad_tol, T_trunc)
    return new, LocalizationReport(**base, I=I, applied=True, objective_before=est_old, objective_after=est_new,
                                   delta=delta, trajectory_dominated=gap <= I + DOMINATION_TOL,
                                   domination_gap=gap, hypothesis_slack=slack,
                                   extra={"lift_bound": T * eta})


def improve(params: ModelParams, bounds: MaximizingBounds, u: ControlSignal, T: float, **kw):
    """Clamp then lift: ``u_T = max(min(u, N), eta)`` on ``[0, T]``. Returns ``(u_T, [above, below])``."""
    if T < 1:
        raise ValueError("improve needs T >= 1")
    u_tilde, rep_above = localize_above(params, bounds, u, T, **kw)
    u_T, rep_below = localize_below(params, bounds, u_tilde, T, **kw)
    return u_T, [rep_above, rep_below]


def corridor_violation(u: ControlSignal, T: float, log_eta: float, log_N: float) -> float:
    """Largest log-distance outside ``[eta, N]`` over cells starting before ``T`` (0 if inside)."""
    knots, rates = u.cells(max(T, u.end))
    inside = knots[:-1] < T - KNOT_TOL
    if not np.any(inside):
        return 0.0
    logs = np.log(rates[inside])
    return float(max(0.0, np.max(logs - log_N), np.max(log_eta - logs)))


def asymptotic_N_check(bounds: MaximizingBounds, rho: float, b0: float, T_grid) -> list[tuple[float, float, float]]:
    """Rows ``(T, T e^{-rho T} log N, 2 T^2 e^{-rho T} b0)``; the middle column tends to 0."""
    rows = []
    for T in T_grid:
        T = float(T)
        w = T * math.exp(-rho * T)
        rows.append((T, w * log_bound_N(bounds, T, b0, rho), 2.0 * T * w * b0))
    return rows
