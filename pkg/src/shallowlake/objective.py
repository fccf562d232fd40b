"""Discounted objective ``B(x0; u) = ∫_0^∞ e^{-rho t} (log u - c x^2) dt`` as a bracket."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import kernels
from .control import ControlSignal
from .dynamics import ModelParams, Trajectory, integrate_state

DEFAULT_STEP = 5e-3
DEFAULT_QUAD_TOL = 1e-8
#: truncation horizon in units of 1/rho (e^{-10} ~ 4.5e-5 prefactor on the tail)
HORIZON_RHO_UNITS = 10.0


@dataclass(frozen=True)
class ObjectiveEstimate:
    lo: float
    hi: float
    truncation_T: float
    quad_tol: float
    truncated: float = math.nan
    x_T: float = math.nan
    #: discretization estimate added to ``quad_tol`` on each side
    quad_est: float = 0.0

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def to_dict(self) -> dict:
        return {"lo": self.lo, "hi": self.hi, "mid": self.mid, "truncation_T": self.truncation_T,
                "quad_tol": self.quad_tol, "quad_est": self.quad_est, "truncated": self.truncated,
                "x_T": self.x_T}


class DeltaBracket(NamedTuple):
    """Bracket on ``B(x0; u_new) - B(x0; u_old)``."""

    lo: float
    hi: float


class Decomposition(NamedTuple):
    B1: float
    boundary: float


def default_truncation(params: ModelParams, u: ControlSignal) -> float:
    return max(u.end, HORIZON_RHO_UNITS / params.rho)


def log_part(u: ControlSignal, rho: float, T: float) -> float:
    """``∫_0^T e^{-rho t} log u(t) dt``, exact for piecewise-constant ``u``."""
    knots, rates = u.cells(T)
    a = knots[:-1]
    w = np.exp(-rho * a) * -np.expm1(-rho * np.diff(knots)) / rho
    return float(np.dot(w, np.log(rates)))


def _check_horizon(u: ControlSignal, T: float) -> None:
    if not T > 0:
        raise ValueError("truncation horizon must be positive")
    if T < u.end:
        raise ValueError(f"truncation horizon {T:g} ends before the control grid ({u.end:g}); "
                         "the tail bound needs a constant control past T")


def evaluate_truncated(params: ModelParams, u: ControlSignal, T: float, step: float = DEFAULT_STEP) -> float:
    """``∫_0^T e^{-rho t} (log u - c x^2) dt``."""
    if not T > 0:
        raise ValueError("T must be positive")
    tr = integrate_state(params, u, T, step)
    return log_part(u, params.rho, T) - params.c * float(tr.disc_sq[-1])


def _envelope_coeffs(params: ModelParams, u_tail: float, x_T: float):
    """Tail envelopes as ``A + B e^{-b0 s}`` (lower) and ``C + D e^{-b s}`` (upper)."""
    spec = params.dynamics
    A = u_tail / spec.b0
    C = (spec.M + u_tail) / spec.b_up
    return A, x_T - A, C, x_T - C


def tail_square_integrals(params: ModelParams, u_tail: float, x_T: float) -> tuple[float, float]:
    """``∫_0^∞ e^{-rho s} l(s)^2 ds`` and the same for the upper envelope ``v``.

    ``l`` and ``v`` are the comparison trajectories restarted from ``x_T``
    under the constant control ``u_tail``; both are nonnegative so
    ``l^2 <= x^2 <= v^2``.
    """
    rho = params.rho
    b0, b = params.dynamics.b0, params.dynamics.b_up
    A, B, C, D = _envelope_coeffs(params, u_tail, x_T)
    low = A * A / rho + 2.0 * A * B / (rho + b0) + B * B / (rho + 2.0 * b0)
    up = C * C / rho + 2.0 * C * D / (rho + b) + D * D / (rho + 2.0 * b)
    return low, up


def tail_bracket(params: ModelParams, u_tail: float, x_at_T: float, T: float) -> tuple[float, float]:
    """Bracket on ``∫_T^∞ e^{-rho t} (log u_tail - c x^2) dt`` for a constant tail."""
    if not u_tail > 0:
        raise ValueError("tail control must be positive")
    if x_at_T < 0:
        raise ValueError("state must be nonnegative")
    disc = math.exp(-params.rho * T)
    logs = disc * math.log(u_tail) / params.rho
    low, up = tail_square_integrals(params, u_tail, x_at_T)
    return logs - params.c * disc * up, logs - params.c * disc * low


def square_integral_simpson(params: ModelParams, tr: Trajectory) -> float:
    """``∫_0^T e^{-rho t} x^2`` by per-cell Simpson on the samples, independent of the RK4 component."""
    f = np.exp(-params.rho * tr.times) * np.square(tr.states)
    return float(kernels.simpson_cells(tr.times, f, tr.nsub))


def _estimate(params, u, tr: Trajectory, T, quad_tol) -> ObjectiveEstimate:
    q = float(tr.disc_sq[-1])
    # two fourth-order routes; their gap is negligible unless the state is large
    est = params.c * abs(q - square_integral_simpson(params, tr))
    trunc = log_part(u, params.rho, T) - params.c * q
    t_lo, t_hi = tail_bracket(params, u.tail, tr.x_end, T)
    half = quad_tol + est
    return ObjectiveEstimate(trunc - half + t_lo, trunc + half + t_hi, T, quad_tol, trunc, tr.x_end, est)


def evaluate_objective(params: ModelParams, u: ControlSignal, T: float | None = None,
                       step: float = DEFAULT_STEP, quad_tol: float = DEFAULT_QUAD_TOL) -> ObjectiveEstimate:
    """Bracket ``[lo, hi]`` on ``B(x0; u)``.

    Numeric quadrature on ``[0, T]`` (error budget ``quad_tol``, widened by
    the gap between two independent quadrature routes) plus the closed-form
    tail bracket on ``[T, ∞)``. ``T`` defaults to
    ``max(grid end, 10/rho)`` and may not end before the control grid.
    """
    T = default_truncation(params, u) if T is None else float(T)
    _check_horizon(u, T)
    tr = integrate_state(params, u, T, step)
    return _estimate(params, u, tr, T, quad_tol)


def tail_difference_bracket(params: ModelParams, u_tail: float, xa_T: float, xb_T: float,
                            T: float) -> tuple[float, float]:
    """Bracket on ``-c ∫_T^∞ e^{-rho t} (xa^2 - xb^2) dt`` for two states under one constant tail.

    With ``d = xa - xb`` the comparison principle keeps the sign of ``d``
    and gives ``|d_T| e^{-b0 s} <= |d(T+s)| <= |d_T|``; the sum ``xa + xb``
    lies between the summed envelopes.
    """
    rho = params.rho
    b0, b = params.dynamics.b0, params.dynamics.b_up
    d = xa_T - xb_T
    if d == 0.0:
        return 0.0, 0.0
    Aa, Ba, Ca, Da = _envelope_coeffs(params, u_tail, xa_T)
    Ab, Bb, Cb, Db = _envelope_coeffs(params, u_tail, xb_T)
    # ∫ e^{-rho s} e^{-b0 s} (l_a + l_b) and ∫ e^{-rho s} (v_a + v_b)
    j_low = (Aa + Ab) / (rho + b0) + (Ba + Bb) / (rho + 2.0 * b0)
    j_up = (Ca + Cb) / rho + (Da + Db) / (rho + b)
    scale = -params.c * math.exp(-rho * T) * d
    e1, e2 = scale * j_low, scale * j_up
    return min(e1, e2), max(e1, e2)


def objective_delta(params: ModelParams, u_new: ControlSignal, u_old: ControlSignal,
                    T: float | None = None, step: float = DEFAULT_STEP,
                    quad_tol: float = DEFAULT_QUAD_TOL):
    """Bracket on ``B(u_new) - B(u_old)`` plus both objective brackets.

    Both states are integrated on the merged knot set so their
    discretizations match outside the cells where the controls differ.
    When the tails agree, the tail difference is bounded directly instead
    of subtracting two independent tail brackets.

    Returns ``(delta, est_new, est_old)``.
    """
    if T is None:
        T = max(default_truncation(params, u_new), default_truncation(params, u_old))
    _check_horizon(u_new, T)
    _check_horizon(u_old, T)
    tr_new = integrate_state(params, u_new, T, step, companions=[u_old])
    tr_old = integrate_state(params, u_old, T, step, companions=[u_new])
    est_new = _estimate(params, u_new, tr_new, T, quad_tol)
    est_old = _estimate(params, u_old, tr_old, T, quad_tol)
    if u_new.tail == u_old.tail:
        core = est_new.truncated - est_old.truncated
        # route gap of the difference: shared-grid errors cancel where the controls agree
        gap = params.c * abs((tr_new.disc_sq[-1] - tr_old.disc_sq[-1])
                             - (square_integral_simpson(params, tr_new) - square_integral_simpson(params, tr_old)))
        half = 2.0 * quad_tol + float(gap)
        q_lo, q_hi = tail_difference_bracket(params, u_new.tail, tr_new.x_end, tr_old.x_end, T)
        delta = DeltaBracket(core - half + q_lo, core + half + q_hi)
    else:
        delta = DeltaBracket(est_new.lo - est_old.hi, est_new.hi - est_old.lo)
    return delta, est_new, est_old


def value_upper_bound(params: ModelParams) -> float:
    """``V(x0) <= (1/rho) log((rho + b0) / sqrt(2 e c))`` for every ``x0``."""
    rho, c, b0 = params.rho, params.c, params.dynamics.b0
    return math.log((rho + b0) / math.sqrt(2.0 * math.e * c)) / rho


def lower_bound_unit_control(params: ModelParams) -> float:
    """Closed-form lower bound on ``B(x0; u = 1)``.

    Integrates the majorant
    ``x^2 <= (x0^2 + (M+1)^2/b^2) e^{-2bt} + 2 (M+1) x0/b e^{-bt} + (M+1)^2/b^2``
    against ``e^{-rho t}``.
    """
    rho, c, x0 = params.rho, params.c, params.x0
    b, M = params.dynamics.b_up, params.dynamics.M
    s = (M + 1.0) / b
    return -c * ((x0 * x0 + s * s) / (rho + 2.0 * b) + 2.0 * s * x0 / (rho + b) + s * s / rho)


def evaluate_B1(params: ModelParams, u: ControlSignal, T_max: float,
                step: float = DEFAULT_STEP) -> Decomposition:
    """Integration-by-parts split ``B = e^{-rho T} Λ(T) + B1`` with ``Λ(t) = ∫_0^t log u``.

    ``B1 = rho ∫_0^T e^{-rho t} (Λ(t) - (c/rho) x^2) dt + ∫_T^∞ e^{-rho t} (log u - c x^2) dt``;
    the first integral is a per-cell Simpson rule on the trajectory samples,
    the second is closed form (log part) plus the tail-bracket midpoint.
    As ``T -> ∞`` the boundary term vanishes for controls in a corridor and
    ``B1`` tends to the infinite-horizon remainder.
    """
    _check_horizon(u, T_max)
    rho, c = params.rho, params.c
    tr = integrate_state(params, u, T_max, step)
    t = tr.times
    logs = np.log(tr.controls())
    lam = np.concatenate(([0.0], np.cumsum(logs[1:] * np.diff(t))))
    integrand = np.exp(-rho * t) * (rho * lam - c * tr.states ** 2)
    body = kernels.simpson_cells(t, integrand, tr.nsub)
    t_lo, t_hi = tail_bracket(params, u.tail, tr.x_end, T_max)
    boundary = math.exp(-rho * T_max) * float(lam[-1])
    return Decomposition(float(body) + 0.5 * (t_lo + t_hi), boundary)
