"""State equation ``x' = F(x) + u`` and its comparison machinery."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import cumulative_simpson

from . import kernels
from .control import ControlSignal

#: smallest b for which the lake drift is monotone: max_x 2x/(1+x^2)^2
LAKE_THRESHOLD = 3.0 * math.sqrt(3.0) / 8.0

NEG_STATE_TOL = 1e-9
DIAGONAL_EPS = 1e-10
MIN_STEP = 1e-9
#: RK4 is stable for h * |F'| below ~2.785; leave a margin
RK4_STABILITY = 2.5
#: cells with speed bound u + M above this get a refined head segment
TRANSIENT_SPEED = 10.0
#: state distance covered by the refined head (the lake nonlinearity is flat beyond ~20)
TRANSIENT_SPAN = 20.0


class IntegrationError(RuntimeError):
    """Integrator misconfiguration or loss of the nonnegativity guarantee."""


@dataclass(frozen=True)
class DynamicsSpec:
    """Drift ``F`` with envelope constants ``-b0 x <= F(x) <= -b_up x + M``.

    ``kind``/``coef`` name a built-in compiled drift; user-supplied drifts
    leave ``kind`` as ``None`` and integrate on the interpreted path. ``F``
    and ``F_prime`` must accept numpy arrays.
    """

    b0: float
    b_up: float
    M: float
    x_bar: float
    F: Callable = field(repr=False)
    F_prime: Callable = field(repr=False)
    kind: str | None = None
    coef: tuple = ()

    def __post_init__(self):
        if not (self.b0 > 0 and self.b_up > 0 and self.x_bar > 0):
            raise ValueError("b0, b_up and x_bar must be positive")
        if self.M < 0:
            raise ValueError("M must be nonnegative")

    def validate(self, x_max: float, n: int = 20001, tol: float = 1e-12) -> None:
        """Check the standing assumptions on a dense grid of ``[0, x_max]``."""
        xs = np.linspace(0.0, x_max, n)
        f = np.asarray(self.F(xs), dtype=np.float64)
        fp = np.asarray(self.F_prime(xs), dtype=np.float64)
        scale = tol * (1.0 + np.abs(xs))
        problems = []
        if abs(float(self.F(0.0))) > tol:
            problems.append("F(0) != 0")
        if np.any(fp > tol):
            problems.append("F' > 0 somewhere (non-monotone drift)")
        if np.any(f < -self.b0 * xs - scale):
            problems.append("F(x) < -b0 x somewhere")
        if np.any(f > -self.b_up * xs + self.M + scale):
            problems.append("F(x) > -b_up x + M somewhere")
        if np.any(np.abs(fp) > self.b0 + tol):
            problems.append("|F'| > b0 somewhere")
        if problems:
            raise ValueError("invalid dynamics: " + "; ".join(problems))


def make_lake_dynamics(b: float) -> DynamicsSpec:
    """Normalized shallow-lake drift ``F(x) = -b x + x^2 / (1 + x^2)``."""
    if not b >= LAKE_THRESHOLD:
        raise ValueError(f"lake drift is non-monotone for b < 3*sqrt(3)/8 ~ {LAKE_THRESHOLD:.6f}; got b={b}")

    def F(x):
        x2 = np.square(x)
        return -b * x + x2 / (1.0 + x2)

    def F_prime(x):
        return -b + 2.0 * x / np.square(1.0 + np.square(x))

    # F'' = 2(1 - 3x^2)/(1 + x^2)^3 changes sign at 1/sqrt(3)
    return DynamicsSpec(b0=b, b_up=b, M=1.0, x_bar=1.0 / math.sqrt(3.0), F=F, F_prime=F_prime,
                        kind="lake", coef=(float(b),))


def make_linear_dynamics(b0: float) -> DynamicsSpec:
    """Pure envelope drift ``F(x) = -b0 x`` (closed-form solutions for oracles)."""

    def F(x):
        return -b0 * np.asarray(x, dtype=np.float64)

    def F_prime(x):
        return np.full_like(np.asarray(x, dtype=np.float64), -b0)

    # linear: convex and concave everywhere, any switch point is valid
    return DynamicsSpec(b0=b0, b_up=b0, M=0.0, x_bar=1.0, F=F, F_prime=F_prime,
                        kind="linear", coef=(float(b0),))


def make_zero_dynamics() -> DynamicsSpec:
    """``F = 0``. Violates the envelope assumption; only for quadrature checks."""
    return DynamicsSpec(b0=1.0, b_up=1.0, M=0.0, x_bar=1.0,
                        F=lambda x: 0.0 * np.asarray(x, dtype=np.float64),
                        F_prime=lambda x: 0.0 * np.asarray(x, dtype=np.float64),
                        kind="zero", coef=(0.0,))


@dataclass(frozen=True)
class ModelParams:
    dynamics: DynamicsSpec
    rho: float
    c: float
    x0: float

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        if not self.c > 0:
            raise ValueError("c must be positive")
        if not self.x0 >= 0:
            raise ValueError("x0 must be nonnegative")

    def with_x0(self, x0: float) -> "ModelParams":
        return ModelParams(self.dynamics, self.rho, self.c, x0)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Samples of ``x`` on ``[0, t_end]``.

    ``disc_sq`` is the running integral ``∫_0^t e^{-rho s} x(s)^2 ds`` and
    ``nsub`` the number of RK4 steps taken in each control cell (the cell
    boundaries are ``times[cumsum(nsub)]``).
    """

    times: np.ndarray
    states: np.ndarray
    disc_sq: np.ndarray
    rates: np.ndarray
    nsub: np.ndarray
    step_stats: float
    x_min: float

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    @property
    def x_end(self) -> float:
        return float(self.states[-1])

    def controls(self) -> np.ndarray:
        """Control value on the step ending at each sample (first sample: first cell)."""
        return np.concatenate(([self.rates[0]], np.repeat(self.rates, self.nsub)))


def substeps(knots: np.ndarray, step: float) -> np.ndarray:
    """Equal RK4 steps per cell: ``ceil(len/step)``, at least two (Simpson needs a pair)."""
    n = np.ceil(np.diff(knots) / step - 1e-9).astype(np.int64)
    return np.maximum(n, 2)


def sample_grid(params: ModelParams, controls, t_end: float, step: float,
                extra_knots=()) -> tuple[np.ndarray, np.ndarray]:
    """Knots and per-cell step counts shared by every control in ``controls``.

    A cell whose speed bound ``u + M`` exceeds ``TRANSIENT_SPEED`` gets a
    finer head segment: starting from a small state, ``x`` crosses the
    nonlinear range of ``F`` within a few multiples of ``TRANSIENT_SPAN / (u + M)``,
    which a step sized for unit speeds would jump over. The head uses steps
    with ``h (u + M) <= TRANSIENT_SPEED * step``.
    """
    knots = np.asarray(extra_knots, dtype=np.float64).reshape(-1)
    for u in controls:
        knots = np.union1d(knots, u.grid)
    knots, _ = controls[0].cells(t_end, knots)
    mids = 0.5 * (knots[:-1] + knots[1:])
    speed = params.dynamics.M + np.max([np.asarray(u(mids)).reshape(-1) for u in controls], axis=0)
    fast = np.flatnonzero(speed > TRANSIENT_SPEED)
    if fast.size == 0:
        return knots, substeps(knots, step)
    head_len = np.minimum(np.diff(knots)[fast], TRANSIENT_SPAN / speed[fast])
    cuts = knots[fast] + head_len
    keep = cuts < knots[fast + 1] - 1e-12
    fine = np.union1d(knots, cuts[keep])
    nsub = substeps(fine, step)
    heads = np.searchsorted(fine, knots[fast])
    fine_step = step * TRANSIENT_SPEED / speed[fast]
    nsub[heads] = np.maximum(nsub[heads], np.ceil(np.diff(fine)[heads] / fine_step - 1e-9).astype(np.int64))
    return fine, nsub


def integrate_state(params: ModelParams, u: ControlSignal, t_end: float, step: float,
                    extra_knots=(), use_numba=None, companions=()) -> Trajectory:
    """Fixed-step RK4 on ``[0, t_end]``, restarting at every control knot.

    ``extra_knots`` adds breakpoints; ``companions`` are other controls whose
    integration must land on the same samples (see ``sample_grid``). Raises
    ``IntegrationError`` for a step below ``MIN_STEP``, a step outside the
    RK4 stability interval, or a state below ``-NEG_STATE_TOL``.
    """
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    if not step > 0:
        raise ValueError("step must be positive")
    if step < MIN_STEP:
        raise IntegrationError(f"step {step:g} below minimum {MIN_STEP:g}")
    spec = params.dynamics
    if step * spec.b0 > RK4_STABILITY:
        raise IntegrationError(f"step*b0 = {step * spec.b0:g} exceeds RK4 stability bound {RK4_STABILITY}")
    knots, nsub = sample_grid(params, [u, *companions], t_end, step, extra_knots)
    rates = np.asarray(u(0.5 * (knots[:-1] + knots[1:])), dtype=np.float64).reshape(-1)
    t, x, q, err, x_min = kernels.sweep(spec.kind, spec.coef, spec.F, params.x0, knots, rates, nsub,
                                       params.rho, use_numba)
    if not np.all(np.isfinite(x)):
        raise IntegrationError("non-finite state")
    if x_min < -NEG_STATE_TOL:
        raise IntegrationError(f"state dropped to {x_min:g} < 0")
    return Trajectory(t, x, q, rates, nsub, float(err), float(x_min))


def _exp_conv(u: ControlSignal, k: float, t: np.ndarray) -> np.ndarray:
    """``∫_0^t e^{-k(t-s)} u(s) ds`` for piecewise-constant ``u``, vectorized in ``t``."""
    a = np.append(u.grid[:-1], u.end)
    b = np.append(u.grid[1:], np.inf)
    v = np.append(u.values, u.tail)
    tt = t[:, None]
    hi = np.minimum(b[None, :], tt)
    lo = np.minimum(a[None, :], tt)
    # e^{-k(t-hi)} (1 - e^{-k(hi-lo)}) / k, zero when the cell starts after t
    terms = np.exp(-k * (tt - hi)) * -np.expm1(-k * (hi - lo)) / k
    return terms @ v


def envelope_bounds(params: ModelParams, u: ControlSignal, t):
    """Closed-form comparison trajectories bracketing ``x(t)``.

    ``lower = e^{-b0 t}(x0 + ∫ e^{b0 s} u)``, ``upper = e^{-b t}(x0 + ∫ e^{b s}(M + u))``.
    """
    scalar = np.ndim(t) == 0
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    if np.any(t < 0):
        raise ValueError("t must be nonnegative")
    spec = params.dynamics
    x0 = params.x0
    lower = np.exp(-spec.b0 * t) * x0 + _exp_conv(u, spec.b0, t)
    upper = (np.exp(-spec.b_up * t) * x0 - spec.M * np.expm1(-spec.b_up * t) / spec.b_up
             + _exp_conv(u, spec.b_up, t))
    if scalar:
        return float(lower[0]), float(upper[0])
    return lower, upper


def h_factor(spec: DynamicsSpec, x1, x2):
    """Difference quotient of ``F`` along two states, ``F'`` on the diagonal."""
    x1 = np.asarray(x1, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    d = x1 - x2
    diag = np.abs(d) < DIAGONAL_EPS
    safe = np.where(diag, 1.0, d)
    out = np.where(diag, spec.F_prime(x1), (spec.F(x1) - spec.F(x2)) / safe)
    return out if out.ndim else float(out)


def _blockwise_cumsimpson(t: np.ndarray, f: np.ndarray, nsub: np.ndarray) -> np.ndarray:
    out = np.empty_like(f)
    out[0] = 0.0
    k = 0
    for n in nsub:
        seg = slice(k, k + n + 1)
        out[k + 1:k + n + 1] = out[k] + cumulative_simpson(f[seg], x=t[seg])
        k += n
    return out


def variation_identity_residual(params: ModelParams, u1: ControlSignal, u2: ControlSignal,
                                t: float, step: float) -> float:
    """``|x1(t) - x2(t) - ∫_0^t exp(∫_s^t h) (u1 - u2) ds|`` with ``h`` the h-factor.

    Both states come from the integrator on a shared grid; the right-hand
    side is an independent per-cell Simpson quadrature over those samples.
    """
    tr1 = integrate_state(params, u1, t, step, companions=[u2])
    tr2 = integrate_state(params, u2, t, step, companions=[u1])
    if not np.array_equal(tr1.times, tr2.times):
        raise IntegrationError("trajectories landed on different grids")
    lhs = tr1.x_end - tr2.x_end
    h = np.asarray(h_factor(params.dynamics, tr1.states, tr2.states))
    H = _blockwise_cumsimpson(tr1.times, h, tr1.nsub)
    # ∫_0^t e^{-H(s)} (u1 - u2)(s) ds, cell by cell since u1 - u2 jumps at knots
    acc = 0.0
    k = 0
    for i, n in enumerate(tr1.nsub):
        du = tr1.rates[i] - tr2.rates[i]
        if du != 0.0:
            seg = slice(k, k + n + 1)
            acc += du * float(cumulative_simpson(np.exp(-H[seg]), x=tr1.times[seg])[-1])
        k += n
    rhs = math.exp(H[-1]) * acc
    return abs(lhs - rhs)
