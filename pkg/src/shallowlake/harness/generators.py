"""Seeded random controls for the verification suites."""

from __future__ import annotations

import math

import numpy as np

from ..control import ControlSignal
from ..dynamics import ModelParams
from ..localization import MaximizingBounds, log_bound_eta, log_bound_N

LOG_LO = math.log(1e-6)
LOG_HI = math.log(1e3)
#: samples per cell when checking the running-mass estimate
MASS_CHECK_POINTS = 64


def _cell_grid(rng: np.random.Generator, horizon: float, cells: int) -> np.ndarray:
    cuts = np.sort(rng.uniform(0.0, horizon, cells - 1))
    grid = np.unique(np.concatenate(([0.0], cuts, [horizon])))
    # drop slivers that would merge with a neighbour
    keep = np.concatenate(([True], np.diff(grid) > 1e-6))
    return grid[keep]


def random_control(rng: np.random.Generator, horizon: float = 20.0, max_cells: int = 12,
                   spike_prob: float = 0.15, log_lo: float = LOG_LO, log_hi: float = LOG_HI) -> ControlSignal:
    """Piecewise-constant control, log-uniform values in ``[1e-6, 1e3]``, occasional spikes.

    Spikes are short cells at the top of the range. The tail is log-uniform too.
    """
    grid = _cell_grid(rng, horizon, int(rng.integers(1, max_cells + 1)))
    vals = np.exp(rng.uniform(log_lo, log_hi, grid.size - 1))
    spikes = rng.random(vals.size) < spike_prob
    vals[spikes] = math.exp(log_hi) * rng.uniform(0.5, 1.0, int(spikes.sum()))
    tail = math.exp(rng.uniform(log_lo, log_hi))
    return ControlSignal(grid, vals, tail)


def running_mass_slack(u: ControlSignal, K: float, rho: float, t_end: float) -> float:
    """``min_t (K e^{rho t} - ∫_0^t u)`` over ``[0, t_end]``, sampled densely in every cell."""
    knots, rates = u.cells(t_end)
    s = np.linspace(0.0, 1.0, MASS_CHECK_POINTS)
    mass = 0.0
    worst = math.inf
    for a, b, r in zip(knots[:-1], knots[1:], rates):
        t = a + s * (b - a)
        worst = min(worst, float(np.min(K * np.exp(rho * t) - (mass + r * (t - a)))))
        mass += r * (b - a)
    return worst


def spiky_control(rng: np.random.Generator, params: ModelParams, bounds: MaximizingBounds,
                  T: float, n_spikes: int | None = None) -> ControlSignal:
    """Control with spikes above ``N(T)`` on ``[0, T]`` that still satisfies ``∫_0^t u <= K e^{rho t}``.

    The base is log-uniform on ``[1e-6, 1]``; each spike sits above the clamp
    level and carries a random share of half the admissible mass. Everything
    is scaled down together if the running-mass estimate is violated.
    """
    rho, b0 = params.rho, params.dynamics.b0
    log_N = log_bound_N(bounds, T, b0, rho)
    horizon = T + 5.0
    base = random_control(rng, horizon, max_cells=8, spike_prob=0.0, log_lo=LOG_LO, log_hi=0.0)
    k = int(rng.integers(1, 4)) if n_spikes is None else n_spikes
    shares = rng.dirichlet(np.ones(k)) * 0.5 * bounds.K
    points, heights = [], []
    for share in shares:
        height = math.exp(log_N + rng.uniform(0.1, 3.0))
        width = share / height
        start = rng.uniform(0.0, T - width)
        points += [start, start + width]
        heights.append((start, start + width, height))
    split = base.with_knots(points)
    vals = split.values.copy()
    mids = 0.5 * (split.grid[:-1] + split.grid[1:])
    for a, b, h in heights:
        inside = (mids > a) & (mids < b)
        vals[inside] = np.maximum(vals[inside], h)
    u = ControlSignal(split.grid, vals, split.tail)
    t_end = T + horizon
    for _ in range(60):
        if running_mass_slack(u, bounds.K, rho, t_end) >= 0.0:
            return u
        u = ControlSignal(u.grid, u.values * 0.9, u.tail)
    raise RuntimeError("could not satisfy the running-mass estimate")


def plateau_control(rng: np.random.Generator, params: ModelParams, bounds: MaximizingBounds,
                    T: float) -> ControlSignal:
    """Control with near-zero plateaus below ``eta(T)`` on ``[0, T]``.

    Plateau values are ``eta * 10^{-U(0.5, 8)}`` (kept above the smallest
    normal double). Other cells and the tail are log-uniform on ``[1e-3, 1]``,
    which keeps ``∫ e^{-rho t} x`` below ``(M + 1) / (b rho)``.
    """
    log_eta = log_bound_eta(bounds, T)
    horizon = T + 5.0
    grid = _cell_grid(rng, horizon, int(rng.integers(3, 10)))
    vals = np.exp(rng.uniform(math.log(1e-3), 0.0, grid.size - 1))
    head = np.flatnonzero(grid[1:] <= T)
    if head.size == 0:
        grid = np.unique(np.concatenate((grid, [T])))
        vals = np.exp(rng.uniform(math.log(1e-3), 0.0, grid.size - 1))
        head = np.flatnonzero(grid[1:] <= T)
    n_flat = int(rng.integers(1, head.size + 1))
    chosen = rng.choice(head, size=n_flat, replace=False)
    floor = math.log(np.finfo(np.float64).tiny)
    logs = np.maximum(log_eta - math.log(10.0) * rng.uniform(0.5, 8.0, n_flat), floor + 1.0)
    vals[chosen] = np.exp(logs)
    tail = math.exp(rng.uniform(math.log(1e-3), 0.0))
    return ControlSignal(grid, vals, tail)


def corridor_control(rng: np.random.Generator, params: ModelParams, bounds: MaximizingBounds,
                     T: float, horizon: float = 15.0, tail: float = 1.0) -> ControlSignal:
    """Control whose cells on ``[0, horizon]`` lie in ``[max(eta, 1e-6), min(N, 1e3)]``."""
    log_lo = max(log_bound_eta(bounds, T), LOG_LO)
    log_hi = min(log_bound_N(bounds, T, params.dynamics.b0, params.rho), LOG_HI)
    grid = _cell_grid(rng, horizon, int(rng.integers(1, 10)))
    vals = np.exp(rng.uniform(log_lo, log_hi, grid.size - 1))
    return ControlSignal(grid, vals, tail)
