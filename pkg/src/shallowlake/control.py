"""Piecewise-constant admissible controls."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_KNOT_MERGE = 1e-12


def _frozen(a) -> np.ndarray:
    out = np.array(a, dtype=np.float64)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class ControlSignal:
    """Strictly positive control, constant on each grid cell and on the tail.

    ``grid`` holds the knots ``0 = t_0 < ... < t_m``; ``values[i]`` applies on
    ``(t_i, t_{i+1}]`` and ``tail`` on ``(t_m, inf)``. An empty grid cell set
    (``grid == [0]``) is the constant control ``tail``.
    """

    grid: np.ndarray
    values: np.ndarray
    tail: float

    def __post_init__(self):
        grid = _frozen(self.grid).reshape(-1)
        values = _frozen(self.values).reshape(-1)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "tail", float(self.tail))
        if grid.size < 1 or grid[0] != 0.0:
            raise ValueError("control grid must start at 0")
        if values.size != grid.size - 1:
            raise ValueError(f"expected {grid.size - 1} cell values, got {values.size}")
        if np.any(np.diff(grid) <= 0.0) or not np.all(np.isfinite(grid)):
            raise ValueError("control grid must be finite and strictly increasing")
        if not (np.all(values > 0.0) and np.all(np.isfinite(values))):
            raise ValueError("control values must be finite and strictly positive")
        if not (self.tail > 0.0 and math.isfinite(self.tail)):
            raise ValueError("control tail must be finite and strictly positive")

    @classmethod
    def constant(cls, value: float) -> "ControlSignal":
        return cls(np.zeros(1), np.zeros(0), value)

    @classmethod
    def uniform(cls, horizon: float, values, tail: float | None = None) -> "ControlSignal":
        """Equal-width cells on ``[0, horizon]``; tail defaults to the last value."""
        values = np.asarray(values, dtype=np.float64).reshape(-1)
        grid = np.linspace(0.0, horizon, values.size + 1)
        return cls(grid, values, values[-1] if tail is None else tail)

    @property
    def end(self) -> float:
        return float(self.grid[-1])

    @property
    def n_cells(self) -> int:
        return self.values.size

    def __repr__(self) -> str:
        return f"ControlSignal(cells={self.n_cells}, end={self.end:g}, tail={self.tail:g})"

    def equals(self, other: "ControlSignal", rtol: float = 0.0) -> bool:
        return (
            self.grid.shape == other.grid.shape
            and np.allclose(self.grid, other.grid, rtol=rtol, atol=0.0)
            and np.allclose(self.values, other.values, rtol=rtol, atol=0.0)
            and math.isclose(self.tail, other.tail, rel_tol=rtol, abs_tol=0.0)
        )

    def __call__(self, t):
        """Evaluate at ``t`` (left-open cells, so ``u(t_i)`` is the value of cell ``i-1``)."""
        t = np.asarray(t, dtype=np.float64)
        idx = np.searchsorted(self.grid, t, side="left") - 1
        ext = np.append(self.values, self.tail)
        out = ext[np.clip(idx, 0, ext.size - 1)]
        out = np.where(t > self.grid[-1], self.tail, out)
        return out if out.ndim else float(out)

    def cells(self, t_end: float, extra=()) -> tuple[np.ndarray, np.ndarray]:
        """Knots and rates covering ``[0, t_end]``, split at the points in ``extra``.

        The tail contributes one cell from the grid end to ``t_end`` when the
        horizon reaches past the grid.
        """
        pts = [self.grid[self.grid < t_end]]
        extra = np.asarray(extra, dtype=np.float64).reshape(-1)
        pts.append(extra[(extra > 0.0) & (extra < t_end)])
        pts.append(np.array([t_end]))
        knots = np.unique(np.concatenate(pts))
        # knots closer than the merge distance would create degenerate cells
        keep = np.concatenate(([True], np.diff(knots) > _KNOT_MERGE))
        keep[-1] = True
        knots = knots[keep]
        if knots.size >= 2 and knots[-1] - knots[-2] <= _KNOT_MERGE:
            knots = np.delete(knots, -2)
        mids = 0.5 * (knots[:-1] + knots[1:])
        return knots, np.asarray(self(mids), dtype=np.float64).reshape(-1)

    def with_knots(self, points) -> "ControlSignal":
        """Same function with extra knots inserted (tail cells split as needed)."""
        points = np.asarray(points, dtype=np.float64).reshape(-1)
        points = points[points > 0.0]
        if points.size == 0:
            return self
        end = max(self.end, float(points.max()))
        knots, rates = self.cells(end, points)
        return ControlSignal(knots, rates, self.tail)

    def integral(self, a: float, b: float) -> float:
        """``∫_a^b u``."""
        knots, rates = self.cells(b, [a])
        lo = knots[:-1]
        hi = knots[1:]
        mask = lo >= a - _KNOT_MERGE
        return float(np.sum(rates[mask] * (hi[mask] - lo[mask])))

    def log_integral(self, b: float) -> float:
        """``∫_0^b log u``."""
        knots, rates = self.cells(b)
        return float(np.sum(np.log(rates) * np.diff(knots)))

    def discounted_integral(self, rho: float) -> float:
        """``∫_0^∞ e^{-rho t} u(t) dt`` in closed form."""
        a = self.grid[:-1]
        b = self.grid[1:]
        cells = np.sum(self.values * np.exp(-rho * a) * -np.expm1(-rho * (b - a))) / rho
        return float(cells + self.tail * math.exp(-rho * self.end) / rho)

    def to_dict(self) -> dict:
        return {"grid": self.grid.tolist(), "values": self.values.tolist(), "tail": self.tail}

    @classmethod
    def from_dict(cls, d: dict) -> "ControlSignal":
        if "constant" in d:
            return cls.constant(d["constant"])
        return cls(d["grid"], d["values"], d["tail"])
