"""Hot loops: the fixed-step RK4 sweep over piecewise-constant control cells.

Every kernel here is plain Python over float64 arrays so that the same source
serves both the numba path and the interpreted fallback.
"""

import math

import numpy as np

from . import _jit


def lake_drift(p, x):
    return -p[0] * x + x * x / (1.0 + x * x)


def linear_drift(p, x):
    return -p[0] * x


def zero_drift(p, x):
    return 0.0 * x


def rk4_cells(drift, p, x0, knots, rates, nsub, rho):
    """Integrate ``x' = drift(p, x) + u`` cell by cell.

    Cell ``i`` spans ``[knots[i], knots[i+1]]`` with constant rate ``rates[i]``
    and is cut into ``nsub[i]`` equal steps; the scheme restarts at every knot.
    Alongside ``x`` the discounted square integral ``q(t) = ∫ e^{-rho s} x^2``
    is advanced with the same RK4 stages.

    Returns ``(t, x, q, err_max, x_min)`` where ``err_max`` is the largest
    embedded (RK4 minus midpoint) step difference and ``x_min`` the most
    negative state seen before clamping at zero.
    """
    total = 1
    for i in range(nsub.size):
        total += nsub[i]
    t = np.empty(total)
    x = np.empty(total)
    q = np.empty(total)
    t[0] = knots[0]
    x[0] = x0
    q[0] = 0.0
    err_max = 0.0
    x_min = x0
    k = 0
    xi = x0
    qi = 0.0
    for i in range(rates.size):
        a = knots[i]
        b = knots[i + 1]
        n = nsub[i]
        h = (b - a) / n
        u = rates[i]
        for j in range(n):
            s = a + j * h
            k1 = drift(p, xi) + u
            x2 = xi + 0.5 * h * k1
            k2 = drift(p, x2) + u
            x3 = xi + 0.5 * h * k2
            k3 = drift(p, x3) + u
            x4 = xi + h * k3
            k4 = drift(p, x4) + u
            xn = xi + h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
            d0 = math.exp(-rho * s)
            dm = math.exp(-rho * (s + 0.5 * h))
            d1 = math.exp(-rho * (s + h))
            qi += h * (d0 * xi * xi + 2.0 * dm * (x2 * x2 + x3 * x3) + d1 * x4 * x4) / 6.0
            est = abs(xn - (xi + h * k2))
            if est > err_max:
                err_max = est
            if xn < x_min:
                x_min = xn
            if xn < 0.0:
                xn = 0.0
            xi = xn
            k += 1
            t[k] = b if j == n - 1 else a + (j + 1) * h
            x[k] = xi
            q[k] = qi
    return t, x, q, err_max, x_min


def cell_simpson(t, f, nsub):
    """Sum of composite Simpson integrals of samples ``f`` over each cell block.

    Blocks share their boundary sample. Odd step counts end with a cubic
    (Simpson 3/8) panel, so the rule stays fourth order per cell.
    """
    total = 0.0
    k = 0
    for i in range(nsub.size):
        n = nsub[i]
        h = (t[k + n] - t[k]) / n
        m = n if n % 2 == 0 else n - 3
        acc = 0.0
        for j in range(0, m, 2):
            acc += f[k + j] + 4.0 * f[k + j + 1] + f[k + j + 2]
        acc *= h / 3.0
        if m != n:
            j = k + m
            acc += 3.0 * h / 8.0 * (f[j] + 3.0 * f[j + 1] + 3.0 * f[j + 2] + f[j + 3])
        total += acc
        k += n
    return total


DRIFTS = {"lake": lake_drift, "linear": linear_drift, "zero": zero_drift}

py_rk4_cells = rk4_cells
py_cell_simpson = cell_simpson
py_drifts = DRIFTS

if _jit.HAVE_NUMBA:
    jit_rk4_cells = _jit.compile_kernel(rk4_cells)
    jit_cell_simpson = _jit.compile_kernel(cell_simpson)
    jit_drifts = {name: _jit.compile_kernel(fn) for name, fn in DRIFTS.items()}
else:  # pragma: no cover
    jit_rk4_cells = None
    jit_cell_simpson = None
    jit_drifts = {}


def sweep(kind, coef, F, x0, knots, rates, nsub, rho, use_numba=None):
    """Dispatch ``rk4_cells`` to the compiled or interpreted path.

    ``kind`` names a built-in drift (see ``DRIFTS``) with coefficients
    ``coef``; when it is ``None`` the Python callable ``F`` is used and the
    sweep always runs interpreted.
    """
    if use_numba is None:
        use_numba = _jit.USE_NUMBA
    knots = np.ascontiguousarray(knots, dtype=np.float64)
    rates = np.ascontiguousarray(rates, dtype=np.float64)
    nsub = np.ascontiguousarray(nsub, dtype=np.int64)
    if kind is not None:
        p = np.asarray(coef, dtype=np.float64)
        if use_numba and jit_rk4_cells is not None:
            return jit_rk4_cells(jit_drifts[kind], p, float(x0), knots, rates, nsub, float(rho))
        return py_rk4_cells(py_drifts[kind], p, float(x0), knots, rates, nsub, float(rho))

    def drift(p, x):
        return F(x)

    return py_rk4_cells(drift, None, float(x0), knots, rates, nsub, float(rho))


def simpson_cells(t, f, nsub, use_numba=None):
    if use_numba is None:
        use_numba = _jit.USE_NUMBA
    f = np.ascontiguousarray(f, dtype=np.float64)
    nsub = np.ascontiguousarray(nsub, dtype=np.int64)
    if use_numba and jit_cell_simpson is not None:
        return jit_cell_simpson(t, f, nsub)
    return py_cell_simpson(t, f, nsub)
