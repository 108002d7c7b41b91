"""Adaptive integration of holomorphic ODEs along polylines in the z plane.

A leg from ``a`` to ``b`` is parametrised by ``s`` in ``[0, |b - a|]`` so the
embedded Runge-Kutta pair (scipy's DOP853) sees a real independent variable
and a complex state.
"""

from __future__ import annotations

import numpy as np
from scipy.integrate import solve_ivp

from .errors import StepFailure

CHUNK = 256


def _collinear(a, b, c, tol=1e-12):
    u, v = b - a, c - b
    if abs(u) == 0 or abs(v) == 0:
        return False
    return abs((u.conjugate() * v).imag) <= tol * abs(u) * abs(v) and (u.conjugate() * v).real > 0


def integrate_leg(f, y0, a, b, rtol, atol, s_eval=None):
    """Integrate ``dy/dz = f(z, y)`` from ``a`` to ``b`` on the straight leg.

    Returns the state at ``b`` or, with ``s_eval`` (fractions in (0, 1]),
    an array of states at ``a + s (b - a)``.
    """
    a, b = complex(a), complex(b)
    y0 = np.asarray(y0, dtype=complex)
    if a == b:
        if s_eval is None:
            return y0.copy()
        return np.repeat(y0[None], len(s_eval), axis=0)
    dz = b - a

    def rhs(s, y):
        return dz * f(a + s * dz, y)

    sol = solve_ivp(rhs, (0.0, 1.0), y0, method="DOP853", rtol=rtol, atol=atol,
                    t_eval=None if s_eval is None else np.asarray(s_eval, dtype=float))
    if sol.status != 0:
        raise StepFailure(f"integrator failed on leg {a} -> {b}: {sol.message}")
    if s_eval is None:
        return sol.y[:, -1]
    return sol.y.T


def integrate_polyline(f, y0, points, rtol, atol, record=None):
    """March ``y`` through ``points`` (``points[0]`` holds ``y0``).

    ``record(k, z, y)`` is called at every point.  Runs of collinear points
    are handled in one adaptive solve with dense sampling.
    """
    pts = np.asarray(points, dtype=complex)
    y = np.asarray(y0, dtype=complex)
    if record is None and pts.size > 1:
        keep = np.concatenate([[True], pts[1:] != pts[:-1]])
        pts = pts[keep]
    if record is not None:
        record(0, pts[0], y)
    k = 0
    while k < pts.size - 1:
        j = k + 1
        while (j + 1 < pts.size and j - k < CHUNK
               and _collinear(pts[j - 1], pts[j], pts[j + 1])):
            j += 1
        a, b = pts[k], pts[j]
        frac = np.ones(j - k)
        if b != a:
            frac = np.abs(pts[k + 1:j + 1] - a) / abs(b - a)
            frac[-1] = 1.0
        ys = integrate_leg(f, y, a, b, rtol, atol, s_eval=frac)
        if record is not None:
            for m, yy in enumerate(ys):
                record(k + 1 + m, pts[k + 1 + m], yy)
        y = ys[-1]
        k = j
    return y


def detour(a, b, height):
    """Three-leg path a -> a + ih -> b + ih -> b staying above both ends."""
    h = 1j * height
    return [a, a + h, b + h, b]
