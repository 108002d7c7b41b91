"""Energy-domain dynamics: dT/dz = -T G0(z)^2 T marched in from large |z|.

With the "born" seed the boundary value is ``T = (1 - B G0)^-1 B`` at the
boundary point, which tends to ``B`` as |z| grows and makes the march
reproduce the Lippmann-Schwinger T matrix exactly for a local interaction.
The "bare" seed uses ``T = B`` and carries an O(|B|^2 / |z_b|) offset.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from . import pathode
from .errors import (BoundaryRegimeViolation, NotRankOne, OutOfContour,
                     SingularSolve, WindowTooNarrow)
from .interactions import b_of_z
from .state_space import FreeBasis, ZContour, free_resolvent

SEEDS = ("born", "bare")


@dataclass(frozen=True)
class SolverSettings:
    rtol: float = 1e-12
    atol_scale: float = 1e-4
    seed: str = "born"
    regime_limit: float = 0.1
    fd_step: float = 1e-4

    def __post_init__(self):
        if self.seed not in SEEDS:
            raise ValueError(f"seed must be one of {SEEDS}")
        if not 0 < self.rtol < 1e-2:
            raise ValueError("rtol out of range")


def regime_ratio(model, basis, zb):
    """||B(z_b)|| * ||G0(z_b)||; the boundary datum is trusted below 0.1."""
    b = b_of_z(model, zb)
    return float(np.linalg.norm(b, 2) * np.abs(1.0 / (zb - basis.energies)).max())


def boundary_seed(model, basis, zb, seed="born"):
    b = b_of_z(model, zb)
    if seed == "bare":
        return b
    g0 = free_resolvent(basis, zb)
    return np.linalg.solve(np.eye(basis.dimension) - b @ g0, b)


def effective_interaction(model, basis, zb, seed="born"):
    """Constant K with T = (1 - K G0)^-1 K through the boundary datum.

    Every solution of the T equation is of this form; K is what the
    interaction looks like to the integrated solution (``B(zb)`` for the
    ``born`` seed).
    """
    t = boundary_seed(model, basis, zb, seed)
    g0 = free_resolvent(basis, zb)
    return t @ np.linalg.inv(np.eye(basis.dimension) + g0 @ t)


def t_rhs(basis):
    e = basis.energies
    d = basis.dimension

    def f(z, y):
        t = y.reshape(d, d)
        return -((t * (1.0 / (z - e) ** 2)) @ t).ravel()
    return f


def _atol(settings, y0):
    scale = max(np.abs(y0).max(initial=0.0), 1e-300)
    return settings.rtol * settings.atol_scale * scale


@dataclass
class TSolution:
    contour: ZContour
    samples: np.ndarray = field(repr=False)
    model: object = field(repr=False, default=None)
    basis: FreeBasis = field(repr=False, default=None)
    settings: SolverSettings = field(default_factory=SolverSettings)
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.samples) != len(self.contour):
            raise ValueError("one sample per contour point is required")

    @property
    def points(self):
        return self.contour.sample_points

    def nearest(self, z, exclude=None):
        d = np.abs(self.points - z)
        if exclude is not None:
            d[exclude] = np.inf
        return int(np.argmin(d))

    def distance(self, z):
        """Distance from z to the polyline."""
        p = self.points
        a, b = p[:-1], p[1:]
        ab = b - a
        s = np.clip(((z - a) * ab.conjugate()).real / np.maximum(np.abs(ab) ** 2, 1e-300), 0, 1)
        return float(np.abs(a + s * ab - z).min())

    def at(self, z, start=None):
        """T(z) by a short re-solve from the nearest stored sample."""
        z = complex(z)
        k = self.nearest(z) if start is None else start
        if self.points[k] == z:
            return self.samples[k].copy()
        y0 = self.samples[k].ravel()
        y = pathode.integrate_leg(t_rhs(self.basis), y0, self.points[k], z,
                                  self.settings.rtol, _atol(self.settings, y0))
        return y.reshape(self.basis.dimension, self.basis.dimension)

    def evaluate(self, z, reach=None):
        z = complex(z)
        if reach is None:
            reach = 4 * np.abs(np.diff(self.points[1:])).max()
        if self.distance(z) > reach:
            raise OutOfContour(f"z={z} is {self.distance(z):.3g} away from the contour")
        return self.at(z)

    def interpolate(self, z):
        """Cubic spline in arclength along the line part of the contour."""
        p = self.points[1:]
        s = np.concatenate([[0.0], np.cumsum(np.abs(np.diff(p)))])
        a, b = p[:-1], p[1:]
        ab = b - a
        frac = np.clip(((z - a) * ab.conjugate()).real / np.abs(ab) ** 2, 0, 1)
        dist = np.abs(a + frac * ab - z)
        j = int(np.argmin(dist))
        if dist[j] > 1e-9 * max(1.0, abs(z)):
            raise OutOfContour("interpolation needs z on the contour")
        sq = s[j] + frac[j] * abs(ab[j])
        return CubicSpline(s, self.samples[1:], axis=0)(sq)

    def to_dict(self):
        flat = self.samples.reshape(len(self.samples), -1)
        return {
            "schema": "gdelab.tsolution/1",
            "dimension": int(self.samples.shape[1]),
            "contour": {
                "start_radius": self.contour.start_radius,
                "imag_offset": self.contour.imag_offset,
                "re": self.points.real.tolist(),
                "im": self.points.imag.tolist(),
            },
            "samples_re": flat.real.tolist(),
            "samples_im": flat.imag.tolist(),
            "solver": {"rtol": self.settings.rtol, "seed": self.settings.seed,
                       **{k: v for k, v in self.diagnostics.items() if np.isscalar(v)}},
        }

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def from_dict(cls, doc, model=None, basis=None):
        c = doc["contour"]
        contour = ZContour(c["start_radius"], c["imag_offset"],
                           np.array(c["re"]) + 1j * np.array(c["im"]))
        d = doc["dimension"]
        s = (np.array(doc["samples_re"]) + 1j * np.array(doc["samples_im"])).reshape(-1, d, d)
        settings = SolverSettings(rtol=doc["solver"]["rtol"], seed=doc["solver"]["seed"])
        return cls(contour, s, model, basis, settings)


def solve_t_ode(model, basis, contour, settings=None):
    """March T along ``contour`` starting from the boundary datum."""
    settings = settings or SolverSettings()
    zb = contour.boundary_point
    ratio = regime_ratio(model, basis, zb)
    if ratio >= settings.regime_limit:
        raise BoundaryRegimeViolation(
            f"||B||*||G0|| = {ratio:.3g} at z_b={zb}; move the boundary further out")
    t0 = boundary_seed(model, basis, zb, settings.seed)
    d = basis.dimension
    out = np.empty((len(contour), d, d), dtype=complex)

    def record(k, z, y):
        out[k] = y.reshape(d, d)

    y0 = t0.ravel()
    pathode.integrate_polyline(t_rhs(basis), y0, contour.sample_points,
                               settings.rtol, _atol(settings, y0), record)
    b = b_of_z(model, zb)
    nb = np.linalg.norm(b)
    diag = {"regime_ratio": ratio,
            "boundary_defect": float(np.linalg.norm(out[0] - b) / nb) if nb > 0 else 0.0}
    return TSolution(contour, out, model, basis, settings, diag)


def t_at(model, basis, z, zb, settings=None, height=None):
    """T(z) anywhere in the upper half plane via a path over the spectrum."""
    settings = settings or SolverSettings()
    z = complex(z)
    if height is None:
        height = max(z.imag, 0.25 * basis.span)
    y0 = boundary_seed(model, basis, zb, settings.seed).ravel()
    path = [zb, z.real + 1j * height, z]
    y = pathode.integrate_polyline(t_rhs(basis), y0, path, settings.rtol, _atol(settings, y0))
    return y.reshape(basis.dimension, basis.dimension)


def lippmann_schwinger_oracle(h_matrix, basis, z, cond_limit=1e13):
    """T = H_I + H_I (z - H)^-1 H_I by a direct linear solve."""
    h_i = np.asarray(h_matrix, dtype=complex)
    a = complex(z) * np.eye(basis.dimension) - basis.h0() - h_i
    if np.linalg.cond(a) > cond_limit:
        raise SingularSolve(f"z={z} sits on an eigenvalue of H")
    return h_i + h_i @ np.linalg.solve(a, h_i)


def sigma_form(basis, phi, z):
    """<phi|G0(z)|phi>."""
    return complex(np.sum(np.abs(phi) ** 2 / (complex(z) - basis.energies)))


def solve_t_separable(model, basis, z, zb=None, seed="born"):
    """Closed-form T for a rank-one interaction ``B(z) = b(z)|phi><phi|``.

    The scalar equation dt/dz = -t^2 <phi|G0^2|phi> is linear in 1/t, giving
    1/t(z) = 1/t(z_b) + sigma(z_b) - sigma(z) with sigma = <phi|G0|phi>.
    """
    r = model.rank_one()
    if r is None:
        raise NotRankOne("interaction is not rank one")
    g, phi = r
    p = np.outer(phi, phi.conj())
    if model.is_local:
        b = g
    elif zb is None:
        raise ValueError("a nonlocal model needs the boundary point")
    else:
        b = complex(g / (1.0 - 1j * complex(zb) * model.duration))
    if b == 0:
        return np.zeros_like(p)
    s_b = sigma_form(basis, phi, zb) if (seed == "bare" and zb is not None) else 0.0
    t = 1.0 / (1.0 / b + s_b - sigma_form(basis, phi, z))
    return t * p


def green_operator(t, basis, z):
    """G = G0 + G0 T G0 from a TSolution (or a ready T matrix)."""
    tz = t.evaluate(z) if isinstance(t, TSolution) else np.asarray(t)
    g0 = free_resolvent(basis, z)
    return g0 + g0 @ tz @ g0


def green_line(model, basis, energies, eps, zb, settings=None, index=None):
    """G(E + i eps) on a real-energy grid by one march along the line.

    ``index=(i, j)`` keeps a single matrix element to save memory.
    """
    settings = settings or SolverSettings()
    e = np.asarray(energies, dtype=float)
    order = np.argsort(-e)
    pts = np.concatenate([[zb], e[order] + 1j * eps])
    d = basis.dimension
    shape = (e.size,) if index is not None else (e.size, d, d)
    out = np.empty(shape, dtype=complex)
    en = basis.energies

    def record(k, z, y):
        if k == 0:
            return
        t = y.reshape(d, d)
        g0 = 1.0 / (z - en)
        if index is None:
            g = np.diag(g0) + g0[:, None] * t * g0[None, :]
        else:
            i, j = index
            g = (i == j) * g0[i] + g0[i] * t[i, j] * g0[j]
        out[order[k - 1]] = g

    y0 = boundary_seed(model, basis, zb, settings.seed).ravel()
    pathode.integrate_polyline(t_rhs(basis), y0, pts, settings.rtol, _atol(settings, y0), record)
    return out


def evolution_from_green(energies, eps, g_samples, times, taper=0.05, max_phase=np.pi / 4):
    """U_S(t) = (i / 2 pi) int dE exp(-iEt) G(E + i eps), rescaled by exp(eps t).

    The slowly decaying part ``1/(z - c) + A/(z - c)^2`` is subtracted and
    transformed exactly; the remainder falls off like |E|^-3 and is summed
    by the trapezoid rule with a cosine taper on the outer ``taper`` of
    the window.  Exact for t >= 0 (the t = 0 value is the right limit).
    """
    e = np.asarray(energies, dtype=float)
    g = np.asarray(g_samples, dtype=complex)
    times = np.atleast_1d(np.asarray(times, dtype=float))
    h = np.diff(e)
    if np.any(h <= 0) or np.ptp(h) > 1e-9 * h.mean():
        raise ValueError("energies must be a uniform increasing grid")
    h = float(h.mean())
    if h > eps / 2 or h * times.max(initial=0.0) > max_phase * 2 * np.pi:
        raise WindowTooNarrow(f"grid spacing {h:.3g} too coarse for eps={eps} and t={times.max()}")
    mat = g.ndim == 3
    eye = np.eye(g.shape[1]) if mat else 1.0
    c = 0.5 * (e[0] + e[-1])
    w = c - 1j * eps
    zc = (e + 1j * eps - c)
    zc_ = zc[:, None, None] if mat else zc
    ends = [0, -1]
    a_est = np.mean([zc_[i] ** 2 * (g[i] - eye / zc_[i]) for i in ends], axis=0)
    rem = g - eye / zc_ - a_est / zc_ ** 2
    n = e.size
    win = np.ones(n)
    m = max(int(taper * n), 1)
    ramp = 0.5 * (1 - np.cos(np.pi * np.arange(m) / m))
    win[:m] = ramp
    win[-m:] = ramp[::-1]
    wts = np.full(n, h) * win
    wts[0] *= 0.5
    wts[-1] *= 0.5
    out = []
    for t in times:
        ph = wts * np.exp(-1j * e * t)
        num = 1j / (2 * np.pi) * np.tensordot(ph, rem, axes=(0, 0))
        exact = np.exp(-1j * w * t) * (eye - 1j * t * a_est)
        out.append(np.exp(eps * t) * (exact + num))
    return np.array(out)


def dt_dz_residual(tsol, z, h=None):
    """Defect of dT/dz + T G0^2 T at z, normalised by max(1, ||T||^2).

    T(z) is the stored sample (or a re-solve); the derivative comes from a
    Richardson-refined central difference of re-solves launched from the
    neighbouring samples, so a corrupted sample is not self-consistent.
    """
    z = complex(z)
    k = tsol.nearest(z)
    on_grid = tsol.points[k] == z
    tz = tsol.samples[k] if on_grid else tsol.at(z)
    g2 = 1.0 / (z - tsol.basis.energies) ** 2
    if h is None:
        # keep the step well inside the local variation scale |T| / |dT/dz|
        slope = np.linalg.norm((tz * g2) @ tz)
        local = np.linalg.norm(tz) / slope if slope > 0 else np.inf
        h = min(tsol.settings.fd_step, 0.05 * z.imag, 0.003 * local)
    direction = 1.0
    if on_grid and 0 < k < len(tsol.points) - 1:
        dz = tsol.points[k + 1] - tsol.points[k - 1]
        direction = dz / abs(dz)
    src = tsol.nearest(z, exclude=k) if on_grid else k

    def t_off(delta):
        return tsol.at(z + delta * direction, start=src)

    d1 = (t_off(h) - t_off(-h)) / (2 * h * direction)
    d2 = (t_off(h / 2) - t_off(-h / 2)) / (h * direction)
    deriv = (4 * d2 - d1) / 3
    defect = deriv + (tz * g2) @ tz
    return float(np.linalg.norm(defect) / max(1.0, np.linalg.norm(tz) ** 2))
