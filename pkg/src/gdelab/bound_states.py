"""Dressed levels: channel functions C_m(z), the off-channel operator M(z),
pole search, residue normalisation and dressed state vectors.

The Green operator is decomposed as ``G = Gt + Gt M Gt`` with the diagonal
``Gt = diag(1 / (z - E_m - C_m(z)))`` and ``<m|M|m> = 0``.  The pair
(C, M) obeys

    dC_m/dz = -<m| M Gt^2 M |m>
    dM/dz   = -P_perp [M Gt^2 M + C' Gt M + M Gt C']   (off-diagonal)

which is the T-matrix equation rewritten for this decomposition.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as P

from . import pathode
from .errors import (DerivativeUnstable, MultipleRoots, NoConvergence, StepFailure,
                     VanishingDiagonal)
from .gde_energy import SolverSettings, boundary_seed, regime_ratio
from .errors import BoundaryRegimeViolation
from .state_space import free_resolvent


def split_green(g, z, energies, tol=1e-300):
    """Exact (C, M) from a Green matrix: C = z - E - 1/G_mm, M = D^-1 G D^-1 - D^-1."""
    dg = np.diag(g).copy()
    if np.abs(dg).min() <= tol:
        raise VanishingDiagonal(f"<m|G|m> vanishes at z={z}")
    c = complex(z) - energies - 1.0 / dg
    m = g / (dg[:, None] * dg[None, :])
    np.fill_diagonal(m, 0.0)
    return c, m


def join_green(c, m, z, energies):
    gt = 1.0 / (complex(z) - energies - c)
    return np.diag(gt) + gt[:, None] * m * gt[None, :]


def channel_rhs(energies):
    d = energies.size

    def derivs(z, y):
        c = y[:d]
        m = y[d:].reshape(d, d)
        g = 1.0 / (z - energies - c)
        mgm = (m * g ** 2) @ m
        cp = -np.diag(mgm).copy()
        mp = -mgm - (cp * g)[:, None] * m - m * (g * cp)[None, :]
        np.fill_diagonal(mp, 0.0)
        return cp, mp

    def f(z, y):
        cp, mp = derivs(z, y)
        return np.concatenate([cp, mp.ravel()])

    f.derivs = derivs
    return f


def _pack(c, m):
    return np.concatenate([c, m.ravel()])


class ChannelFunctions:
    """C_m(z) and M(z) sampled on a contour, re-solvable anywhere above the axis.

    Off-contour values come from integrating the (C, M) system from the
    boundary point along a path over the spectrum (or a short detour from
    the last evaluated point), so every value shares the same boundary
    datum.
    """

    def __init__(self, n, points, c_samples, m_samples, provenance, model, basis,
                 zb, settings=None):
        self.n = n
        self.points = np.asarray(points, dtype=complex)
        self.c_samples = np.asarray(c_samples, dtype=complex)
        self.m_samples = np.asarray(m_samples, dtype=complex)
        self.provenance = provenance
        self.model = model
        self.basis = basis
        self.zb = complex(zb)
        self.settings = settings or SolverSettings()
        self._rhs = channel_rhs(basis.energies)
        self._last = None
        self._hub = None

    @property
    def cn(self):
        return self.c_samples[:, self.n]

    def _seed(self):
        t0 = boundary_seed(self.model, self.basis, self.zb, self.settings.seed)
        g0 = free_resolvent(self.basis, self.zb)
        return _pack(*split_green(g0 + g0 @ t0 @ g0, self.zb, self.basis.energies))

    def _atol(self, y):
        return self.settings.rtol * self.settings.atol_scale * max(np.abs(y).max(), 1e-300)

    def state(self, z):
        """Return ``(C, M, dC/dz)`` at z (Im z >= 0)."""
        z = complex(z)
        rt = self.settings.rtol
        if self._last is not None and self._last[0] == z:
            y = self._last[1]
        else:
            # Descend vertically from a cached point at fixed height; states
            # close to the real axis are never reused as starting values.
            height = max(z.imag, 0.25 * self.basis.span)
            self._hub_state(height)
            _, hz, yh = self._hub
            top = z.real + 1j * height
            yt = pathode.integrate_polyline(self._rhs, yh, [hz, top], rt, self._atol(yh))
            self._hub = (height, top, yt)
            y = pathode.integrate_polyline(self._rhs, yt, [top, z], rt, self._atol(yt))
        self._last = (z, y)
        d = self.basis.dimension
        cp, _ = self._rhs.derivs(z, y)
        return y[:d].copy(), y[d:].reshape(d, d).copy(), cp

    def c(self, z):
        return self.state(z)[0][self.n]

    def ring(self, center, radius, half=16):
        """States on a circle around a real ``center``.

        Only the upper half is integrated (a chord polyline entered from
        above); the lower half follows from ``C(conj z) = conj C(z)`` and
        ``M(conj z) = M(z)^H``, valid because the solution is the resolvent
        of a Hermitian matrix.  Returns ``(z, y)`` for ``2 * half`` points at
        angles ``pi (k + 1/2) / half``.
        """
        center = float(np.real(center))
        theta = np.pi * (np.arange(2 * half) + 0.5) / half
        zs = center + radius * np.exp(1j * theta)
        d = self.basis.dimension
        height = 0.25 * self.basis.span
        if height <= radius:
            height = 2.0 * radius
        y0 = self._hub_state(height)
        _, hz, yh = self._hub
        top = zs[0].real + 1j * height
        path = np.concatenate([[hz, top], zs[:half]])
        ys = np.empty((2 * half, y0.size), dtype=complex)

        def record(k, z, y):
            if k >= 2:
                ys[k - 2] = y

        pathode.integrate_polyline(self._rhs, yh, path, self.settings.rtol, self._atol(yh), record)
        for k in range(half):
            c = ys[k, :d]
            m = ys[k, d:].reshape(d, d)
            ys[2 * half - 1 - k] = _pack(np.conj(c), m.conj().T)
        return zs, ys

    def _hub_state(self, height):
        if self._hub is None or self._hub[0] != height:
            y0 = self._seed()
            hz = 1j * height + 0.5 * (self.basis.energies[0] + self.basis.energies[-1])
            yh = pathode.integrate_polyline(self._rhs, y0, [self.zb, hz], self.settings.rtol,
                                            self._atol(y0))
            self._hub = (height, hz, yh)
        return self._hub[2]

    def green(self, z):
        c, m, _ = self.state(z)
        return join_green(c, m, z, self.basis.energies)


def extract_channel(tsol, basis, n):
    """C and M from the full T solution by exact inversion of the split."""
    n = basis.check_label(n)
    cs, ms = [], []
    for z, t in zip(tsol.points, tsol.samples):
        g0 = free_resolvent(basis, z)
        c, m = split_green(g0 + g0 @ t @ g0, z, basis.energies)
        cs.append(c)
        ms.append(m)
    return ChannelFunctions(n, tsol.points, cs, ms, "extracted-from-T", tsol.model, basis,
                            tsol.contour.boundary_point, tsol.settings)


def solve_channel_ode(model, basis, n, contour, settings=None):
    """Integrate the (C, M) system along the contour from the boundary datum."""
    settings = settings or SolverSettings()
    n = basis.check_label(n)
    zb = contour.boundary_point
    ratio = regime_ratio(model, basis, zb)
    if ratio >= settings.regime_limit:
        raise BoundaryRegimeViolation(f"||B||*||G0|| = {ratio:.3g} at z_b={zb}")
    ch = ChannelFunctions(n, contour.sample_points, [], [], "direct-ode", model, basis, zb, settings)
    d = basis.dimension
    cs = np.empty((len(contour), d), dtype=complex)
    ms = np.empty((len(contour), d, d), dtype=complex)

    def record(k, z, y):
        cs[k] = y[:d]
        ms[k] = y[d:].reshape(d, d)

    y0 = ch._seed()
    pathode.integrate_polyline(ch._rhs, y0, contour.sample_points, settings.rtol,
                               ch._atol(y0), record)
    ch.c_samples, ch.m_samples = cs, ms
    return ch


@dataclass
class PoleResult:
    n: int
    energy: complex
    c0: complex
    psi: np.ndarray = field(repr=False)
    psi_prime: np.ndarray = field(repr=False)
    residue_defect: float = float("nan")
    newton_iterations: int = 0
    broadening: tuple = ()
    diagnostics: dict = field(default_factory=dict)

    @property
    def width(self):
        return max(-2.0 * complex(self.energy).imag, 0.0) + 0.0

    def to_dict(self):
        def inter(v):
            return np.column_stack([v.real, v.imag]).ravel().tolist()
        return {
            "label": self.n,
            "energy": [complex(self.energy).real, complex(self.energy).imag],
            "width": self.width,
            "c0": [complex(self.c0).real, complex(self.c0).imag],
            "psi": inter(np.asarray(self.psi)),
            "psi_prime": inter(np.asarray(self.psi_prime)),
            "residue_defect": self.residue_defect,
            "newton_iterations": self.newton_iterations,
            "diagnostics": {k: v for k, v in self.diagnostics.items()
                            if isinstance(v, (int, float, str))},
        }


def _newton(ch, e0_level, guess, eta, tol, window, maxiter):
    def f(e):
        c, _, cp = ch.state(e + 1j * eta)
        return e - e0_level - c[ch.n], 1.0 - cp[ch.n]

    e = complex(guess)
    fe, dfe = f(e)
    for it in range(1, maxiter + 1):
        if abs(fe) <= tol:
            return e, it - 1
        step = -fe / dfe
        lam = 1.0
        for _ in range(30):
            cand = e + lam * step
            if eta == 0.0:
                cand = complex(cand.real)
            if abs(cand - e0_level) <= window and cand.imag + eta > 0:
                try:
                    fc, dfc = f(cand)
                except StepFailure:
                    fc = None
                if fc is not None and abs(fc) < abs(fe):
                    break
            lam *= 0.5
        else:
            raise NoConvergence(f"damped Newton stalled at E={e}")
        e, fe, dfe = cand, fc, dfc
    if abs(fe) <= tol:
        return e, maxiter
    raise NoConvergence(f"no root of E - E0 - C(E) after {maxiter} iterations (|f|={abs(fe):.2e})")


TAIL_TOL = 1e-9
RING_HALF = 32


@dataclass
class LevelExpansion:
    """Taylor data of level n's channel around a real centre.

    ``f``, ``col`` and ``row`` hold power-series coefficients in
    ``w = z - center`` of ``z - E_n - C_n(z)``, ``Gt_k M_kn`` and ``M_nk Gt_k``
    (entry n set to 1); ``residue`` is the contour-average residue of G.
    """

    n: int
    center: float
    radius: float
    f: np.ndarray
    col: np.ndarray
    row: np.ndarray
    residue: np.ndarray
    tail: float
    pole_part: np.ndarray = field(default=None, repr=False)

    def covers(self, e, frac=0.25):
        return abs(complex(e) - self.center) <= frac * self.radius

    def value(self, e, which="f", order=0):
        coef = getattr(self, which)
        if order:
            coef = P.polyder(coef, order)
        return P.polyval(complex(e) - self.center, coef)

    def root(self, maxiter=60):
        w = 0.0j
        df = P.polyder(self.f)
        for _ in range(maxiter):
            step = P.polyval(w, self.f) / P.polyval(w, df)
            w -= step
            if abs(step) <= 1e-15 * max(self.radius, abs(w)):
                break
            if not np.isfinite(w) or abs(w) > 4 * self.radius:
                return None
        return self.center + w

    def green(self, z):
        """G(z) inside the circle from the series of (z - center) G(z)."""
        w = complex(z) - self.center
        return P.polyval(w, self.pole_part) / w

    def roots_inside(self):
        r = P.polyroots(self.f)
        return r[np.abs(r) < self.radius] + self.center


def _coefficients(vals, radius, half):
    npts = 2 * half
    j = np.arange(npts)
    phase = np.exp(-1j * np.pi * j / npts)
    shape = (npts,) + (1,) * (vals.ndim - 1)
    raw = np.fft.fft(vals, axis=0) / npts * phase.reshape(shape)
    scale = max(np.abs(raw).max(), 1e-300)
    tail = float(np.abs(raw[half // 2:]).max() / scale)
    coef = raw[:half // 2] / (radius ** j[:half // 2]).reshape((half // 2,) + shape[1:])
    return coef, tail


def level_expansion(ch, center, radius, half=RING_HALF):
    """Sample the channel on a circle and build a :class:`LevelExpansion`."""
    zs, ys = ch.ring(center, radius, half)
    e = ch.basis.energies
    d, n = e.size, ch.n
    c = ys[:, :d]
    m = ys[:, d:].reshape(-1, d, d)
    g = 1.0 / (zs[:, None] - e[None, :] - c)
    fv = zs - e[n] - c[:, n]
    col = g * m[:, :, n]
    row = m[:, n, :] * g
    col[:, n] = 1.0
    row[:, n] = 1.0
    green = g[:, :, None] * m * g[:, None, :]
    green[:, np.arange(d), np.arange(d)] += g
    residue = np.mean(green * (zs - center)[:, None, None], axis=0)
    fc, tail = _coefficients(fv, radius, half)
    cc, tail_c = _coefficients(col, radius, half)
    rc, tail_r = _coefficients(row, radius, half)
    pc, _ = _coefficients(green * (zs - center)[:, None, None], radius, half)
    return LevelExpansion(n, float(center), float(radius), fc, cc, rc, residue,
                          max(tail, tail_c, tail_r), pc)


def _circle_root(ch, basis, guess, maxiter=40):
    e_level = basis.energies[ch.n]
    window = 0.5 * basis.gap(ch.n)
    center = float(np.real(guess))
    radius = 0.5 * window
    floor = 1e-7 * basis.span
    for it in range(1, maxiter + 1):
        exp = level_expansion(ch, center, radius)
        if exp.tail > TAIL_TOL:
            radius *= 0.5
            if radius < floor:
                raise NoConvergence(f"channel {ch.n} not analytic near E={center}")
            continue
        root = exp.root()
        if root is None or abs(root - e_level) > window:
            raise NoConvergence(f"no root of E - E_n - C_n(E) near level {ch.n}")
        if exp.covers(root):
            # re-centre on the root so (z - E) G(z) is analytic in the disc
            final = level_expansion(ch, root.real, radius)
            ch.expansion = final if final.tail <= TAIL_TOL else exp
            return root, it
        center = float(root.real)
    raise NoConvergence(f"circle iteration did not settle for level {ch.n}")


def _expansion_at(ch, e):
    exp = getattr(ch, "expansion", None)
    if exp is None or not exp.covers(e):
        root, _ = _circle_root(ch, ch.basis, e)
        exp = ch.expansion
    return exp


def find_pole(ch, basis, n=None, guess=None, broadening=(), maxiter=60, scan=False,
              window=None):
    """Solve E - E_n - C_n(E) = 0 near E_n.

    Without broadening the root is located on a Taylor expansion built from
    Cauchy sampling on circles that never touch the real axis.  With
    ``broadening=(eta1, eta2, ...)`` the channel function is taken at
    ``E + i eta``, damped Newton finds each root, and the roots are
    extrapolated to eta -> 0 (polynomial in eta); this is how a decaying
    level of a discretised continuum is reached.  Newton steps stay within
    ``window`` of E_n: half the gap by default, the whole span when
    broadened (the smeared ladder no longer separates the levels).
    """
    n = ch.n if n is None else basis.check_label(n)
    if n != ch.n:
        raise ValueError("channel functions belong to another level")
    e_level = basis.energies[n]
    if window is None:
        window = basis.span if broadening else 0.5 * basis.gap(n)
    tol = 1e-10 * basis.span
    start = e_level if guess is None else guess
    if not broadening:
        root, its = _circle_root(ch, basis, start)
        ch.last_iterations = its
        if scan:
            inside = ch.expansion.roots_inside()
            if inside.size > 1:
                raise MultipleRoots(f"roots {inside} inside the circle of level {n}")
        if abs(root.imag) <= tol:
            root = complex(root.real)
        return root
    etas = np.asarray(broadening, dtype=float)
    roots = []
    its = 0
    for eta in etas:
        r, k = _newton(ch, e_level, start, eta, tol, window, maxiter)
        roots.append(r)
        start = r
        its += k
    ch.last_iterations = its
    ch.broadened_roots = list(zip(etas.tolist(), roots))
    if len(roots) == 1:
        return roots[0]
    # Lagrange extrapolation to eta = 0
    total = 0.0
    for i, ei in enumerate(etas):
        w = np.prod([-ej / (ei - ej) for j, ej in enumerate(etas) if j != i])
        total += w * roots[i]
    return complex(total)


def normalization_c0(ch, e_n, h=None, eta=0.0, agree=1e-6):
    """C0 = (1 - dC_n/dz)^(-1/2) at the pole, principal branch.

    On the real axis the derivative comes from the Cauchy expansion.  Above
    it (``eta > 0``) a central difference at two steps is used; they must
    agree to ``agree`` (relative) and are combined by Richardson.
    """
    if eta == 0.0:
        fp = _expansion_at(ch, e_n).value(e_n, "f", 1)
        return complex(np.sqrt(fp + 0j)) ** -1
    if h is None:
        h = 1e-3 * ch.basis.span
    z = complex(e_n) + 1j * eta

    def cd(step):
        return (ch.c(z + step) - ch.c(z - step)) / (2 * step)

    d1, d2 = cd(h), cd(h / 2)
    if abs(d1 - d2) > agree * max(1.0, abs(d2)) * 1e2:
        raise DerivativeUnstable(f"dC/dz differs between steps: {d1} vs {d2}")
    der = (4 * d2 - d1) / 3
    if abs(der - d2) > agree * max(1.0, abs(d2)):
        raise DerivativeUnstable(f"Richardson correction too large: {der} vs {d2}")
    return complex(np.sqrt(1.0 - der + 0j)) ** -1


def build_states(ch, e_n, c0, basis, n=None, eta=0.0):
    """|Psi_n> and |Psi'_n> from C0, Gt and M at the pole."""
    n = ch.n if n is None else n
    if eta == 0.0:
        exp = _expansion_at(ch, e_n)
        psi_prime = exp.value(e_n, "col")
        psi = np.conj(exp.value(e_n, "row"))
        return np.conj(c0) * psi, c0 * psi_prime
    z = complex(e_n) + 1j * eta
    c, m, _ = ch.state(z)
    g = 1.0 / (z - basis.energies - c)
    g[n] = 0.0
    psi_prime = g * m[:, n]
    psi_prime[n] = 1.0
    psi = np.conj(g) * np.conj(m[n, :])
    psi[n] = 1.0
    return np.conj(c0) * psi, c0 * psi_prime


def residue_matrix(g_of_z, e_n, radii=(1e-5, 2e-5), angle=np.pi / 2):
    """Extrapolate (z - E_n) G(z) to r -> 0 along a ray."""
    vals = []
    for r in radii:
        z = complex(e_n) + r * np.exp(1j * angle)
        vals.append((z - e_n) * g_of_z(z))
    r1, r2 = radii[:2]
    return (r2 * vals[0] - r1 * vals[1]) / (r2 - r1)


def residue_diagnostic(g_of_z, pole, radii=(1e-5, 2e-5), angle=np.pi / 2):
    res = residue_matrix(g_of_z, pole.energy, radii, angle)
    target = np.outer(pole.psi_prime, np.conj(pole.psi))
    return float(np.linalg.norm(res - target))


def analyse_level(ch, basis, n=None, broadening=(), check_residue=True):
    """Pole, C0, dressed vectors and residue defect for one level."""
    n = ch.n if n is None else n
    e = find_pole(ch, basis, n, broadening=broadening)
    its = getattr(ch, "last_iterations", 0)
    eta = 0.0
    if broadening:
        eta = float(min(broadening))
        e_eval = ch.broadened_roots[int(np.argmin(broadening))][1]
    else:
        e_eval = e
    c0 = normalization_c0(ch, e_eval, eta=eta)
    psi, psi_p = build_states(ch, e_eval, c0, basis, n, eta=eta)
    pole = PoleResult(n, e, c0, psi, psi_p, newton_iterations=its, broadening=tuple(broadening))
    if broadening:
        z = complex(e_eval) + 1j * eta
        residual = abs(e_eval - basis.energies[n] - ch.c(z))
    else:
        exp = ch.expansion
        residual = abs(exp.value(e, "f"))
        pole.diagnostics["cauchy_tail"] = exp.tail
        pole.diagnostics["ring_radius"] = exp.radius
        if check_residue:
            radii = (1e-5 * exp.radius, 2e-5 * exp.radius)
            pole.residue_defect = residue_diagnostic(exp.green, pole, radii)
    pole.diagnostics["pole_residual"] = float(residual)
    pole.diagnostics["overlap"] = complex(np.vdot(psi, psi_p)).real
    pole.diagnostics["psi_difference"] = float(np.linalg.norm(psi - psi_p))
    return pole


def stationarity_diagnostic(u_of_t, pole, times, state=None):
    """max_t || U(t)|Psi> - exp(-i E t)|Psi> ||."""
    psi = pole.psi if state is None else state
    worst = 0.0
    for t in np.atleast_1d(times):
        u = u_of_t(t)
        worst = max(worst, float(np.linalg.norm(u @ psi - np.exp(-1j * pole.energy * t) * psi)))
    return worst


def fit_decay_rate(times, occupation):
    """Least-squares slope of -log(occupation) against time."""
    t = np.asarray(times, dtype=float)
    y = -np.log(np.asarray(occupation, dtype=float))
    a = np.vstack([t, np.ones_like(t)]).T
    slope, _ = np.linalg.lstsq(a, y, rcond=None)[0]
    return float(slope)
