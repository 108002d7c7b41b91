"""Scalar self-energy models and the second-order-pole shift integral.

The channel self-energy is

    S(E) = (alpha / 4 pi) * E * ln((m^2 - (E + i0)^2) / m^2) * R(E),
    R(E) = L^4 / (L^4 + E^4)   (regulated)  or  1  (unregulated),

and the dynamical correction is the line integral

    dD = -(d0 / 2 pi i) * int_{Im E = eps, |Re E| <= W} S(E) / (e0 - E)^2 dE

with ``d0 = S(e0 + i0)``.  The line passes above the double pole at
``e0 + i0``.  In the upper half plane the regulated S is analytic apart
from the regulator poles ``L exp(i pi / 4)`` and ``L exp(3 i pi / 4)``, so
the integral also has a closed form as a residue sum
(:func:`regulator_pole_shift`), which serves as an independent check.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.integrate import quad

from .errors import (BranchViolation, NotApplicable, NotRegulated, RegionExit,
                     WindowUnstable)

ASYMPTOTIC = "asymptotic"
REGULATED = "regulated"
SCHEMA = "gdelab.shift/1"


@dataclass(frozen=True)
class SelfEnergyModel:
    alpha: float = 1 / 137.036
    mass: float = 1.0
    family: str = REGULATED
    cutoff: float | None = 20.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not self.mass > 0:
            raise ValueError("mass must be positive")
        if self.family not in (ASYMPTOTIC, REGULATED):
            raise ValueError(f"unknown self-energy family {self.family!r}")
        if self.family == REGULATED and not (self.cutoff is not None and self.cutoff > 0):
            raise ValueError("a regulated model needs a positive cutoff")

    @property
    def regulated(self):
        return self.family == REGULATED

    def with_alpha(self, alpha):
        return SelfEnergyModel(alpha, self.mass, self.family, self.cutoff)

    def with_cutoff(self, cutoff):
        return SelfEnergyModel(self.alpha, self.mass, self.family, cutoff)


def _log_factor(m, e):
    if e.imag == 0.0:
        w = (m * m - e.real * e.real) / (m * m)
        if w > 0:
            return complex(np.log(w))
        if w == 0:
            raise BranchViolation(f"E={e.real} sits on the branch point")
        return complex(np.log(-w), -np.pi * np.sign(e.real))
    return complex(np.log((m * m - e * e) / (m * m)))


def sigma_eval(model, e):
    """S(E) for Im E >= 0 (real E read as E + i0)."""
    e = complex(e)
    if e.imag < 0:
        raise BranchViolation(f"S(E) is defined from above the real axis, got {e}")
    if model.regulated and e.imag > 0.5 * model.cutoff:
        raise BranchViolation(f"Im E = {e.imag} beyond half the cutoff")
    if e == 0:
        return 0j
    val = model.alpha / (4 * np.pi) * e * _log_factor(model.mass, e)
    if model.regulated:
        lam4 = model.cutoff ** 4
        val *= lam4 / (lam4 + e ** 4)
    return complex(val)


def sigma_derivative(model, e0, steps=(1e-4, 1e-5), agree=1e-6):
    """Central-difference S'(e0) at two steps, cross-checked."""
    vals = [(sigma_eval(model, e0 + h) - sigma_eval(model, e0 - h)) / (2 * h) for h in steps]
    if abs(vals[0] - vals[1]) > agree * max(abs(vals[1]), 1e-300):
        raise ValueError(f"finite-difference derivative unstable: {vals}")
    return vals[-1]


def leading_shift(model, e0):
    return sigma_eval(model, complex(float(e0)))


def iterated_shift(model, e0):
    """``(E', S(E'))`` with ``E' = e0 + S(e0 + i0)``."""
    d0 = leading_shift(model, e0)
    e_iter = e0 + d0
    if e_iter.imag < 0:
        raise RegionExit(f"E' = {e_iter} left the closed upper half plane")
    return e_iter, sigma_eval(model, e_iter)


def fixed_point(model, e0, tol=1e-15, maxiter=50):
    """Newton solve of E = e0 + S(E) (the full pole equation)."""
    e = complex(e0)
    for _ in range(maxiter):
        h = 1e-6 * max(1.0, abs(e))
        ds = (sigma_eval(model, e + h) - sigma_eval(model, e - h)) / (2 * h)
        step = (e - e0 - sigma_eval(model, e)) / (1 - ds)
        e -= step
        if abs(step) <= tol * max(1.0, abs(e)):
            return e
    raise RegionExit("fixed-point iteration did not settle")


def _line_integral(model, e0, window, eps, rtol=1e-12):
    """int S(x + i eps) / (e0 - x - i eps)^2 dx over [-window, window]."""
    m = model.mass

    def f(x):
        z = complex(x, eps)
        return sigma_eval(model, z) / (e0 - z) ** 2

    cuts = [-window, window, -m, m, e0]
    if model.regulated:
        cuts += [-model.cutoff, model.cutoff]
    pts = np.unique(np.clip(cuts, -window, window))
    total = 0j
    for a, b in zip(pts[:-1], pts[1:]):
        kw = dict(limit=400, epsabs=0.0, epsrel=rtol)
        inner = [p for p in (e0 - 10 * eps, e0 + 10 * eps) if a < p < b]
        re = quad(lambda x: f(x).real, a, b, points=inner or None, **kw)[0]
        im = quad(lambda x: f(x).imag, a, b, points=inner or None, **kw)[0]
        total += complex(re, im)
    return total


@dataclass
class ContourDetail:
    value: complex
    window: float
    offsets: tuple
    doubling_change: float
    partials: dict = field(default_factory=dict)


def dynamical_shift_contour(model, e0, window=None, offset=None, stability=1e-6,
                            max_doublings=6, details=False):
    """dD for a regulated model.

    The window starts at ``10 * cutoff`` and is doubled until the result
    moves by at most ``stability`` (relative); the line offset is
    extrapolated to zero from ``offset`` and ``offset / 2``.
    """
    if not model.regulated:
        raise NotRegulated("the shift integral diverges without a regulator; see divergence_demo")
    m = model.mass
    if window is None:
        window = 10 * model.cutoff
    if window < 10 * model.cutoff:
        raise ValueError("window must be at least ten cutoffs")
    if offset is None:
        offset = 1e-3 * m
    if not 1e-4 * m <= offset <= 1e-2 * m:
        raise ValueError("offset must lie in [1e-4, 1e-2] * mass")
    d0 = leading_shift(model, e0)
    pref = -d0 / (2j * np.pi)

    def at(w):
        i1 = _line_integral(model, e0, w, offset)
        i2 = _line_integral(model, e0, w, offset / 2)
        return pref * (2 * i2 - i1)

    partials = {window: at(window)}
    change = np.inf
    for _ in range(max_doublings):
        nxt = 2 * window
        partials[nxt] = at(nxt)
        change = abs(partials[nxt] - partials[window]) / max(abs(partials[nxt]), 1e-300)
        window = nxt
        if change <= stability:
            break
    else:
        raise WindowUnstable(f"window doubling still changes the result by {change:.2e}")
    value = partials[window]
    if details:
        return ContourDetail(value, window, (offset, offset / 2), float(change), partials)
    return value


def regulator_pole_shift(model, e0):
    """Closed form of dD: ``-d0`` times the regulator-pole residue sum."""
    if not model.regulated:
        raise NotRegulated("no regulator poles in the unregulated family")
    lam = model.cutoff
    bare = SelfEnergyModel(model.alpha, model.mass, ASYMPTOTIC, None)
    total = 0j
    for phase in (np.pi / 4, 3 * np.pi / 4):
        ek = lam * np.exp(1j * phase)
        total += sigma_eval(bare, ek) * lam ** 4 / (4 * ek ** 3) / (e0 - ek) ** 2
    return -leading_shift(model, e0) * total


@dataclass
class DivergenceRecord:
    windows: list
    partials: list
    increasing: bool
    increments_ok: bool
    log_sq_correlation: float
    log_correlation: float
    status: str

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["R", "re_I", "im_I"])
            for r, v in zip(self.windows, self.partials):
                w.writerow([repr(float(r)), repr(float(v.real)), repr(float(v.imag))])

    def to_dict(self):
        return {
            "windows": [float(r) for r in self.windows],
            "partials": [[float(v.real), float(v.imag)] for v in self.partials],
            "increasing": self.increasing,
            "increments_ok": self.increments_ok,
            "log_sq_correlation": self.log_sq_correlation,
            "log_correlation": self.log_correlation,
            "status": self.status,
        }


def partial_integrals(model, e0, windows, offset=None):
    """Raw ``int S / (e0 - E)^2`` over growing windows (any family)."""
    offset = 1e-3 * model.mass if offset is None else offset
    return [_line_integral(model, e0, float(w), offset) for w in windows]


def divergence_demo(model, e0, windows=None, offset=None):
    """Partial integrals of the unregulated family over growing windows."""
    if model.regulated:
        raise NotApplicable("divergence_demo takes the unregulated family")
    if windows is None:
        windows = [1e2 * model.mass, 1e3 * model.mass, 1e4 * model.mass]
    windows = sorted(float(w) for w in windows)
    vals = partial_integrals(model, e0, windows, offset)
    mags = np.abs(vals)
    steps = np.diff(mags)
    increasing = bool(np.all(steps > 0))
    increments_ok = bool(np.all(steps[1:] >= 0.9 * steps[:-1])) if steps.size > 1 else increasing
    lr = np.log(np.asarray(windows) / model.mass)
    corr2 = float(np.corrcoef(lr ** 2, mags)[0, 1]) if len(windows) > 2 else float("nan")
    corr1 = float(np.corrcoef(lr, mags)[0, 1]) if len(windows) > 2 else float("nan")
    status = "divergent" if increasing else "inconclusive"
    return DivergenceRecord(windows, vals, increasing, increments_ok, corr2, corr1, status)


@dataclass
class ShiftReport:
    e0: float
    delta0: complex
    e_iter: complex
    delta2: complex
    deltaD: complex
    a0: complex | None
    divergence: str
    window: float
    doubling_change: float
    derivative_ratio: complex | None
    pole_sum: complex
    a0_spread: dict = field(default_factory=dict)

    def to_dict(self):
        def c(v):
            return None if v is None else [float(complex(v).real), float(complex(v).imag)]
        out = asdict(self)
        for k in ("delta0", "e_iter", "delta2", "deltaD", "a0", "derivative_ratio", "pole_sum"):
            out[k] = c(getattr(self, k))
        out["a0_spread"] = {str(k): c(v) for k, v in self.a0_spread.items()}
        out["schema"] = SCHEMA
        return out

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)


def _a0(model, d0, dd):
    if abs(d0) == 0:
        return None
    return dd / (model.alpha ** 3 * d0)


def scaling_report(model, e0, cutoff_factors=(0.5, 1.0, 2.0)):
    """Leading, iterated and dynamical shifts plus the A0 spread over cutoffs."""
    if not model.regulated:
        raise NotRegulated("scaling_report needs the regulated family")
    d0 = leading_shift(model, e0)
    e_iter, d2 = iterated_shift(model, e0)
    if abs(d0) == 0:
        det = ContourDetail(0j, 10 * model.cutoff, (), 0.0)
    else:
        det = dynamical_shift_contour(model, e0, details=True)
    ratio = None
    if abs(d0) > 0:
        ratio = det.value / (d0 * sigma_derivative(model, e0))
    spread = {}
    for f in cutoff_factors:
        sub = model.with_cutoff(model.cutoff * f)
        dd = det.value if f == 1.0 else (
            0j if abs(d0) == 0 else dynamical_shift_contour(sub, e0))
        spread[float(sub.cutoff)] = _a0(sub, d0, dd)
    return ShiftReport(float(e0), d0, e_iter, d2, det.value, _a0(model, d0, det.value),
                       "converged", det.window, det.doubling_change, ratio,
                       regulator_pole_shift(model, e0), spread)
