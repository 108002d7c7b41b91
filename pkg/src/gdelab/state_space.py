"""Free eigenbasis, diagonal resolvents, projectors and z-plane contours.

Every operator in gdelab is a dense ``(d, d)`` complex numpy array expressed
in the eigenbasis of the unperturbed Hamiltonian ``H0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import PoleProximity, UnknownLabel

MAX_DIMENSION = 512


@dataclass(frozen=True)
class FreeBasis:
    """Unperturbed spectrum ``E_n`` in nondecreasing order (hbar = 1)."""

    energies: np.ndarray
    max_dimension: int = MAX_DIMENSION
    pole_tol: float | None = None

    def __post_init__(self):
        e = np.asarray(self.energies, dtype=float).copy()
        if e.ndim != 1 or e.size < 2:
            raise ValueError("a free basis needs at least two levels")
        if e.size > self.max_dimension:
            raise ValueError(f"dimension {e.size} exceeds cap {self.max_dimension}")
        if not np.all(np.isfinite(e)):
            raise ValueError("energies must be finite")
        if np.any(np.diff(e) < 0):
            raise ValueError("energies must be listed in nondecreasing order")
        e.setflags(write=False)
        object.__setattr__(self, "energies", e)

    @classmethod
    def ladder(cls, count, start, spacing, extra=()):
        """Equally spaced levels plus optional isolated ones, sorted.

        A dense ladder stands in for a continuum: the cut is replaced by a
        string of poles with separation ``spacing``.
        """
        levels = start + spacing * np.arange(count)
        return cls(np.sort(np.concatenate([levels, np.asarray(extra, dtype=float)])))

    @property
    def dimension(self):
        return self.energies.size

    @property
    def labels(self):
        return range(self.dimension)

    @property
    def span(self):
        s = float(self.energies[-1] - self.energies[0])
        return s if s > 0 else 1.0

    @property
    def tolerance(self):
        return self.pole_tol if self.pole_tol is not None else 1e-8 * self.span

    def h0(self):
        return np.diag(self.energies).astype(complex)

    def gap(self, n):
        """Distance from level n to its nearest neighbour."""
        e = self.energies
        d = np.abs(np.delete(e, n) - e[n])
        return float(d.min())

    def min_gap(self):
        return float(np.diff(self.energies).min())

    def check_label(self, n):
        if not (isinstance(n, (int, np.integer)) and 0 <= n < self.dimension):
            raise UnknownLabel(f"label {n!r} not in 0..{self.dimension - 1}")
        return int(n)


def _denominators(basis, z):
    d = complex(z) - basis.energies
    dist = np.abs(d).min()
    if dist < basis.tolerance:
        raise PoleProximity(f"z={z} lies within {dist:.3e} of a free level")
    return d


def free_resolvent(basis, z):
    """G0(z) = (z - H0)^-1 as a dense diagonal matrix."""
    return np.diag(1.0 / _denominators(basis, z))


def squared_resolvent(basis, z):
    return np.diag(1.0 / _denominators(basis, z) ** 2)


def projector(basis, n):
    """Return ``(P_n, 1 - P_n)`` for the free state ``|n>``."""
    n = basis.check_label(n)
    p = np.zeros((basis.dimension, basis.dimension), dtype=complex)
    p[n, n] = 1.0
    return p, np.eye(basis.dimension, dtype=complex) - p


@dataclass(frozen=True)
class ZContour:
    """Polyline in the upper half plane, boundary point first.

    ``sample_points[0]`` is where the large-|z| boundary datum is imposed;
    the remaining points run inward along ``Im z = imag_offset``.
    """

    start_radius: float
    imag_offset: float
    sample_points: np.ndarray = field(repr=False)
    direction: str = "inward"

    def __post_init__(self):
        pts = np.asarray(self.sample_points, dtype=complex).copy()
        if pts.ndim != 1 or pts.size < 2:
            raise ValueError("a contour needs at least two points")
        if self.imag_offset <= 0:
            raise ValueError("imag_offset must be positive")
        if np.any(pts.imag < self.imag_offset * (1 - 1e-12)):
            raise ValueError("contour dips below Im z = imag_offset")
        pts.setflags(write=False)
        object.__setattr__(self, "sample_points", pts)

    @property
    def boundary_point(self):
        return complex(self.sample_points[0])

    def __len__(self):
        return self.sample_points.size

    @classmethod
    def standard(cls, basis, start_radius=None, imag_offset=None, n_points=50,
                 margin=None, boundary_phase=np.pi / 2, line_extent=None):
        """Boundary point at ``start_radius * exp(i phase)`` then a line.

        The line runs from ``E_max + extent`` down to ``E_min - extent`` at
        height ``imag_offset`` (default 1e-3 of the spectral span).
        """
        span = basis.span
        e = basis.energies
        if imag_offset is None:
            imag_offset = 1e-3 * span
        if margin is None:
            margin = 0.5 * span
        if start_radius is None:
            start_radius = float(np.abs(e).max() + 10 * span)
        if start_radius <= np.abs(e).max() + margin:
            raise ValueError("start_radius must exceed max|E_n| by the margin")
        if line_extent is None:
            line_extent = 0.25 * span
        zb = start_radius * np.exp(1j * boundary_phase)
        if zb.imag < imag_offset:
            zb = zb.real + 1j * imag_offset
        line = np.linspace(e[-1] + line_extent, e[0] - line_extent, n_points - 1) + 1j * imag_offset
        return cls(start_radius, imag_offset, np.concatenate([[zb], line]))

    @classmethod
    def line(cls, basis, energies, imag_offset, start_radius, boundary_phase=np.pi / 2):
        """Boundary point followed by an explicit grid of real parts."""
        zb = start_radius * np.exp(1j * boundary_phase)
        pts = np.asarray(energies, dtype=float) + 1j * imag_offset
        return cls(start_radius, imag_offset, np.concatenate([[zb], pts]))
