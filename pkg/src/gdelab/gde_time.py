"""Time-domain kernel march, evolution assembly and the Laplace cross-check.

For a time-translation-invariant model the Schrodinger-picture kernel is
split as ``S(tau) = -i K delta_+(tau) + R(tau)``, where ``K`` is the
constant effective interaction carried by the boundary datum (see
:func:`gdelab.gde_energy.effective_interaction`).  The unitarity relation

    tau S(tau) = int_{a + w + b = tau} S(a) F(w) S(b),   F(w) = w exp(-i H0 w)

then becomes, for the regular part,

    tau R(tau) = -K F(tau) K - i K (F * R)(tau) - i (R * F)(tau) K + (R * F * R)(tau)

with ``R(0) = -K^2``.  Since ``F(0) = 0`` the unknown ``R(tau_n)`` never
appears on the right with nonzero weight, so trapezoid quadrature gives an
explicit march in ``n``.  Interaction-picture cells are
``S~(t_j, t_i) = exp(i H0 t_j) S(t_j - t_i) exp(-i H0 t_i)``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import DistributionalKernel, InsufficientDamping, QuadratureBreakdown
from .gde_energy import effective_interaction
from .interactions import schrodinger_kernel

TRIANGLE_CAP = 400


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t0, t0 + step, ..., t_max``."""

    t0: float
    t_max: float
    step: float

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("step must be positive")
        if not self.t_max > self.t0:
            raise ValueError("t_max must exceed t0")
        ratio = (self.t_max - self.t0) / self.step
        if abs(ratio - round(ratio)) > 1e-12 * max(1.0, ratio):
            raise ValueError("(t_max - t0) / step must be an integer")

    @property
    def n_steps(self):
        return int(round((self.t_max - self.t0) / self.step))

    @property
    def nodes(self):
        return self.n_steps + 1

    @property
    def times(self):
        return self.t0 + self.step * np.arange(self.nodes)


@dataclass
class TimeKernel:
    """Kernel on a grid: local part ``K`` plus regular samples ``R(k step)``.

    ``filled`` counts the regular samples known so far (1 after seeding).
    ``interaction_band`` keeps ``H_int`` at separations 0 and ``step`` for
    reference.
    """

    grid: TimeGrid
    energies: np.ndarray
    local: np.ndarray
    regular: np.ndarray = field(repr=False)
    filled: int = 1
    interaction_band: np.ndarray = field(default=None, repr=False)
    relation_defect: dict = field(default_factory=dict)

    @property
    def dimension(self):
        return self.energies.size

    def cell(self, j, i):
        """Interaction-picture regular part ``S~(t_j, t_i)`` for ``j >= i``."""
        if j < i:
            raise ValueError("cells are defined for j >= i only")
        if j - i >= self.filled:
            raise ValueError("separation not yet propagated")
        t = self.grid.times
        left = np.exp(1j * self.energies * t[j])
        right = np.exp(-1j * self.energies * t[i])
        return left[:, None] * self.regular[j - i] * right[None, :]

    def triangle(self):
        """Dense lower triangle of interaction-picture cells (small grids)."""
        n = self.grid.nodes
        if n > TRIANGLE_CAP:
            raise ValueError(f"triangle export limited to {TRIANGLE_CAP} nodes")
        d = self.dimension
        out = np.zeros((n, n, d, d), dtype=complex)
        for j in range(n):
            for i in range(j + 1):
                out[j, i] = self.cell(j, i)
        return out


@dataclass
class EvolutionResult:
    grid: TimeGrid
    energies: np.ndarray
    u: np.ndarray = field(repr=False)
    unitarity_defect: np.ndarray = field(repr=False)

    def schrodinger(self, k):
        """``exp(-i H0 t_k) U_I(t_k)``."""
        phase = np.exp(-1j * self.energies * (self.grid.times[k] - self.grid.t0))
        return phase[:, None] * self.u[k]

    def max_defect(self):
        return float(self.unitarity_defect.max())

    def to_csv(self, path, elements=None):
        d = self.energies.size
        if elements is None:
            elements = [(i, j) for i in range(d) for j in range(d)]
        header = ["t", "defect"]
        for i, j in elements:
            header += [f"re_u{i}{j}", f"im_u{i}{j}"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for k, t in enumerate(self.grid.times):
                us = self.schrodinger(k)
                row = [repr(float(t)), repr(float(self.unitarity_defect[k]))]
                for i, j in elements:
                    row += [repr(float(us[i, j].real)), repr(float(us[i, j].imag))]
                w.writerow(row)


def seed_kernel(model, grid, basis, zb=None, seed="born"):
    """Local part and ``R(0) = -K^2`` for a nonlocal model.

    ``zb`` defaults to the energy solver's boundary point, so both domains
    describe the same solution.
    """
    if model.is_local:
        raise DistributionalKernel("instantaneous kernels are distributional; use a theta > 0 model")
    if model.dimension != basis.dimension:
        raise ValueError("model and basis dimensions differ")
    if zb is None:
        zb = 1j * float(np.abs(basis.energies).max() + 10 * basis.span)
    k = effective_interaction(model, basis, zb, seed)
    d = basis.dimension
    regular = np.zeros((grid.nodes, d, d), dtype=complex)
    regular[0] = -k @ k
    band = np.array([schrodinger_kernel(model, 0.0), schrodinger_kernel(model, grid.step)])
    return TimeKernel(grid, np.asarray(basis.energies, dtype=float), k, regular, 1, band)


def _free_factor(energies, step, count):
    w = step * np.arange(count)
    return w[:, None] * np.exp(-1j * w[:, None] * energies[None, :])


def _relation_rhs(k, r, f, step, n, stride=1):
    """Right side of the regular-part relation at ``n`` on a sub-grid."""
    idx = np.arange(0, n + 1, stride)
    h = step * stride
    rs = r[idx]
    fs = f[idx]
    c = np.ones(idx.size)
    c[0] = 0.5
    m = idx.size - 1
    # single convolutions: sum_b c_b F(n-b) R(b) and sum_a c_a R(a) F(n-a)
    fr = np.einsum("b,bi,bij->ij", c, fs[::-1], rs)
    rf = np.einsum("a,aij,aj->ij", c, rs, fs[::-1])
    # double convolution: sum_j c_j A(m-j) R(j), A(p) = sum_i c_i R(i) F(p-i)
    total = np.zeros_like(k)
    for j in range(m):
        p = m - j
        a = np.einsum("i,iab,ib->ab", c[:p + 1], rs[:p + 1], fs[p::-1])
        total += c[j] * a @ rs[j]
    fn = fs[-1]
    return (-(k * fn[None, :]) @ k - 1j * h * k @ fr - 1j * h * rf @ k + h * h * total)


def propagate_kernel(kernel, defect_limit=1e-2, checks=8):
    """March the regular part over every separation of the grid.

    Afterwards the relation is re-evaluated with step ``2 * step`` at
    ``checks`` separations; the scaled difference (second order in the
    step) is stored in ``relation_defect`` and must stay under
    ``defect_limit``.
    """
    grid = kernel.grid
    n_all = grid.nodes
    h = grid.step
    e = kernel.energies
    k = kernel.local
    r = kernel.regular
    f = _free_factor(e, h, n_all)
    c = np.ones(n_all)
    c[0] = 0.5
    d = e.size
    a_acc = np.zeros((n_all, d, d), dtype=complex)   # A(p) = sum_i c_i R(i) F(p - i)
    b_acc = np.zeros((n_all, d, d), dtype=complex)   # B(p) = sum_i c_i F(p - i) R(i)
    for n in range(kernel.filled, n_all):
        cr = c[:n, None, None] * r[:n]
        fr = f[n:0:-1]
        a_acc[n] = np.sum(cr * fr[:, None, :], axis=0)
        b_acc[n] = np.sum(fr[:, :, None] * cr, axis=0)
        conv = np.einsum("j,jab,jbc->ac", c[:n], a_acc[n:0:-1], r[:n])
        rhs = (-(k * f[n][None, :]) @ k - 1j * h * k @ b_acc[n] - 1j * h * a_acc[n] @ k
               + h * h * conv)
        r[n] = rhs / (n * h)
        if not np.all(np.isfinite(r[n])):
            raise QuadratureBreakdown(f"non-finite kernel at separation {n}")
    kernel.filled = n_all
    kernel.relation_defect = relation_defect(kernel, checks)
    worst = max(kernel.relation_defect.values(), default=0.0)
    if worst > defect_limit:
        raise QuadratureBreakdown(f"relation defect {worst:.3e} exceeds {defect_limit:.1e}")
    return kernel


def relation_defect(kernel, checks=8):
    """Scaled mismatch between the march and a step-doubled quadrature."""
    n_all = kernel.filled
    f = _free_factor(kernel.energies, kernel.grid.step, n_all)
    evens = np.arange(4, n_all, 2)
    if evens.size == 0:
        return {}
    pick = np.unique(evens[np.linspace(0, evens.size - 1, min(checks, evens.size)).astype(int)])
    out = {}
    for n in pick:
        lhs = n * kernel.grid.step * kernel.regular[n]
        rhs = _relation_rhs(kernel.local, kernel.regular, f, kernel.grid.step, int(n), 2)
        out[int(n)] = float(np.linalg.norm(lhs - rhs) / (1.0 + np.linalg.norm(lhs)))
    return out


def _cumtrapz(values, h):
    out = np.zeros_like(values)
    out[1:] = np.cumsum(0.5 * h * (values[1:] + values[:-1]), axis=0)
    return out


def assemble_evolution(kernel):
    """Interaction-picture ``U(t, t0) = I + double integral of S~`` by trapezoid."""
    if kernel.filled < kernel.grid.nodes:
        raise ValueError("propagate the kernel before assembling U")
    grid = kernel.grid
    h = grid.step
    e = kernel.energies
    s = h * np.arange(grid.nodes)
    tt = grid.times - grid.t0
    # J(t) = int_0^t R(s) exp(i H0 s) ds ; inner integral = exp(iH0 t) J(t) exp(-iH0 t)
    j = _cumtrapz(kernel.regular * np.exp(1j * e[None, None, :] * s[:, None, None]), h)
    rot = np.exp(1j * e[None, :] * tt[:, None])
    inner = rot[:, :, None] * j * np.conj(rot)[:, None, :]
    local = -1j * rot[:, :, None] * kernel.local[None] * np.conj(rot)[:, None, :]
    u = np.eye(e.size)[None] + _cumtrapz(local + inner, h)
    eye = np.eye(e.size)
    defect = np.array([np.linalg.norm(x.conj().T @ x - eye, 2) for x in u])
    return EvolutionResult(grid, e, u, defect)


def laplace_crosscheck(kernel, z, min_damping=20.0):
    """``T(z) = K + i int_0^t_max exp(i z tau) R(tau) d tau`` by trapezoid."""
    z = complex(z)
    span = kernel.grid.t_max - kernel.grid.t0
    if z.imag * span < min_damping:
        raise InsufficientDamping(f"Im z * t_max = {z.imag * span:.3g} < {min_damping}")
    if kernel.filled < kernel.grid.nodes:
        raise ValueError("propagate the kernel first")
    h = kernel.grid.step
    tau = h * np.arange(kernel.grid.nodes)
    w = np.exp(1j * z * tau)
    c = np.full(tau.size, h)
    c[0] = c[-1] = 0.5 * h
    return kernel.local + 1j * np.einsum("k,kij->ij", c * w, kernel.regular)
