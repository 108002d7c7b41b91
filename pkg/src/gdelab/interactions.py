"""Instantaneous and nonlocal-in-time interaction models.

Normalization: the Schrodinger-picture kernel ``K(tau)`` enters the boundary
operator through ``B(z) = i * int_0^inf exp(i z tau) K(tau) dtau``.  All
constant factors are absorbed into ``K`` so that the instantaneous limit of
every family gives ``B(z) = H_I`` identically.  For the exponential family

    K(tau) = -i g / theta * exp(-tau / theta) |phi><phi|
    B(z)   = g |phi><phi| / (1 - i z theta)
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson, trapezoid

from .errors import (DistributionalKernel, LowerHalfPlane, NotInstantaneous,
                     QuadratureFailure)

INSTANTANEOUS = "instantaneous"
SEPARABLE_EXPONENTIAL = "separable_exponential"
TABULATED = "tabulated"
KINDS = (INSTANTANEOUS, SEPARABLE_EXPONENTIAL, TABULATED)


@dataclass(frozen=True)
class InteractionModel:
    kind: str
    h_matrix: np.ndarray | None = field(default=None, repr=False)
    coupling: float = 0.0
    form_vector: np.ndarray | None = field(default=None, repr=False)
    duration: float = 0.0
    tau: np.ndarray | None = field(default=None, repr=False)
    kernel_samples: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown interaction kind {self.kind!r}")
        if self.kind == INSTANTANEOUS:
            h = np.asarray(self.h_matrix, dtype=complex)
            if h.ndim != 2 or h.shape[0] != h.shape[1]:
                raise ValueError("h_matrix must be square")
            if np.abs(h - h.conj().T).max(initial=0.0) > 1e-12:
                raise ValueError("h_matrix must be Hermitian")
            object.__setattr__(self, "h_matrix", h)
        elif self.kind == SEPARABLE_EXPONENTIAL:
            phi = np.asarray(self.form_vector, dtype=complex)
            if abs(np.linalg.norm(phi) - 1.0) > 1e-12:
                raise ValueError("form_vector must have unit norm")
            if not self.duration >= 0:
                raise ValueError("duration theta must be nonnegative")
            object.__setattr__(self, "form_vector", phi)
        else:
            tau = np.asarray(self.tau, dtype=float)
            k = np.asarray(self.kernel_samples, dtype=complex)
            if tau.ndim != 1 or tau.size < 3 or tau[0] != 0 or np.any(np.diff(tau) <= 0):
                raise ValueError("tau grid must start at 0 and increase strictly")
            if k.shape[0] != tau.size or k.ndim != 3 or k.shape[1] != k.shape[2]:
                raise ValueError("kernel_samples must have shape (len(tau), d, d)")
            object.__setattr__(self, "tau", tau)
            object.__setattr__(self, "kernel_samples", k)

    @classmethod
    def instantaneous(cls, h_matrix):
        return cls(INSTANTANEOUS, h_matrix=h_matrix)

    @classmethod
    def separable(cls, coupling, form_vector, duration=0.0):
        return cls(SEPARABLE_EXPONENTIAL, coupling=float(coupling),
                   form_vector=form_vector, duration=float(duration))

    @classmethod
    def tabulated(cls, tau, kernel_samples):
        return cls(TABULATED, tau=tau, kernel_samples=kernel_samples)

    @property
    def dimension(self):
        if self.kind == INSTANTANEOUS:
            return self.h_matrix.shape[0]
        if self.kind == SEPARABLE_EXPONENTIAL:
            return self.form_vector.size
        return self.kernel_samples.shape[1]

    @property
    def is_local(self):
        return self.kind == INSTANTANEOUS or (
            self.kind == SEPARABLE_EXPONENTIAL and self.duration == 0.0)

    def rank_one(self):
        """Return ``(b, phi)`` with ``B = b(z)|phi><phi|``, or None."""
        if self.kind == SEPARABLE_EXPONENTIAL:
            return self.coupling, self.form_vector
        if self.kind == INSTANTANEOUS:
            w, v = np.linalg.eigh(self.h_matrix)
            big = np.abs(w) > 1e-12 * max(1.0, np.abs(w).max())
            if big.sum() == 1:
                i = int(np.flatnonzero(big)[0])
                return float(w[i]), v[:, i]
            if big.sum() == 0:
                return 0.0, np.eye(self.dimension, dtype=complex)[0]
        return None

    def projector_matrix(self):
        phi = self.form_vector
        return np.outer(phi, phi.conj())


def b_of_z(model, z, rtol=1e-8):
    """Boundary operator B(z) for Im z > 0."""
    z = complex(z)
    if z.imag <= 0:
        raise LowerHalfPlane(f"B(z) needs Im z > 0, got {z}")
    if model.kind == INSTANTANEOUS:
        return model.h_matrix.copy()
    if model.kind == SEPARABLE_EXPONENTIAL:
        return model.coupling * model.projector_matrix() / (1.0 - 1j * z * model.duration)
    return _tabulated_transform(model, z, rtol)


def _tabulated_transform(model, z, rtol):
    tau, k = model.tau, model.kernel_samples
    w = np.exp(1j * z * tau)[:, None, None]
    tail = abs(np.exp(1j * z * tau[-1])) * np.abs(k[-1]).max()
    scale = max(np.abs(k).max() * np.diff(tau).min(), 1e-300)
    if tail > rtol * max(scale, 1.0):
        raise QuadratureFailure("kernel not damped at the end of the tau grid")
    fine = 1j * simpson(w * k, x=tau, axis=0)
    coarse = 1j * trapezoid(w * k, x=tau, axis=0)
    ref = max(np.abs(fine).max(), 1e-300)
    if np.abs(fine - coarse).max() > max(rtol * ref, 1e-14) * 1e4:
        raise QuadratureFailure("Simpson and trapezoid transforms disagree")
    return fine


def schrodinger_kernel(model, tau):
    """Schrodinger-picture interaction kernel K(tau), tau >= 0."""
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    if model.kind == INSTANTANEOUS or (
            model.kind == SEPARABLE_EXPONENTIAL and model.duration == 0.0):
        raise DistributionalKernel("an instantaneous kernel is a delta function")
    if model.kind == SEPARABLE_EXPONENTIAL:
        th = model.duration
        return -1j * model.coupling / th * np.exp(-tau / th) * model.projector_matrix()
    t, k = model.tau, model.kernel_samples
    if tau > t[-1]:
        return np.zeros_like(k[0])
    i = min(int(np.searchsorted(t, tau, side="right")) - 1, t.size - 2)
    w = (tau - t[i]) / (t[i + 1] - t[i])
    return (1 - w) * k[i] + w * k[i + 1]


def total_hamiltonian(model, basis):
    """H = H0 + H_I; defined for instantaneous interactions only."""
    if not model.is_local:
        raise NotInstantaneous("no total Hamiltonian exists for a nonlocal-in-time interaction")
    if model.kind == INSTANTANEOUS:
        h_i = model.h_matrix
    else:
        h_i = model.coupling * model.projector_matrix()
    return basis.h0() + h_i


def interaction_matrix(model):
    """H_I of a local model (the z-independent boundary operator)."""
    if model.kind == INSTANTANEOUS:
        return model.h_matrix
    if model.kind == SEPARABLE_EXPONENTIAL and model.duration == 0.0:
        return model.coupling * model.projector_matrix()
    raise NotInstantaneous("interaction is nonlocal in time")


def random_hermitian(rng, dimension, norm):
    """Random Hermitian matrix with spectral norm ``norm``."""
    a = rng.standard_normal((dimension, dimension)) + 1j * rng.standard_normal((dimension, dimension))
    h = (a + a.conj().T) / 2
    return h * (norm / np.linalg.norm(h, 2))


def read_kernel_csv(path):
    """Read a tabulated kernel: ``tau, re_00, im_00, re_01, im_01, ...``."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    if rows and not _is_number(rows[0][0]):
        rows = rows[1:]
    data = np.array(rows, dtype=float)
    ncomp = (data.shape[1] - 1) // 2
    d = int(round(np.sqrt(ncomp)))
    if d * d != ncomp or data.shape[1] != 1 + 2 * ncomp:
        raise ValueError("CSV columns do not form a square complex matrix")
    k = (data[:, 1::2] + 1j * data[:, 2::2]).reshape(-1, d, d)
    return InteractionModel.tabulated(data[:, 0], k)


def write_kernel_csv(path, model):
    d = model.dimension
    header = ["tau"]
    for i in range(d):
        for j in range(d):
            header += [f"re_{i}{j}", f"im_{i}{j}"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for t, k in zip(model.tau, model.kernel_samples):
            flat = k.ravel()
            row = [repr(float(t))]
            for c in flat:
                row += [repr(float(c.real)), repr(float(c.imag))]
            w.writerow(row)


def _is_number(s):
    try:
        float(s)
    except ValueError:
        return False
    return True
