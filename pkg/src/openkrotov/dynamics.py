"""Time grids, control fields and piecewise-constant Lindblad propagation.

The field is held constant on each interval at its midpoint sample and every
interval is propagated with the exact exponential of the Liouvillian
(evaluated to machine precision by the compiled or numpy kernel).

Internally operators are carried as real coordinates in the orthonormal
Hermitian basis returned by :func:`hermitian_basis`. In those coordinates the
Liouvillian is a real matrix, co-states evolve backward under its transpose,
and the pairing Tr[phi rho] is a plain dot product.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np

from . import _backend
from .quantum_core import (
    NoiseChannel,
    as_matrix,
    hamiltonian_superop,
    is_hermitian,
    liouvillian,
)


@dataclass(frozen=True)
class TimeGrid:
    T: float = 10.0
    N: int = 2000

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 2:
            raise ValueError(f"need N >= 2 intervals, got {self.N}")
        if not self.T > 0:
            raise ValueError(f"horizon must be positive, got {self.T}")
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "T", float(self.T))

    @property
    def dt(self):
        return self.T / self.N

    @property
    def nodes(self):
        return np.linspace(0.0, self.T, self.N + 1)

    @property
    def midpoints(self):
        return (np.arange(self.N) + 0.5) * self.dt


@dataclass
class ControlField:
    """Piecewise-constant control on ``grid`` (one sample per interval)."""

    grid: TimeGrid
    samples: np.ndarray
    envelope: np.ndarray = None
    reference: np.ndarray = None

    def __post_init__(self):
        n = self.grid.N
        self.samples = np.array(self.samples, dtype=float)
        if self.envelope is None:
            self.envelope = np.ones(n)
        self.envelope = np.array(self.envelope, dtype=float)
        if self.reference is None:
            self.reference = np.zeros(n)
        self.reference = np.array(self.reference, dtype=float)
        for name in ("samples", "envelope", "reference"):
            arr = getattr(self, name)
            if arr.shape != (n,):
                raise ValueError(f"{name} must have {n} samples, got shape {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} has non-finite values")
        if np.any(self.envelope < 0) or np.any(self.envelope > 1):
            raise ValueError("envelope must lie in [0, 1]")

    def with_samples(self, samples, reference=None):
        return ControlField(
            self.grid,
            samples,
            self.envelope,
            self.samples if reference is None else reference,
        )

    def copy(self):
        return ControlField(self.grid, self.samples.copy(), self.envelope.copy(),
                            self.reference.copy())


@dataclass
class Trajectory:
    """Operator snapshots at the N+1 grid nodes."""

    grid: TimeGrid
    states: np.ndarray  # (N+1, d, d)

    def __getitem__(self, k):
        return self.states[k]

    def __len__(self):
        return len(self.states)

    @property
    def final(self):
        return self.states[-1]

    def traces(self):
        return np.einsum("kii->k", self.states)

    def populations(self):
        return np.real(np.einsum("kii->ki", self.states))


@lru_cache(maxsize=16)
def hermitian_basis(dim):
    """Orthonormal Hermitian operator basis as a (dim^2, dim^2) matrix of
    column-stacked basis elements.

    Order: diagonal projectors, then for each pair a<b the symmetric and
    antisymmetric combinations (E_ab + E_ba)/sqrt2 and i(E_ab - E_ba)/sqrt2.
    """
    cols = []
    for a in range(dim):
        b_ = np.zeros((dim, dim), dtype=complex)
        b_[a, a] = 1.0
        cols.append(b_)
    s = 1.0 / np.sqrt(2.0)
    for a in range(dim):
        for b in range(a + 1, dim):
            sym = np.zeros((dim, dim), dtype=complex)
            sym[a, b] = sym[b, a] = s
            asym = np.zeros((dim, dim), dtype=complex)
            asym[a, b] = 1j * s
            asym[b, a] = -1j * s
            cols += [sym, asym]
    basis = np.stack([c.reshape(-1, order="F") for c in cols], axis=1)
    basis.setflags(write=False)
    return basis


@dataclass(frozen=True, eq=False)
class OpenSystem:
    """H0 + eps(t) H1 with a Lindblad channel, prepared for the kernels."""

    h0: np.ndarray
    h1: np.ndarray
    channel: NoiseChannel = field(default_factory=NoiseChannel)

    def __post_init__(self):
        h0 = as_matrix(self.h0, "H0")
        h1 = as_matrix(self.h1, "H1")
        if h0.shape != h1.shape:
            raise ValueError("H0 and H1 dimensions differ")
        if not (is_hermitian(h0) and is_hermitian(h1)):
            raise ValueError("H0 and H1 must be Hermitian")
        if self.channel.terms and self.channel.dim != h0.shape[0]:
            raise ValueError("channel dimension does not match the Hamiltonian")
        object.__setattr__(self, "h0", h0)
        object.__setattr__(self, "h1", h1)

    @property
    def dim(self):
        return self.h0.shape[0]

    @cached_property
    def basis(self):
        return hermitian_basis(self.dim)

    def _real_superop(self, sup):
        r = self.basis.conj().T @ sup @ self.basis
        return np.ascontiguousarray(r.real)

    @cached_property
    def l0(self):
        return self._real_superop(liouvillian(self.h0, self.channel))

    @cached_property
    def l1(self):
        return self._real_superop(hamiltonian_superop(self.h1))

    @cached_property
    def l0_adj(self):
        return np.ascontiguousarray(self.l0.T)

    @cached_property
    def l1_adj(self):
        return np.ascontiguousarray(self.l1.T)

    def coords(self, ops):
        """Complex coordinates of a stack of (d, d) operators, shape (n, m).

        Real for Hermitian operators.
        """
        ops = np.asarray(ops, dtype=complex)
        flat = ops.transpose(0, 2, 1).reshape(ops.shape[0], -1)
        return flat @ self.basis.conj()

    def operators(self, coords):
        """Inverse of :meth:`coords` for any leading shape."""
        coords = np.asarray(coords)
        d = self.dim
        flat = coords @ self.basis.T
        return flat.reshape(coords.shape[:-1] + (d, d)).swapaxes(-1, -2)

    def generator(self, eps):
        """Complex superoperator of the full right-hand side at field ``eps``."""
        return self.basis @ (self.l0 + eps * self.l1) @ self.basis.conj().T


def _split(c):
    """Real rows for possibly complex coordinates; returns (rows, is_complex)."""
    if np.iscomplexobj(c) and np.any(c.imag != 0.0):
        return np.concatenate([c.real, c.imag]), True
    return np.ascontiguousarray(np.real(c)), False


def _join(rows, is_complex, n):
    if is_complex:
        return rows[..., :n, :] + 1j * rows[..., n:, :]
    return rows


def run_forward(system: OpenSystem, coords, samples, dt):
    """Forward propagation of coordinate rows; returns (N+1, n, m)."""
    rows, cplx = _split(np.atleast_2d(coords))
    traj = _backend.propagate(rows, samples, system.l0, system.l1, dt, False)
    return _join(traj, cplx, len(coords))


def run_backward(system: OpenSystem, coords, samples, dt):
    """Backward co-state propagation; node N holds ``coords``."""
    rows, cplx = _split(np.atleast_2d(coords))
    traj = _backend.propagate(rows, samples, system.l0_adj, system.l1_adj, dt, True)
    return _join(traj, cplx, len(coords))


def _system(h0, h1, channel):
    return OpenSystem(h0, h1, channel if channel is not None else NoiseChannel())


def _step(system, op, eps, dt, adjoint):
    if not np.isfinite(eps):
        raise ValueError("field value must be finite")
    op = as_matrix(op)
    if op.shape[0] != system.dim:
        raise ValueError("dimension mismatch")
    c = system.coords(op[None])
    rows, cplx = _split(c)
    if adjoint:
        g = system.l0_adj + eps * system.l1_adj
    else:
        g = system.l0 + eps * system.l1
    out = _join(_backend.expm_apply(g, rows, dt), cplx, 1)
    return system.operators(out)[0]


def step_forward(rho, eps, h0, h1, channel=None, dt=0.005):
    """Propagate ``rho`` over one interval of length ``dt`` at constant field."""
    return _step(_system(h0, h1, channel), rho, eps, dt, adjoint=False)


def step_backward(phi, eps, h0, h1, channel=None, dt=0.005):
    """Co-state map from t to t - dt (exp of dt times the adjoint generator)."""
    return _step(_system(h0, h1, channel), phi, eps, dt, adjoint=True)


def propagate_forward(rho0, field: ControlField, h0, h1, channel=None):
    system = _system(h0, h1, channel)
    rho0 = as_matrix(rho0)
    c = run_forward(system, system.coords(rho0[None]), field.samples, field.grid.dt)
    return Trajectory(field.grid, system.operators(c[:, 0, :]))


def propagate_backward(phi_t, field: ControlField, h0, h1, channel=None):
    system = _system(h0, h1, channel)
    phi_t = as_matrix(phi_t)
    c = run_backward(system, system.coords(phi_t[None]), field.samples, field.grid.dt)
    return Trajectory(field.grid, system.operators(c[:, 0, :]))
