"""Dense linear algebra for small open quantum systems.

Conventions used throughout the package:

* hbar = omega0 = 1, so times are in units of 1/omega0 and rates in omega0.
* Superoperators act on column-stacked density matrices,
  ``vec(rho) = rho.reshape(-1, order="F")``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

HERMITIAN_ATOL = 1e-10
PSD_CLAMP = 1e-9


@dataclass(frozen=True)
class NoiseChannel:
    """Set of Lindblad operators with their decay rates."""

    terms: tuple = field(default_factory=tuple)

    def __post_init__(self):
        terms = []
        dims = set()
        for op, gamma in self.terms:
            op = np.array(op, dtype=complex)
            gamma = float(gamma)
            if op.ndim != 2 or op.shape[0] != op.shape[1]:
                raise ValueError("Lindblad operators must be square matrices")
            if not np.isfinite(gamma) or gamma < 0:
                raise ValueError(f"decay rate must be >= 0, got {gamma}")
            op.setflags(write=False)
            dims.add(op.shape[0])
            terms.append((op, gamma))
        if len(dims) > 1:
            raise ValueError(f"Lindblad operators have mixed dimensions {sorted(dims)}")
        object.__setattr__(self, "terms", tuple(terms))

    @property
    def dim(self):
        return self.terms[0][0].shape[0] if self.terms else None

    def scaled(self, gamma):
        """Same operators, every rate replaced by ``gamma``."""
        return NoiseChannel(tuple((op, gamma) for op, _ in self.terms))

    def __len__(self):
        return len(self.terms)

    def __iter__(self):
        return iter(self.terms)


def as_matrix(a, name="matrix"):
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    return a


def _check_dims(*mats):
    shapes = {m.shape for m in mats}
    if len(shapes) != 1:
        raise ValueError(f"dimension mismatch: {sorted(shapes)}")


def _check_channel(channel, dim):
    if channel.terms and channel.dim != dim:
        raise ValueError(f"channel acts on dim {channel.dim}, operand has dim {dim}")


def is_hermitian(a, atol=HERMITIAN_ATOL):
    return bool(np.max(np.abs(a - a.conj().T), initial=0.0) <= atol)


def check_density_matrix(rho, atol=HERMITIAN_ATOL, psd_atol=PSD_CLAMP):
    """Raise ``ValueError`` unless ``rho`` is Hermitian, unit-trace and PSD."""
    rho = as_matrix(rho, "density matrix")
    if not is_hermitian(rho, atol):
        raise ValueError("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1.0) > atol:
        raise ValueError(f"density matrix has trace {np.trace(rho).real:.12g}")
    if np.linalg.eigvalsh(rho).min() < -psd_atol:
        raise ValueError("density matrix is not positive semidefinite")
    return rho


def commutator(a, b):
    a = as_matrix(a)
    b = as_matrix(b)
    _check_dims(a, b)
    return a @ b - b @ a


def dissipator(channel: NoiseChannel, rho):
    """Lindblad dissipator D[rho]."""
    rho = as_matrix(rho)
    _check_channel(channel, rho.shape[0])
    out = np.zeros_like(rho)
    for op, gamma in channel:
        if gamma == 0.0:
            continue
        opd = op.conj().T
        lhl = opd @ op
        out += 0.5 * gamma * (2.0 * op @ rho @ opd - lhl @ rho - rho @ lhl)
    return out


def adjoint_dissipator(channel: NoiseChannel, xi):
    """Adjoint of :func:`dissipator` under the pairing Tr[xi rho]."""
    xi = as_matrix(xi)
    _check_channel(channel, xi.shape[0])
    out = np.zeros_like(xi)
    for op, gamma in channel:
        if gamma == 0.0:
            continue
        opd = op.conj().T
        lhl = opd @ op
        out += 0.5 * gamma * (2.0 * opd @ xi @ op - lhl @ xi - xi @ lhl)
    return out


def master_rhs(h, channel, rho):
    """Right-hand side -i[H, rho] + D[rho] of the master equation."""
    return -1j * commutator(h, rho) + dissipator(channel, rho)


def vec(a):
    return np.asarray(a).reshape(-1, order="F")


def unvec(v, dim=None):
    v = np.asarray(v)
    if dim is None:
        dim = int(round(np.sqrt(v.shape[-1])))
    return v.reshape(dim, dim, order="F")


def spre(a):
    """Superoperator of left multiplication, X -> A X."""
    return np.kron(np.eye(a.shape[0]), a)


def spost(a):
    """Superoperator of right multiplication, X -> X A."""
    return np.kron(a.T, np.eye(a.shape[0]))


def hamiltonian_superop(h):
    """Superoperator of X -> -i[H, X]."""
    h = as_matrix(h, "Hamiltonian")
    return -1j * (spre(h) - spost(h))


def dissipator_superop(channel: NoiseChannel, dim):
    out = np.zeros((dim * dim, dim * dim), dtype=complex)
    for op, gamma in channel:
        if gamma == 0.0:
            continue
        opd = op.conj().T
        lhl = opd @ op
        out += gamma * (spre(op) @ spost(opd) - 0.5 * spre(lhl) - 0.5 * spost(lhl))
    return out


def liouvillian(h, channel: NoiseChannel):
    """Liouvillian superoperator (dim^2 x dim^2) in the column-stacking convention."""
    h = as_matrix(h, "Hamiltonian")
    if not is_hermitian(h):
        raise ValueError("Hamiltonian is not Hermitian")
    _check_channel(channel, h.shape[0])
    return hamiltonian_superop(h) + dissipator_superop(channel, h.shape[0])


def eigh(a):
    return np.linalg.eigh(as_matrix(a))


def expm(a):
    return scipy.linalg.expm(as_matrix(a))


def herm_sqrt(a, clamp=PSD_CLAMP):
    """Principal square root of a Hermitian PSD matrix.

    Eigenvalues in ``[-clamp, 0)`` are treated as round-off and set to zero;
    anything more negative is rejected.
    """
    a = as_matrix(a)
    a = 0.5 * (a + a.conj().T)
    w, v = np.linalg.eigh(a)
    if w.min() < -clamp:
        raise ValueError(f"matrix is not PSD (min eigenvalue {w.min():.3e})")
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.conj().T


def ket(index, dim):
    v = np.zeros(dim, dtype=complex)
    v[index] = 1.0
    return v


def projector(psi):
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj())


def purity(rho):
    return float(np.real(np.trace(rho @ rho)))


SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
for _m in (SIGMA_X, SIGMA_Y, SIGMA_Z):
    _m.setflags(write=False)
