"""Fidelity measures: single-state, Uhlmann mean over a state set, and the
Monte-Carlo mean gate fidelity over random pure inputs (with an exact
channel-based reference value).
"""
from __future__ import annotations

import numpy as np

from .dynamics import ControlField, run_forward
from .krotov import ControlProblem
from .quantum_core import as_matrix, herm_sqrt, projector

DEFAULT_NS = 12**4


class RandomStateSampler:
    """Reproducible source of pure states drawn uniformly (Haar) on a subspace.

    Amplitudes are independent standard complex normals, normalized. The bit
    stream comes from numpy's Philox4x64-10 counter-based generator keyed by
    ``seed``, so a given seed yields the same sequence on every platform.
    """

    def __init__(self, dim, seed=0, levels=None, _bitgen=None):
        self.dim = int(dim)
        self.seed = int(seed)
        self.levels = tuple(range(self.dim)) if levels is None else tuple(levels)
        if not set(self.levels) <= set(range(self.dim)):
            raise ValueError("levels out of range")
        bitgen = _bitgen if _bitgen is not None else np.random.Philox(self.seed)
        self._rng = np.random.Generator(bitgen)
        self.counter = 0

    def sample(self, n):
        """Draw ``n`` normalized state vectors, shape (n, dim)."""
        k = len(self.levels)
        x = self._rng.standard_normal((n, k, 2))
        amp = x[..., 0] + 1j * x[..., 1]
        amp /= np.linalg.norm(amp, axis=1, keepdims=True)
        out = np.zeros((n, self.dim), dtype=complex)
        out[:, list(self.levels)] = amp
        self.counter += n
        return out

    def split(self, n_workers):
        """Independent samplers, one per worker, from disjoint Philox streams."""
        base = np.random.Philox(self.seed)
        return [RandomStateSampler(self.dim, self.seed, self.levels, base.jumped(i + 1))
                for i in range(n_workers)]


def sample_pure(sampler: RandomStateSampler):
    return sampler.sample(1)[0]


def state_fidelity(rho_t, target, psi0):
    """<psi0| O^dag rho(T) O |psi0>."""
    rho_t = as_matrix(rho_t)
    u = as_matrix(target) @ np.asarray(psi0, dtype=complex)
    return float(np.real(np.vdot(u, rho_t @ u)))


def uhlmann_fidelity(rho, sigma):
    """(Tr sqrt(sqrt(sigma) rho sqrt(sigma)))^2."""
    s = herm_sqrt(sigma)
    inner = s @ as_matrix(rho) @ s
    return float(np.real(np.trace(herm_sqrt(inner))) ** 2)


def mean_fidelity_states(finals, targets):
    if len(finals) != len(targets):
        raise ValueError("need one target per final state")
    return float(np.mean([uhlmann_fidelity(s, r) for r, s in zip(finals, targets)]))


def state_set_fidelity(problem: ControlProblem, field: ControlField):
    """Mean Uhlmann fidelity of the problem's initial states against
    O rho_i(0) O^dag after propagation with ``field``."""
    sys_ = problem.system
    c = run_forward(sys_, problem.initial_coords(), field.samples, field.grid.dt)
    finals = sys_.operators(c[-1])
    o = problem.target
    targets = [o @ s.rho0 @ o.conj().T for s in problem.states]
    return mean_fidelity_states(finals, targets)


def final_states(problem: ControlProblem, field: ControlField, rhos):
    sys_ = problem.system
    c = run_forward(sys_, sys_.coords(np.asarray(rhos)), field.samples, field.grid.dt)
    return sys_.operators(c[-1])


def channel_tensor(problem: ControlProblem, field: ControlField):
    """M[a, b] = Lambda(|a><b|) for a, b in the problem subspace; shape (k, k, d, d)."""
    d = problem.dim
    levels = problem.subspace
    units = []
    for a in levels:
        for b in levels:
            e = np.zeros((d, d), dtype=complex)
            e[a, b] = 1.0
            units.append(e)
    out = final_states(problem, field, units)
    k = len(levels)
    return out.reshape(k, k, d, d)


def _gate_overlaps(tensor, target, psis, levels):
    u = psis @ target.T
    c = psis[:, list(levels)]
    q = np.einsum("sx,abxy,sy->sab", u.conj(), tensor, u, optimize=True)
    return np.real(np.einsum("sa,sb,sab->s", c, c.conj(), q, optimize=True))


def mean_gate_fidelity(problem: ControlProblem, field: ControlField, ns=DEFAULT_NS,
                       sampler=None, seed=0, direct=False):
    """Monte-Carlo mean of <phi|O^dag rho(T) O|phi> over ``ns`` random inputs.

    Returns ``(estimate, standard_error)``. By default every sample is
    evaluated through the channel tensor; ``direct=True`` propagates each
    |phi><phi| separately (slow; for validation).
    """
    if ns < 2:
        raise ValueError("need at least two samples")
    if sampler is None:
        sampler = RandomStateSampler(problem.dim, seed, problem.subspace)
    psis = sampler.sample(ns)
    if direct:
        finals = final_states(problem, field, np.stack([projector(p) for p in psis]))
        vals = np.array([state_fidelity(r, problem.target, p) for r, p in zip(finals, psis)])
    else:
        vals = _gate_overlaps(channel_tensor(problem, field), problem.target, psis,
                              problem.subspace)
    return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(ns))


def exact_average_gate_fidelity(problem: ControlProblem, field: ControlField, tensor=None):
    """Haar average of <phi|O^dag Lambda(phi) O|phi> over the subspace, exactly.

    Uses the second moment of Haar-random states,
    F = (Tr E(1) + k^2 F_e) / (k (k + 1)) with E(X) = P O^dag Lambda(X) O P;
    for trace-preserving E this is (k F_e + 1) / (k + 1).
    """
    if tensor is None:
        tensor = channel_tensor(problem, field)
    return exact_from_tensor(tensor, problem.target, problem.subspace)


def exact_from_tensor(tensor, target, levels):
    idx = list(levels)
    k = len(idx)
    o = as_matrix(target)
    e = np.einsum("xi,abxy,yj->abij", o.conj(), tensor, o)[:, :, idx][:, :, :, idx]
    tr_unit = np.real(np.einsum("aaxx->", e))
    ent = np.real(np.einsum("abab->", e))
    return float((tr_unit + ent) / (k * (k + 1)))
