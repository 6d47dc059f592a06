"""First-order Krotov optimization on Lindblad dynamics.

One iteration propagates the co-states backward under the old field, then
sweeps forward, updating the field interval by interval from the states that
are already evolved under the new field:

    eps_new(t) = eps_old(t) + lam * S(t) * Im sum_i Tr{phi_i(t) [H1, rho_i(t)]}

With J_T linear in the final states this update is the exact first-order
Krotov step for J = J_T + int (eps_new - eps_old)^2 / (2 lam S) dt, so that is
the J recorded by :func:`optimize` (penalty constant 2*lam).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import _backend
from .dynamics import ControlField, OpenSystem, TimeGrid, run_backward, run_forward
from .quantum_core import NoiseChannel, as_matrix, purity

log = logging.getLogger(__name__)

MAX_SAFEGUARD_HALVINGS = 6
# J changes below this are round-off from ~N propagation steps, not progress
ROUNDOFF_ATOL = 1e-12


class KrotovError(RuntimeError):
    """Optimization produced non-finite values."""


@dataclass(frozen=True)
class WeightedState:
    rho0: np.ndarray
    weight: float = 1.0

    def __post_init__(self):
        rho = as_matrix(self.rho0, "initial state")
        if self.weight < 0:
            raise ValueError("weights must be non-negative")
        if purity(rho) <= 0:
            raise ValueError("initial state has zero purity")
        object.__setattr__(self, "rho0", rho)


@dataclass(eq=False)
class ControlProblem:
    h0: np.ndarray
    h1: np.ndarray
    channel: NoiseChannel
    target: np.ndarray
    states: list
    grid: TimeGrid
    lam: float = 1.0
    envelope: np.ndarray = None
    trial: ControlField = None
    subspace: tuple = None  # levels the gate acts on; None means all

    def __post_init__(self):
        self.target = as_matrix(self.target, "target")
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if not self.states:
            raise ValueError("need at least one weighted state")
        if sum(s.weight for s in self.states) <= 0:
            raise ValueError("weights must have a positive sum")
        d = self.system.dim
        if self.target.shape != (d, d) or any(s.rho0.shape != (d, d) for s in self.states):
            raise ValueError("dimension mismatch between system, target and states")
        if self.envelope is None:
            self.envelope = (self.trial.envelope if self.trial is not None
                             else np.ones(self.grid.N))
        self.envelope = np.asarray(self.envelope, dtype=float)
        if self.trial is None:
            self.trial = ControlField(self.grid, np.zeros(self.grid.N), self.envelope)
        if self.trial.grid != self.grid:
            raise ValueError("trial field lives on a different grid")
        if self.subspace is None:
            self.subspace = tuple(range(d))
        self.subspace = tuple(int(i) for i in self.subspace)

    @cached_property
    def system(self):
        return OpenSystem(self.h0, self.h1, self.channel)

    @property
    def dim(self):
        return self.system.dim

    def costate_coords(self):
        phis = np.stack([terminal_costate(s, self.target) for s in self.states])
        return self.system.coords(phis).real

    def initial_coords(self):
        return self.system.coords(np.stack([s.rho0 for s in self.states])).real

    def with_channel(self, channel):
        return ControlProblem(self.h0, self.h1, channel, self.target, self.states,
                              self.grid, self.lam, self.envelope, self.trial,
                              self.subspace)


@dataclass
class KrotovResult:
    field: ControlField
    J_history: list
    JT_history: list
    iterations: int
    converged: bool
    reason: str
    safeguard_halvings: int = 0
    lam_final: float = None
    max_update: float = None  # max_t |lam S delta| of the last accepted step

    @property
    def JT(self):
        return self.JT_history[-1]


@dataclass
class StepResult:
    field: ControlField
    forward: np.ndarray  # (N+1, n, m) coordinates under the new field
    costates: np.ndarray  # (N+1, n, m) coordinates under the old field
    delta: np.ndarray
    JT: float


def functional_JT(problem: ControlProblem, finals):
    """1 - sum_i w_i / Tr[rho_i(0)^2] Re Tr[O rho_i(0) O^dag rho_i(T)]."""
    if len(finals) != len(problem.states):
        raise ValueError("need one final state per weighted state")
    total = 0.0
    o = problem.target
    for s, rho_t in zip(problem.states, finals):
        overlap = np.trace(o @ s.rho0 @ o.conj().T @ as_matrix(rho_t)).real
        total += s.weight / purity(s.rho0) * overlap
    return 1.0 - total


def fluence_penalty(field: ControlField, lam):
    """Midpoint-rule value of int (eps - eps_ref)^2 / (lam S) dt."""
    diff = field.samples - field.reference
    s = field.envelope
    zero = s == 0.0
    if np.any(diff[zero] != 0.0):
        raise ValueError("ill-posed penalty: field differs from reference where S = 0")
    terms = np.zeros_like(diff)
    terms[~zero] = diff[~zero] ** 2 / (lam * s[~zero])
    return float(np.sum(terms) * field.grid.dt)


def terminal_costate(state: WeightedState, target):
    o = as_matrix(target)
    if o.shape != state.rho0.shape:
        raise ValueError("target and state dimensions differ")
    return state.weight / purity(state.rho0) * (o @ state.rho0 @ o.conj().T)


def _jt_from_coords(phi_t, finals):
    return 1.0 - float(np.sum(phi_t * finals))


def evaluate(problem: ControlProblem, field: ControlField):
    """J_T of ``field`` and the forward coordinate trajectory."""
    fwd = run_forward(problem.system, problem.initial_coords(), field.samples,
                      field.grid.dt)
    return _jt_from_coords(problem.costate_coords(), fwd[-1]), fwd


def krotov_step(problem: ControlProblem, field: ControlField, lam=None):
    """One sequential Krotov update of ``field``."""
    lam = problem.lam if lam is None else lam
    if field.grid != problem.grid:
        raise ValueError("field is not on the problem grid")
    sys_ = problem.system
    dt = problem.grid.dt
    phi_t = problem.costate_coords()
    costates = run_backward(sys_, phi_t, field.samples, dt)
    step = lam * problem.envelope
    eps_new, fwd, delta = _backend.sweep(problem.initial_coords(), costates,
                                         field.samples, step, sys_.l0, sys_.l1, dt)
    if not (np.all(np.isfinite(eps_new)) and np.all(np.isfinite(fwd[-1]))):
        bad = int(np.argmax(~np.isfinite(eps_new))) if not np.all(np.isfinite(eps_new)) else -1
        raise KrotovError(f"non-finite field update (first bad interval {bad}, lam={lam})")
    new_field = ControlField(problem.grid, eps_new, problem.envelope, field.samples)
    return StepResult(new_field, fwd, costates, delta, _jt_from_coords(phi_t, fwd[-1]))


def optimize(problem: ControlProblem, max_iters=1000, tol=1e-7, field=None,
             callback=None):
    """Iterate :func:`krotov_step` until |J_k - J_{k-1}| < tol or ``max_iters``.

    An iteration that raises J is retried with lambda halved (at most
    ``MAX_SAFEGUARD_HALVINGS`` times in total per run); the reduced lambda is
    kept for later iterations. A rise no larger than ``ROUNDOFF_ATOL`` means
    J has stalled at round-off level; the step is dropped and the run counts
    as converged.
    """
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    field = (problem.trial if field is None else field).copy()
    field.reference = field.samples.copy()
    jt, _ = evaluate(problem, field)
    j_hist, jt_hist = [jt], [jt]
    lam = problem.lam
    halvings = 0
    converged, reason = False, "max_iters reached"
    max_update = None
    it = 0
    while it < max_iters:
        step = krotov_step(problem, field, lam)
        j_new = step.JT + fluence_penalty(step.field, 2 * lam)
        if j_hist[-1] < j_new <= j_hist[-1] + ROUNDOFF_ATOL:
            converged, reason = True, "stalled at round-off"
            break
        while j_new > j_hist[-1] and halvings < MAX_SAFEGUARD_HALVINGS:
            halvings += 1
            lam *= 0.5
            log.info("J increased (%.3e > %.3e) at iteration %d; lambda -> %g",
                     j_new, j_hist[-1], it + 1, lam)
            step = krotov_step(problem, field, lam)
            j_new = step.JT + fluence_penalty(step.field, 2 * lam)
        if j_new > j_hist[-1]:
            converged, reason = False, "non-monotonic after safeguard"
            break
        it += 1
        max_update = float(np.max(np.abs(step.field.samples - field.samples)))
        field = step.field
        j_hist.append(j_new)
        jt_hist.append(step.JT)
        if callback is not None:
            callback(it, step)
        if abs(j_hist[-1] - j_hist[-2]) < tol:
            converged, reason = True, "tolerance reached"
            break
    return KrotovResult(field, j_hist, jt_hist, it, converged, reason, halvings, lam,
                        max_update)


def pairing_values(problem: ControlProblem, field: ControlField):
    """a_n = Re sum_i Tr{phi_i(t_n) L1[rho_i(t_n)]} at every node, both
    trajectories under ``field``."""
    sys_ = problem.system
    dt = problem.grid.dt
    fwd = run_forward(sys_, problem.initial_coords(), field.samples, dt)
    bwd = run_backward(sys_, problem.costate_coords(), field.samples, dt)
    drive = fwd @ sys_.l1.T
    return np.einsum("kim,kim->k", bwd, drive)


def jt_gradient(problem: ControlProblem, field: ControlField):
    """dJ_T/d eps_n from the co-state expression, trapezoid rule per interval."""
    a = pairing_values(problem, field)
    return -0.5 * problem.grid.dt * (a[:-1] + a[1:])
