"""Pure-numpy propagation kernels.

Reference implementation of the routines in ``_kernels.pyx``; used when the
compiled extension is unavailable or ``OPENKROTOV_PURE_PYTHON`` is set.

Operators enter as real coordinates in an orthonormal Hermitian basis, one
row per operator: ``states`` has shape ``(n, m)`` with ``m = d**2``.
The generator for an interval is ``L0 + eps * L1``; for backward (co-state)
propagation the caller passes the transposed superoperators.
"""
import math

import numpy as np

TAYLOR_RTOL = 1e-17
MAX_TERMS = 40
SUBSTEP_NORM = 0.5


def _norm1(g):
    return float(np.max(np.sum(np.abs(g), axis=0)))


def expm_apply(g, states, dt):
    """Return rows of ``states`` mapped by exp(dt * g)."""
    norm = dt * _norm1(g)
    nsub = max(1, int(math.ceil(norm / SUBSTEP_NORM)))
    h = dt / nsub
    acc = np.array(states, dtype=float).T
    for _ in range(nsub):
        term = acc.copy()
        for k in range(1, MAX_TERMS + 1):
            term = (g @ term) * (h / k)
            acc = acc + term
            tmax = np.max(np.abs(term), initial=0.0)
            amax = np.max(np.abs(acc), initial=0.0)
            if tmax <= TAYLOR_RTOL * amax:
                break
    return np.ascontiguousarray(acc.T)


def propagate(states, eps, l0, l1, dt, reverse=False):
    states = np.ascontiguousarray(states, dtype=float)
    eps = np.asarray(eps, dtype=float)
    nt = eps.shape[0]
    traj = np.empty((nt + 1,) + states.shape, dtype=float)
    if reverse:
        traj[nt] = states
        for k in range(nt - 1, -1, -1):
            traj[k] = expm_apply(l0 + eps[k] * l1, traj[k + 1], dt)
    else:
        traj[0] = states
        for k in range(nt):
            traj[k + 1] = expm_apply(l0 + eps[k] * l1, traj[k], dt)
    return traj


def sweep(rho0, costates, eps, step, l0, l1, dt):
    """Sequential first-order Krotov sweep.

    Returns ``(eps_new, traj, delta)`` where ``delta[k]`` is the update
    direction sum_i phi_i . (L1 rho_i) evaluated at node k.
    """
    rho0 = np.ascontiguousarray(rho0, dtype=float)
    eps = np.asarray(eps, dtype=float)
    step = np.asarray(step, dtype=float)
    nt = eps.shape[0]
    traj = np.empty((nt + 1,) + rho0.shape, dtype=float)
    eps_new = np.empty(nt)
    delta = np.empty(nt)
    traj[0] = rho0
    for k in range(nt):
        cur = traj[k]
        drive = cur @ l1.T
        delta[k] = float(np.sum(costates[k] * drive))
        eps_new[k] = eps[k] + step[k] * delta[k]
        traj[k + 1] = expm_apply(l0 + eps_new[k] * l1, cur, dt)
    return eps_new, traj, delta
