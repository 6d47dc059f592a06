"""Hamiltonians, target gates, noise channels, initial-state sets and trial fields."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import ControlField, TimeGrid
from .krotov import ControlProblem, WeightedState
from .quantum_core import SIGMA_X, SIGMA_Z, NoiseChannel, is_hermitian, ket, projector

SYSTEMS = ("qubit", "qutrit", "two_qubit", "four_level")
CHANNELS = ("dephasing", "amp_damping", "leak_i", "leak_ii", "leak_iii", "leak_iv")
GATES = ("qft", "u1", "u2", "u3", "u4", "x_first_qubit", "x_subspace")
STATE_SETS = ("ground", "basis_plus_superposition", "goerz", "leakage_set")

# couplings of the two-qubit / four-level Hamiltonian
J1, J2, J12 = -2.0, -0.2, 0.1
A0 = 1e-2


@dataclass(frozen=True)
class SystemSpec:
    name: str
    dim: int
    h0: np.ndarray
    h1: np.ndarray
    computational_levels: tuple

    def __post_init__(self):
        if not (is_hermitian(self.h0, 1e-12) and is_hermitian(self.h1, 1e-12)):
            raise ValueError(f"{self.name}: Hamiltonian is not Hermitian")
        if not set(self.computational_levels) <= set(range(self.dim)):
            raise ValueError(f"{self.name}: computational levels out of range")

    def bohr_frequency(self, i, j=0):
        e = np.real(np.diag(self.h0))
        return float(e[i] - e[j])


@dataclass(frozen=True)
class GateSpec:
    name: str
    matrix: np.ndarray
    acts_on: tuple

    def restricted(self):
        idx = np.array(self.acts_on)
        return self.matrix[np.ix_(idx, idx)]


@dataclass(frozen=True)
class StateSet:
    name: str
    states: tuple

    def __post_init__(self):
        if abs(sum(s.weight for s in self.states) - 1.0) > 1e-12:
            raise ValueError(f"{self.name}: weights do not sum to 1")


def build_qubit():
    return SystemSpec("qubit", 2, -SIGMA_Z.copy(), SIGMA_X.copy(), (0, 1))


def build_qutrit():
    h0 = -np.diag([1.0, 0.0, -1.0]).astype(complex)
    h1 = np.zeros((3, 3), dtype=complex)
    h1[0, 2] = h1[1, 2] = h1[2, 0] = h1[2, 1] = 1.0
    return SystemSpec("qutrit", 3, h0, h1, (0, 1, 2))


def _coupled_hamiltonian(j1, j2, j12):
    i2 = np.eye(2)
    h0 = j1 * np.kron(SIGMA_Z, i2) + j2 * np.kron(i2, SIGMA_Z) + j12 * np.kron(SIGMA_Z, SIGMA_Z)
    h1 = np.kron(SIGMA_X, i2) + np.kron(i2, SIGMA_X)
    return h0.astype(complex), h1.astype(complex)


def build_two_qubit(j1=J1, j2=J2, j12=J12):
    h0, h1 = _coupled_hamiltonian(j1, j2, j12)
    return SystemSpec("two_qubit", 4, h0, h1, (0, 1, 2, 3))


def build_four_level(j1=J1, j2=J2, j12=J12):
    h0, h1 = _coupled_hamiltonian(j1, j2, j12)
    return SystemSpec("four_level", 4, h0, h1, (0, 1))


def build_system(name):
    builders = {
        "qubit": build_qubit,
        "qutrit": build_qutrit,
        "two_qubit": build_two_qubit,
        "four_level": build_four_level,
    }
    try:
        return builders[name]()
    except KeyError:
        raise ValueError(f"unknown system {name!r}; choose from {SYSTEMS}") from None


def _qft(d):
    w = np.exp(2j * np.pi / d)
    k = np.arange(d)
    return w ** np.outer(k, k) / np.sqrt(d)


def _qubit_gates():
    return {
        "qft": (SIGMA_X + SIGMA_Z) / np.sqrt(2),
        "u1": SIGMA_X.copy(),
        "u2": np.array([[0, -1j], [1j, 0]]),
        "u3": SIGMA_Z.copy(),
        "u4": np.diag([1.0, np.exp(1j * np.pi / 4)]),
    }


def _qutrit_gates():
    w = np.exp(2j * np.pi / 3)
    r2, r3 = np.sqrt(2), np.sqrt(3)
    return {
        # the written form with e^{8 pi i/3} = e^{2 pi i/3}
        "qft": _qft(3),
        "u1": np.array([[1, -1 / w, 0], [-w, -1, 0], [0, 0, -r2]]) / r2,
        "u2": np.array([[1, 0, 1j * w], [0, r2, 0], [1j / w, 0, 1]]) / r2,
        "u3": np.array([
            [r3, 0, 0],
            [0, -r2, 1j * np.exp(-1j * np.pi / 6)],
            [0, 1j * np.exp(1j * np.pi / 6), -r2],
        ]) / r3,
        "u4": np.diag(np.exp(1j * np.pi * np.array([1 / 3, 1 / 6, -1 / 2]))),
    }


def gate_catalog(name, system="qubit"):
    """Target gate ``name`` for ``system`` (qft/u1..u4 exist for qubit and qutrit)."""
    if name == "x_first_qubit":
        return GateSpec(name, np.kron(SIGMA_X, np.eye(2)).astype(complex), (0, 1, 2, 3))
    if name == "x_subspace":
        o = np.zeros((4, 4), dtype=complex)
        o[0, 1] = o[1, 0] = 1.0
        return GateSpec(name, o, (0, 1))
    table = {"qubit": _qubit_gates, "qutrit": _qutrit_gates}.get(system)
    if table is None or name not in GATES:
        raise ValueError(f"no gate {name!r} for system {system!r}")
    m = np.asarray(table()[name], dtype=complex)
    return GateSpec(name, m, tuple(range(m.shape[0])))


def default_gate(system):
    return {"qubit": "qft", "qutrit": "qft", "two_qubit": "x_first_qubit",
            "four_level": "x_subspace"}[system]


def _op(i, j, d):
    return np.outer(ket(i, d), ket(j, d))


def channel_catalog(name, gamma, system="qubit"):
    """Lindblad set ``name`` with every rate equal to ``gamma``."""
    d = {"qubit": 2, "qutrit": 3, "two_qubit": 4, "four_level": 4}[system]
    if name == "dephasing" and d == 2:
        ops = [SIGMA_Z.copy()]
    elif name == "dephasing" and d == 3:
        ops = [_op(1, 1, 3) - _op(0, 0, 3), _op(2, 2, 3) - _op(0, 0, 3)]
    elif name == "amp_damping" and d == 2:
        # lowering operator |0><1| toward the ground state |0>
        ops = [_op(0, 1, 2)]
    elif name == "amp_damping" and d == 3:
        # decay of both excited levels into |0>
        ops = [_op(0, 1, 3), _op(0, 2, 3)]
    elif name.startswith("leak_") and d == 4:
        sources = {"leak_i": (1, 2, 3), "leak_ii": (1, 2), "leak_iii": (2, 3),
                   "leak_iv": (1,)}.get(name)
        if sources is None:
            raise ValueError(f"unknown channel {name!r}")
        ops = [_op(0, k, 4) for k in sources]
    elif name == "none":
        return NoiseChannel()
    else:
        raise ValueError(f"no channel {name!r} for system {system!r}")
    return NoiseChannel(tuple((op, gamma) for op in ops))


def _uniform_superposition(d, levels=None):
    levels = range(d) if levels is None else levels
    psi = np.zeros(d, dtype=complex)
    psi[list(levels)] = 1.0
    return projector(psi / np.linalg.norm(psi))


def state_set_catalog(name, dim=2):
    if name == "ground":
        return StateSet(name, (WeightedState(projector(ket(0, dim)), 1.0),))
    if name == "basis_plus_superposition":
        rhos = [projector(ket(j, dim)) for j in range(dim)] + [_uniform_superposition(dim)]
        w = 1.0 / len(rhos)
        return StateSet(name, tuple(WeightedState(r, w) for r in rhos))
    if name == "goerz":
        if dim != 2:
            raise ValueError("the goerz set is defined for a qubit")
        rhos = [
            np.diag([2 / 3, 1 / 3]).astype(complex),
            _uniform_superposition(2),
            0.5 * np.eye(2, dtype=complex),
        ]
        return StateSet(name, tuple(WeightedState(r, w) for r, w in zip(rhos, (0.8, 0.1, 0.1))))
    if name == "leakage_set":
        if dim != 4:
            raise ValueError("the leakage set is defined for the four-level system")
        rhos = [projector(ket(0, 4)), projector(ket(1, 4)), _uniform_superposition(4, (0, 1))]
        return StateSet(name, tuple(WeightedState(r, 1 / 3) for r in rhos))
    raise ValueError(f"unknown state set {name!r}")


def default_state_set(system):
    return "leakage_set" if system == "four_level" else "basis_plus_superposition"


def envelope(t, T, t_r):
    """Switch-on/off shape: sin^2 ramps of length t_r, flat top of height 1."""
    t = np.asarray(t, dtype=float)
    s = np.ones_like(t)
    up = t <= t_r
    down = t >= T - t_r
    s[up] = np.sin(np.pi * t[up] / (2 * t_r)) ** 2
    s[down] = np.sin(np.pi * (t[down] - T) / (2 * t_r)) ** 2
    return s


def trial_field(grid: TimeGrid, a0=A0, t_r=None):
    t_r = grid.T / 30 if t_r is None else t_r
    s = envelope(grid.midpoints, grid.T, t_r)
    return ControlField(grid, a0 * s, s, np.zeros(grid.N))


def resonant_trial(grid: TimeGrid, omega, a0=A0, t_r=None):
    t_r = grid.T / 30 if t_r is None else t_r
    t = grid.midpoints
    s = envelope(t, grid.T, t_r)
    return ControlField(grid, a0 * s * np.sin(omega * t), s, np.zeros(grid.N))


def coupling_from_gate(u, atol=1e-12):
    """Control Hamiltonian with ones wherever the gate has a nonzero element."""
    u = np.asarray(u)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        raise ValueError("gate must be square")
    pattern = np.abs(u) > atol
    if not np.array_equal(pattern, pattern.T):
        raise ValueError("nonzero pattern is not symmetric; coupling would not be Hermitian")
    return pattern.astype(complex)


def make_problem(system="qubit", channel="dephasing", gamma=0.0, gate=None,
                 state_set=None, task="gate", trial="plain", grid=None, lam=1.0,
                 coupling="default", a0=A0):
    """Assemble a :class:`ControlProblem` from catalog names.

    ``trial`` is ``"plain"`` or ``("resonant", level)``; ``coupling`` is
    ``"default"``, ``"from_gate"`` or an explicit H1 matrix.
    """
    grid = grid or TimeGrid()
    spec = build_system(system)
    gate_spec = gate_catalog(gate or default_gate(system), system)
    if state_set is None:
        state_set = "ground" if task == "state_prep" else default_state_set(system)
    states = state_set_catalog(state_set, spec.dim)
    if isinstance(coupling, str):
        if coupling == "from_gate":
            h1 = coupling_from_gate(gate_spec.matrix)
        elif coupling == "default":
            h1 = spec.h1
        else:
            raise ValueError(f"unknown coupling {coupling!r}")
    else:
        h1 = np.asarray(coupling, dtype=complex)
    if trial == "plain":
        field = trial_field(grid, a0)
    else:
        kind, level = trial
        if kind != "resonant":
            raise ValueError(f"unknown trial {trial!r}")
        field = resonant_trial(grid, spec.bohr_frequency(level, 0), a0)
    ch = channel_catalog(channel, gamma, system)
    levels = spec.computational_levels if system == "four_level" else gate_spec.acts_on
    return ControlProblem(spec.h0, h1, ch, gate_spec.matrix, list(states.states), grid,
                          lam, field.envelope, field, levels)
