"""Declarative experiment runner: decay-rate sweeps, figure reproduction, pulse
files and CSV output.

A sweep optimizes once at gamma = 0 (the "unitary" field) and, for every
decay rate, both evaluates that field under noise and runs a fresh
optimization on the noisy dynamics (the "non-unitary" field).
"""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .dynamics import ControlField, TimeGrid, propagate_forward
from .fidelity import (
    DEFAULT_NS, RandomStateSampler, mean_gate_fidelity, state_fidelity, state_set_fidelity,
    final_states,
)
from .krotov import evaluate, optimize
from .models import (
    CHANNELS, GATES, STATE_SETS, SYSTEMS, default_gate, make_problem,
)
from .quantum_core import ket, projector

log = logging.getLogger(__name__)

CSV_COLUMNS = ("gamma", "task", "system", "channel", "gate", "trial", "F_unitary",
               "F_nonunitary", "stderr_u", "stderr_n", "iters_n", "J_final_n", "seed")
MEASURES = ("state", "states_mean", "gate_mean")
PULSE_FORMAT = "openkrotov-pulse"
FIGURES = (1, 2, 3, 5, 6, 7)
# resonant trial level per leakage case: Bohr frequency of a decaying level
RESONANT_LEVEL = {"leak_i": 1, "leak_ii": 3, "leak_iii": 2, "leak_iv": 1}


def default_gammas():
    return [i / 200 for i in range(21)]


def _parse_trial(trial):
    """"plain" | ("resonant", level) from the accepted config spellings."""
    if trial in (None, "plain"):
        return "plain"
    if isinstance(trial, str) and trial.startswith("resonant"):
        level = trial.split(":", 1)[1] if ":" in trial else trial[len("resonant"):].strip("()")
        return ("resonant", int(level))
    if isinstance(trial, dict):
        if trial.get("kind") == "plain":
            return "plain"
        if trial.get("kind") == "resonant":
            return ("resonant", int(trial["level"]))
    if isinstance(trial, (list, tuple)) and len(trial) == 2 and trial[0] == "resonant":
        return ("resonant", int(trial[1]))
    raise ValueError(f"unrecognized trial {trial!r}")


def trial_label(trial):
    trial = _parse_trial(trial)
    return "plain" if trial == "plain" else f"resonant({trial[1]})"


@dataclass
class ExperimentConfig:
    system: str = "qubit"
    channel: str = "dephasing"
    gamma_list: list = field(default_factory=default_gammas)
    gate: str = None
    task: str = "gate"
    state_set: str = None
    trial: object = "plain"
    grid: dict = field(default_factory=lambda: {"T": 10.0, "N": 2000})
    optimizer: dict = field(default_factory=lambda: {"lambda": 1.0, "max_iters": 1000,
                                                     "tol": 1e-7})
    fidelity: dict = field(default_factory=lambda: {"Ns": DEFAULT_NS, "seed": 0})
    output: str = "sweep.csv"
    measure: str = None  # defaults from task: state_prep -> state, gate -> gate_mean
    coupling: object = "default"
    warm_start: bool = False

    def __post_init__(self):
        if self.system not in SYSTEMS:
            raise ValueError(f"unknown system {self.system!r}")
        if self.channel not in CHANNELS and self.channel != "none":
            raise ValueError(f"unknown channel {self.channel!r}")
        if self.gate is None:
            self.gate = default_gate(self.system)
        if self.gate not in GATES:
            raise ValueError(f"unknown gate {self.gate!r}")
        if self.task not in ("gate", "state_prep"):
            raise ValueError(f"task must be 'gate' or 'state_prep', got {self.task!r}")
        if self.state_set is not None and self.state_set not in STATE_SETS:
            raise ValueError(f"unknown state set {self.state_set!r}")
        self.trial = _parse_trial(self.trial)
        self.gamma_list = [float(g) for g in self.gamma_list]
        if not self.gamma_list or any(not g >= 0 for g in self.gamma_list):
            raise ValueError("gamma_list must be non-empty with values >= 0")
        self.grid = {"T": 10.0, "N": 2000, **self.grid}
        self.optimizer = {"lambda": 1.0, "max_iters": 1000, "tol": 1e-7, **self.optimizer}
        self.fidelity = {"Ns": DEFAULT_NS, "seed": 0, **self.fidelity}
        if self.measure is None:
            self.measure = "state" if self.task == "state_prep" else "gate_mean"
        if self.measure not in MEASURES:
            raise ValueError(f"unknown measure {self.measure!r}")
        TimeGrid(self.grid["T"], self.grid["N"])
        # resolve every catalog name once so bad combinations fail early
        self.problem(0.0)

    @classmethod
    def from_dict(cls, data):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["trial"] = (self.trial if self.trial == "plain"
                      else {"kind": "resonant", "level": self.trial[1]})
        if not isinstance(self.coupling, str):
            raise ValueError("explicit coupling matrices are not serializable")
        return d

    def replace(self, **changes):
        return ExperimentConfig.from_dict({**self.to_dict(), **changes})

    @property
    def time_grid(self):
        return TimeGrid(self.grid["T"], self.grid["N"])

    def problem(self, gamma):
        return make_problem(self.system, self.channel, gamma, self.gate, self.state_set,
                            self.task, self.trial, self.time_grid,
                            self.optimizer["lambda"], self.coupling)


@dataclass
class SweepRecord:
    gamma: float
    task: str
    system: str
    channel: str
    gate: str
    trial: str
    F_unitary: float
    F_nonunitary: float
    stderr_u: float
    stderr_n: float
    iters_n: int
    J_final_n: float
    seed: int
    Ns: int = None
    converged_n: bool = True
    reason_n: str = ""


def measure_fidelity(config: ExperimentConfig, problem, field_):
    """(value, standard error or None) of the configured figure of merit."""
    if config.measure == "gate_mean":
        sampler = RandomStateSampler(problem.dim, config.fidelity["seed"], problem.subspace)
        return mean_gate_fidelity(problem, field_, int(config.fidelity["Ns"]), sampler)
    if config.measure == "states_mean":
        return state_set_fidelity(problem, field_), None
    rho_t = final_states(problem, field_, [projector(ket(0, problem.dim))])[0]
    return state_fidelity(rho_t, problem.target, ket(0, problem.dim)), None


def _sweep_point(config_dict, gamma, unitary):
    config = ExperimentConfig.from_dict(config_dict)
    problem = config.problem(gamma)
    u_field = problem.trial.with_samples(unitary.field.samples, problem.trial.samples)
    f_u, se_u = measure_fidelity(config, problem, u_field)
    if gamma == 0.0 and not config.warm_start:
        res = unitary  # the same problem; optimizing again would repeat it exactly
    else:
        opt = config.optimizer
        res = optimize(problem, opt["max_iters"], opt["tol"],
                       field=u_field if config.warm_start else None)
    if not res.converged:
        log.warning("gamma=%g: optimizer stopped without converging (%s)", gamma, res.reason)
    f_n, se_n = measure_fidelity(config, problem, res.field)
    return SweepRecord(gamma, config.task, config.system, config.channel, config.gate,
                       trial_label(config.trial), f_u, f_n, se_u, se_n, res.iterations,
                       res.J_history[-1], int(config.fidelity["seed"]),
                       int(config.fidelity["Ns"]) if se_u is not None else None,
                       res.converged, res.reason)


def optimize_unitary(config: ExperimentConfig):
    opt = config.optimizer
    return optimize(config.problem(0.0), opt["max_iters"], opt["tol"])


def run_sweep(config: ExperimentConfig, threads=1, unitary=None):
    """One :class:`SweepRecord` per decay rate, ordered as ``gamma_list``."""
    unitary = unitary or optimize_unitary(config)
    if not unitary.converged:
        log.warning("unitary optimization stopped without converging (%s)", unitary.reason)
    cfg = config.to_dict()
    args = [(cfg, g, unitary) for g in config.gamma_list]
    if threads > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(_sweep_point, *a) for a in args]
            return [f.result() for f in futures]
    return [_sweep_point(*a) for a in args]


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def records_to_csv(records, path=None, header=True):
    """CSV text (and file when ``path`` is given) in the fixed column order.

    The first line is a ``#`` comment with a timestamp; it is the only part
    that changes between identical runs.
    """
    buf = io.StringIO()
    if header:
        stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
        buf.write(f"# openkrotov sweep generated {stamp}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in records:
        w.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])
    text = buf.getvalue()
    if path is not None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)
    return text


def read_csv(path):
    """Rows of a sweep CSV as dicts of floats/strings, skipping comment lines."""
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = []
    for row in csv.DictReader(lines):
        out = {}
        for k, v in row.items():
            try:
                out[k] = float(v) if v != "" else None
            except ValueError:
                out[k] = v
        rows.append(out)
    return rows


# pulse files

def _floats(a):
    return "[" + ", ".join(format(float(x), ".17g") for x in a) + "]"


def save_pulse(path, field_: ControlField, metadata=None):
    """Write ``field_`` as JSON; samples carry 17 significant digits."""
    meta = dict(metadata or {})
    meta.setdefault("grid", {"T": field_.grid.T, "N": field_.grid.N})
    head = json.dumps({"format": PULSE_FORMAT, "version": 1, "metadata": meta},
                      indent=1, sort_keys=True)
    text = (head[:-2] + ",\n"
            + f' "samples": {_floats(field_.samples)},\n'
            + f' "envelope": {_floats(field_.envelope)},\n'
            + f' "reference": {_floats(field_.reference)}\n}}\n')
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(text)
    return Path(path)


def load_pulse(path, grid: TimeGrid = None):
    """Read a pulse file; returns ``(field, metadata)``.

    Raises ValueError when ``grid`` is given and differs from the stored grid.
    """
    with open(path) as fh:
        data = json.load(fh)
    if data.get("format") != PULSE_FORMAT:
        raise ValueError(f"{path}: not a pulse file")
    meta = data["metadata"]
    stored = TimeGrid(meta["grid"]["T"], meta["grid"]["N"])
    if grid is not None and grid != stored:
        raise ValueError(f"pulse grid {stored} does not match requested grid {grid}")
    fld = ControlField(stored, data["samples"], data.get("envelope"), data.get("reference"))
    return fld, meta


def pulse_metadata(config: ExperimentConfig, gamma, result, fidelity_value):
    return {
        "config": config.to_dict(),
        "system": config.system, "channel": config.channel, "gamma": gamma,
        "lambda": config.optimizer["lambda"], "lambda_final": result.lam_final,
        "grid": dict(config.grid), "seed": int(config.fidelity["seed"]),
        "iterations": result.iterations, "converged": result.converged,
        "reason": result.reason, "JT": result.JT, "J": result.J_history[-1],
        "measure": config.measure, "F": fidelity_value,
    }


def replay(path):
    """Re-evaluate a saved pulse; returns recorded and recomputed J_T and F."""
    fld, meta = load_pulse(path)
    config = ExperimentConfig.from_dict(meta["config"])
    problem = config.problem(meta["gamma"])
    if fld.grid != problem.grid:
        raise ValueError("pulse grid differs from its configuration")
    jt, _ = evaluate(problem, fld)
    f, se = measure_fidelity(config, problem, fld)
    return {"JT_recorded": meta["JT"], "JT_replayed": jt,
            "F_recorded": meta["F"], "F_replayed": f, "stderr": se,
            "max_abs_diff": max(abs(jt - meta["JT"]), abs(f - meta["F"]))}


def optimize_config(config: ExperimentConfig, gamma=None, out=None):
    """Single optimization at ``gamma`` (first entry of gamma_list by default)."""
    gamma = config.gamma_list[0] if gamma is None else float(gamma)
    problem = config.problem(gamma)
    opt = config.optimizer
    res = optimize(problem, opt["max_iters"], opt["tol"])
    f, _ = measure_fidelity(config, problem, res.field)
    meta = pulse_metadata(config, gamma, res, f)
    if out is not None:
        save_pulse(out, res.field, meta)
    return res, meta


# figure protocols

def figure_configs(figure_id, seed=0):
    """Named configurations making up one figure."""
    fid = {"Ns": DEFAULT_NS, "seed": seed}
    out = {}
    if figure_id == 1:
        for system in ("qubit", "qutrit"):
            for ch in ("dephasing", "amp_damping"):
                out[f"fig1_{system}_{ch}"] = ExperimentConfig(
                    system, ch, gate="qft", task="state_prep", state_set="ground",
                    optimizer={"lambda": 0.02, "max_iters": 1000, "tol": 1e-7},
                    fidelity=fid, measure="state")
    elif figure_id in (2, 3):
        measure = "states_mean" if figure_id == 2 else "gate_mean"
        for system in ("qubit", "qutrit"):
            for ch in ("dephasing", "amp_damping"):
                out[f"fig{figure_id}_{system}_{ch}"] = ExperimentConfig(
                    system, ch, gate="qft", task="gate", fidelity=fid, measure=measure)
        if figure_id == 3:
            for ch in ("dephasing", "amp_damping"):
                out[f"fig3_qubit_{ch}_goerz"] = ExperimentConfig(
                    "qubit", ch, gate="qft", task="gate", state_set="goerz",
                    fidelity=fid, measure="gate_mean")
    elif figure_id == 5:
        for system in ("qubit", "qutrit"):
            coupling = "from_gate" if system == "qutrit" else "default"
            for ch in ("dephasing", "amp_damping"):
                for gate in ("u1", "u2", "u3", "u4"):
                    out[f"fig5_{system}_{ch}_{gate}"] = ExperimentConfig(
                        system, ch, [0.01], gate=gate, task="gate", coupling=coupling,
                        fidelity=fid, measure="gate_mean")
    elif figure_id == 6:
        opt = {"lambda": 3.0, "max_iters": 300, "tol": 1e-7}
        for case, level in RESONANT_LEVEL.items():
            for trial in ("plain", ("resonant", level)):
                out[f"fig6_four_level_{case}_{trial_label(trial)}"] = ExperimentConfig(
                    "four_level", case, trial=trial, optimizer=opt, fidelity=fid)
            out[f"fig6_two_qubit_{case}"] = ExperimentConfig(
                "two_qubit", case, optimizer={**opt, "lambda": 1.0}, fidelity=fid)
    elif figure_id == 7:
        out["fig7"] = ExperimentConfig(
            "four_level", "leak_iv", [0.0, 0.1], optimizer={"lambda": 3.0, "max_iters": 300,
                                                            "tol": 1e-7}, fidelity=fid)
    else:
        raise ValueError(f"figure must be one of {FIGURES}")
    return out


def _merge_groups(configs):
    """Sweeps sharing everything but the gate are written to one CSV (fig5)."""
    groups = {}
    for name, cfg in configs.items():
        key = name.rsplit("_", 1)[0] if name.startswith("fig5_") else name
        groups.setdefault(key, []).append(cfg)
    return groups


def reproduce(figure_id, out_dir, seed=0, threads=1):
    """Run one figure protocol and write its CSV files; returns the paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    figure_id = int(figure_id)
    if figure_id == 7:
        return reproduce_fig7(out_dir, seed)
    paths = []
    for name, cfgs in _merge_groups(figure_configs(figure_id, seed)).items():
        records = []
        for cfg in cfgs:
            log.info("running %s (%s)", name, cfg.gate)
            records += run_sweep(cfg, threads)
        path = out_dir / f"{name}.csv"
        records_to_csv(records, path)
        paths.append(path)
    return paths


def node_samples(samples):
    """Piecewise-constant field at the N+1 grid nodes (last node repeats)."""
    return np.append(samples, samples[-1])


def population_table(grid, pops, eps_u, eps_n):
    buf = io.StringIO()
    stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
    buf.write(f"# openkrotov populations generated {stamp}\n")
    w = csv.writer(buf, lineterminator="\n")
    d = pops.shape[1]
    w.writerow(["t"] + [f"p{i}" for i in range(d)] + ["eps_unitary", "eps_nonunitary"])
    eu, en = node_samples(eps_u), node_samples(eps_n)
    for k, t in enumerate(grid.nodes):
        w.writerow([repr(float(t))] + [repr(float(p)) for p in pops[k]]
                   + [repr(float(eu[k])), repr(float(en[k]))])
    return buf.getvalue()


def fig7_data(config: ExperimentConfig):
    """Unitary and non-unitary case (iv) results plus |0> population traces.

    Panel gamma=0 propagates |0> under the unitary field without noise; panel
    gamma=0.1 propagates it under the non-unitary field with noise.
    """
    gamma = max(config.gamma_list)
    opt = config.optimizer
    p0, pn = config.problem(0.0), config.problem(gamma)
    res_u = optimize(p0, opt["max_iters"], opt["tol"])
    res_n = optimize(pn, opt["max_iters"], opt["tol"])
    rho0 = projector(ket(0, p0.dim))
    traj_u = propagate_forward(rho0, res_u.field, p0.h0, p0.h1, p0.channel)
    traj_n = propagate_forward(rho0, res_n.field, pn.h0, pn.h1, pn.channel)
    return res_u, res_n, traj_u, traj_n


def reproduce_fig7(out_dir, seed=0):
    config = figure_configs(7, seed)["fig7"]
    gamma = max(config.gamma_list)
    res_u, res_n, traj_u, traj_n = fig7_data(config)
    grid = config.time_grid
    paths = []
    for label, traj in (("gamma0", traj_u), (f"gamma{gamma:g}", traj_n)):
        path = Path(out_dir) / f"fig7_{label}.csv"
        path.write_text(population_table(grid, traj.populations(), res_u.field.samples,
                                         res_n.field.samples))
        paths.append(path)
    for label, g, res in (("unitary", 0.0, res_u), ("nonunitary", gamma, res_n)):
        f, _ = measure_fidelity(config, config.problem(g), res.field)
        path = Path(out_dir) / f"fig7_pulse_{label}.json"
        save_pulse(path, res.field, pulse_metadata(config, g, res, f))
        paths.append(path)
    return paths


def time_integrated_population(traj, level):
    """Trapezoid integral of the population of ``level`` over the trajectory."""
    pops = traj.populations()[:, level]
    dt = traj.grid.dt
    return float(dt * (pops.sum() - 0.5 * (pops[0] + pops[-1])))


def relative_gain(rec):
    return (rec.F_nonunitary - rec.F_unitary) / rec.F_unitary

