"""Gate fidelity of the dephased tripod rotation.

Targets are the analytic gate applied to each initial qubit state.  The
trajectory picture splits F_i into the no-jump overlap and a one-jump
integral over the jump time; the master-equation picture uses the Uhlmann
fidelity.  Averages run over the six axial Bloch states.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import closed, drive, model, propagate
from . import open_system as osy

__all__ = [
    "AXIAL_STATES",
    "FidelityReport",
    "uhlmann",
    "target_state",
    "fidelity_nojump",
    "nojump_closed_form",
    "one_jump_integrand",
    "fidelity_one_jump",
    "lindblad_propagator",
    "fidelity_uhlmann",
    "fidelity_mc",
    "average_fidelity",
    "bloch_average_uhlmann",
    "fidelity_sweep",
]

_R = 1.0 / math.sqrt(2.0)
AXIAL_STATES = {
    "+z": np.array([1.0, 0.0], dtype=complex),
    "-z": np.array([0.0, 1.0], dtype=complex),
    "+x": np.array([_R, _R], dtype=complex),
    "-x": np.array([_R, -_R], dtype=complex),
    "+y": np.array([_R, 1j * _R], dtype=complex),
    "-y": np.array([_R, -1j * _R], dtype=complex),
}
MODES = ("nojump", "one_jump", "mc", "uhlmann")
DEFAULT_NODES = 200


def _floor(w: np.ndarray) -> np.ndarray:
    # eigenvalues at rounding level would otherwise come back as ~1e-8 square roots
    cut = 4 * len(w) * np.finfo(float).eps * np.max(np.abs(w))
    return np.where(w > cut, w, 0.0)


def _psd_sqrt(rho: np.ndarray, tol: float) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    if w[0] < -tol:
        raise ValueError(f"density matrix has eigenvalue {w[0]:.3g} below -{tol}")
    return (v * np.sqrt(_floor(w))) @ v.conj().T


def uhlmann(rho_target: np.ndarray, rho: np.ndarray, tol: float = 1e-8) -> float:
    """(Tr sqrt(sqrt(rho_target) rho sqrt(rho_target)))^2 by Hermitian eigendecomposition."""
    rho_target = np.asarray(rho_target, dtype=complex)
    rho = np.asarray(rho, dtype=complex)
    s = _psd_sqrt(rho_target, tol)
    _psd_sqrt(rho, tol)
    m = s @ rho @ s
    w = np.linalg.eigvalsh(0.5 * (m + m.conj().T))
    return float(np.sum(np.sqrt(_floor(w))) ** 2)


def _qubit(psi_q) -> np.ndarray:
    psi_q = np.asarray(psi_q, dtype=complex)
    if psi_q.shape == (4,):
        if abs(psi_q[model.E]) > 0 or abs(psi_q[model.G2]) > 0:
            raise ValueError("initial state must be supported on {|0>, |1>}")
        psi_q = psi_q[[model.G0, model.G1]]
    n = np.linalg.norm(psi_q)
    if abs(n - 1.0) > 1e-10:
        raise ValueError("initial state must be normalized")
    return psi_q


def target_state(psi_q, schedule: drive.PulseSchedule) -> np.ndarray:
    """U psi_q embedded in the four-level space."""
    psi_q = _qubit(psi_q)
    U = closed.gate_matrix(schedule.theta01_configured, schedule.phi01, closed.geometric_phase(schedule))
    out = np.zeros(4, dtype=complex)
    out[[model.G0, model.G1]] = U @ psi_q
    return out


def _embed(psi_q) -> np.ndarray:
    out = np.zeros(4, dtype=complex)
    out[[model.G0, model.G1]] = psi_q
    return out


def fidelity_nojump(psi_q, schedule: drive.PulseSchedule, gamma0: float, *,
                    table: osy.NoJumpTable | None = None, dt: float = propagate.DEFAULT_DT) -> float:
    """|<psi_0|psi_nj>|^2 with the non-normalized no-jump state at t_f."""
    psi_q = _qubit(psi_q)
    if table is None:
        table = osy.NoJumpTable(schedule, gamma0, dt)
    fin = table.state(_embed(psi_q), table.last)
    return float(abs(np.vdot(target_state(psi_q, schedule), fin)) ** 2)


def _dark_weights(psi_q, theta01, phi01):
    c, s = math.cos(theta01), math.sin(theta01)
    e = np.exp(-1j * phi01)
    cd1 = -(s * psi_q[0] + c * e * psi_q[1])
    cd2 = c * psi_q[0] - s * e * psi_q[1]
    return abs(cd1) ** 2, abs(cd2) ** 2


def nojump_closed_form(psi_q, schedule: drive.PulseSchedule, gamma0: float, phases: dict) -> float:
    """No-jump fidelity from the final dark-state phases and exponents.

    ``phases`` holds gamma1, gamma2, alpha, beta at t_f.  With weights
    w_k = |C_Dk(t_i)|^2 the result is
    |w1 exp(-gamma0 alpha + i(gamma1 - gamma_D1)) + w2 exp(-gamma0 beta + i gamma2)|^2.
    """
    psi_q = _qubit(psi_q)
    w1, w2 = _dark_weights(psi_q, schedule.theta01_configured, schedule.phi01)
    gd = closed.geometric_phase(schedule)

    def term(w, exponent, phase):
        if w < 1e-24:
            return 0.0
        decay = 1.0 if gamma0 == 0 else math.exp(-gamma0 * exponent)
        return w * decay * np.exp(1j * phase)

    amp = term(w1, phases["alpha"], phases["gamma1"] - gd) + term(w2, phases["beta"], phases["gamma2"])
    return float(abs(amp) ** 2)


def _midpoint_nodes(schedule, nodes):
    if nodes < 50:
        raise ValueError("need at least 50 quadrature nodes")
    edges = np.linspace(schedule.t_i, schedule.t_f, nodes + 1)
    return 0.5 * (edges[1:] + edges[:-1]), edges[1] - edges[0]


def one_jump_integrand(psi_q, schedule: drive.PulseSchedule, gamma0: float, table: osy.NoJumpTable,
                       idx=None) -> np.ndarray:
    """2 gamma0 |<0|psi_nj(t_j)>|^2 |<psi_0|K(t_f, t_j)|0>|^2 at grid indices ``idx``."""
    psi_q = _qubit(psi_q)
    idx = np.arange(table.last + 1) if idx is None else np.asarray(idx)
    c = table.K[idx, model.G0, :] @ _embed(psi_q)
    e0 = np.zeros((len(idx), 4, 1), dtype=complex)
    e0[:, model.G0, 0] = 1.0
    cols = np.linalg.solve(table.K[idx], e0)[..., 0]
    row = target_state(psi_q, schedule).conj() @ table.K[table.last]
    return 2.0 * gamma0 * np.abs(c) ** 2 * np.abs(cols @ row) ** 2


def fidelity_one_jump(psi_q, schedule: drive.PulseSchedule, gamma0: float, nodes: int = DEFAULT_NODES, *,
                      table: osy.NoJumpTable | None = None, dt: float = propagate.DEFAULT_DT) -> float:
    """No-jump fidelity plus the one-jump integral (composite midpoint in t_j).

    Trajectories with two or more jumps are left out.  A supplied
    ``table`` must contain the midpoint nodes as grid points.
    """
    psi_q = _qubit(psi_q)
    t_nodes, h = _midpoint_nodes(schedule, nodes)
    if table is None:
        table = osy.NoJumpTable(schedule, gamma0, dt, extra_times=t_nodes)
    f_nj = fidelity_nojump(psi_q, schedule, gamma0, table=table)
    if gamma0 == 0:
        return f_nj
    idx = np.searchsorted(table.t, t_nodes)
    idx = np.clip(idx, 0, table.last)
    if np.max(np.abs(table.t[idx] - t_nodes)) > 1e-12:
        raise ValueError("table grid does not contain the quadrature nodes")
    return f_nj + h * float(np.sum(one_jump_integrand(psi_q, schedule, gamma0, table, idx)))


def lindblad_propagator(schedule: drive.PulseSchedule, gamma0: float, dt: float = propagate.DEFAULT_DT) -> np.ndarray:
    """16x16 map vec(rho(t_i)) -> vec(rho(t_f)) (row-major vec)."""
    H = propagate.hamiltonian_source(schedule)
    D = propagate.dephasing_dissipator(gamma0)
    grid = propagate.StepControl.for_schedule(schedule, dt=dt).grid()
    return propagate.final_propagator(lambda t: propagate.lindblad_superoperator(H(t), D), grid)


def fidelity_uhlmann(psi_q, schedule: drive.PulseSchedule, gamma0: float, *, propagator: np.ndarray | None = None,
                     dt: float = propagate.DEFAULT_DT) -> float:
    """Uhlmann fidelity of the master-equation state against the pure target."""
    psi_q = _qubit(psi_q)
    if propagator is None:
        propagator = lindblad_propagator(schedule, gamma0, dt)
    v = _embed(psi_q)
    rho = (propagator @ np.outer(v, v.conj()).reshape(-1)).reshape(4, 4)
    t = target_state(psi_q, schedule)
    return uhlmann(np.outer(t, t.conj()), rho)


def fidelity_mc(psi_q, schedule: drive.PulseSchedule, gamma0: float, n: int, seed: int, *,
                table: osy.NoJumpTable | None = None, dt: float = propagate.DEFAULT_DT, workers: int = 1):
    """(mean, standard error) of |<psi_0|psi_traj>|^2 over ``n`` normalized trajectories."""
    psi_q = _qubit(psi_q)
    if table is None:
        table = osy.NoJumpTable(schedule, gamma0, dt)
    v = _embed(psi_q)
    jumps = osy.sample_many(table, v, n, seed, workers=workers)
    states, counts = osy.final_states(table, v, jumps)
    f = np.abs(states.conj() @ target_state(psi_q, schedule)) ** 2
    mean = float(np.dot(counts, f) / n)
    var = float(np.dot(counts, (f - mean) ** 2) / max(n - 1, 1))
    return mean, math.sqrt(var / n)


@dataclass
class FidelityReport:
    """Six-state averages; modes that were not evaluated are NaN."""

    gamma0: float
    f_nojump: float
    f_one_jump: float
    f_total_mc: float
    f_uhlmann: float
    f_mc_stderr: float
    per_state: tuple  # (label, {mode: F_i}) for each axial state

    def as_row(self) -> tuple:
        return (self.gamma0, self.f_nojump, self.f_one_jump, self.f_total_mc, self.f_uhlmann)


def average_fidelity(schedule: drive.PulseSchedule, gamma0: float, mode="all", *, nodes: int = DEFAULT_NODES,
                     n_traj: int = 10000, seed: int = 0, dt: float = propagate.DEFAULT_DT,
                     workers: int = 1) -> FidelityReport:
    """Average fidelity over the six axial states for one or more modes.

    ``mode`` is one of nojump, one_jump, mc, uhlmann, a sequence of them,
    or "all".  Trajectory seeds are offset per state so the six ensembles
    are independent.
    """
    modes = MODES if mode == "all" else ((mode,) if isinstance(mode, str) else tuple(mode))
    for m in modes:
        if m not in MODES:
            raise ValueError(f"unknown fidelity mode {m!r}")
    table = None
    if {"nojump", "one_jump", "mc"} & set(modes):
        extra = _midpoint_nodes(schedule, nodes)[0] if "one_jump" in modes else ()
        table = osy.NoJumpTable(schedule, gamma0, dt, extra_times=extra)
    prop = lindblad_propagator(schedule, gamma0, dt) if "uhlmann" in modes else None
    per_state = []
    errs = []
    for k, (label, q) in enumerate(AXIAL_STATES.items()):
        vals = {}
        if "nojump" in modes:
            vals["nojump"] = fidelity_nojump(q, schedule, gamma0, table=table)
        if "one_jump" in modes:
            vals["one_jump"] = fidelity_one_jump(q, schedule, gamma0, nodes, table=table)
        if "mc" in modes:
            vals["mc"], err = fidelity_mc(q, schedule, gamma0, n_traj, seed + k * n_traj, table=table,
                                          workers=workers)
            errs.append(err)
        if "uhlmann" in modes:
            vals["uhlmann"] = fidelity_uhlmann(q, schedule, gamma0, propagator=prop)
        per_state.append((label, vals))

    def mean(m):
        if m not in modes:
            return float("nan")
        return float(np.mean([v[m] for _, v in per_state]))

    stderr = float(np.sqrt(np.sum(np.square(errs))) / len(errs)) if errs else float("nan")
    return FidelityReport(gamma0, mean("nojump"), mean("one_jump"), mean("mc"), mean("uhlmann"), stderr,
                          tuple(per_state))


def bloch_average_uhlmann(schedule: drive.PulseSchedule, gamma0: float, n: int = 200, seed: int = 0, *,
                          propagator: np.ndarray | None = None, dt: float = propagate.DEFAULT_DT) -> float:
    """Uhlmann fidelity averaged over ``n`` uniformly random Bloch-sphere states."""
    if propagator is None:
        propagator = lindblad_propagator(schedule, gamma0, dt)
    rng = np.random.default_rng(seed)
    z = rng.uniform(-1.0, 1.0, n)
    phi = rng.uniform(0.0, 2.0 * np.pi, n)
    th = np.arccos(z)
    states = np.stack([np.cos(th / 2), np.exp(1j * phi) * np.sin(th / 2)], axis=1)
    return float(np.mean([fidelity_uhlmann(q, schedule, gamma0, propagator=propagator) for q in states]))


def fidelity_sweep(schedule: drive.PulseSchedule, gammas, mode="all", **kwargs) -> list[FidelityReport]:
    """:func:`average_fidelity` for each rate in ``gammas``."""
    return [average_fidelity(schedule, float(g), mode, **kwargs) for g in gammas]
