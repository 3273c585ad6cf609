"""Dephased tripod: no-jump evolution, complex geometric phases and quantum jumps.

The single Lindblad operator is C0 = sqrt(2 gamma0)|0><0|.  Between jumps
the state follows the non-Hermitian Hamiltonian H - i gamma0 |0><0|; a
jump projects it onto |0>.  Dark-state coefficients are read off with the
left eigenvectors in the interaction picture anchored at the schedule's
t_i and written as C(t) = exp(-gamma0 alpha) exp(i gamma) C(start).
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import drive, model, propagate
from .closed import AdiabaticityError, BRIGHT_THRESHOLD

__all__ = [
    "PhaseLedger",
    "NoJumpRun",
    "PostJumpRun",
    "TrajectoryRecord",
    "NoJumpTable",
    "jump_probability",
    "apply_jump",
    "extract_phase",
    "nojump_run",
    "l_matrix",
    "nojump_populations",
    "post_jump_populations",
    "post_jump_run",
    "run_trajectory",
    "sample_jumps",
    "sample_many",
    "final_states",
    "average_trajectories",
    "ensemble_populations",
    "trajectory_rng",
]

_ZERO_COMPONENT = 1e-14
_JUMP_WARN = 0.05


# --------------------------------------------------------------------------
# Jump primitives


def jump_probability(psi, gamma0: float, dt: float) -> float:
    """dt <psi|C0^dag C0|psi> for the normalized ``psi``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    psi = np.asarray(psi, dtype=complex)
    p = 2.0 * gamma0 * dt * abs(psi[model.G0]) ** 2 / np.vdot(psi, psi).real
    if p > _JUMP_WARN:
        warnings.warn(f"jump probability {p:.3g} per step is not small; reduce dt", RuntimeWarning)
    return float(p)


def apply_jump(psi, gamma0: float, normalize: bool = False) -> np.ndarray:
    """C0 |psi>, i.e. sqrt(2 gamma0) <0|psi> |0>; optionally renormalized."""
    psi = np.asarray(psi, dtype=complex)
    c = psi[model.G0]
    if abs(c) < _ZERO_COMPONENT:
        raise ValueError("state has no |0> component; a dephasing jump is impossible")
    out = np.zeros(4, dtype=complex)
    out[model.G0] = c / abs(c) if normalize else math.sqrt(2.0 * gamma0) * c
    return out


def extract_phase(c_now, c_start, gamma0: float):
    """(phase, exponent) with c_now = exp(-gamma0 exponent) exp(i phase) c_start.

    For an array ``c_now`` the phase is unwrapped along the array.  The
    exponent is NaN at gamma0 = 0, where only |c_now / c_start| is meaningful.
    """
    if np.all(np.abs(c_start) == 0):
        raise ValueError("starting coefficient is zero")
    ratio = np.asarray(c_now, dtype=complex) / c_start
    phase = np.angle(ratio)
    if phase.ndim:
        phase = np.unwrap(phase)
    if gamma0 > 0:
        with np.errstate(divide="ignore"):
            exponent = -np.log(np.abs(ratio)) / gamma0
    else:
        exponent = np.full(np.shape(ratio), np.nan)
    if np.ndim(phase) == 0:
        return float(phase), float(exponent)
    return phase, exponent


# --------------------------------------------------------------------------
# Phase ledgers


@dataclass
class PhaseLedger:
    """Phases accumulated since ``segment_start`` (t_i or the latest jump).

    Arrays are sampled on ``t``.  ``ratio1``/``ratio2`` are the primitive
    C(t)/C(start) values; gamma/alpha/beta are views of them.  Bright
    entries stay zero for segments without bright population.  Quantities
    for a dark state with zero starting weight are NaN.
    """

    t: np.ndarray
    gamma0: float
    segment_start: float
    ratio1: np.ndarray
    ratio2: np.ndarray
    gamma1: np.ndarray
    gamma2: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    gamma_b: np.ndarray = None
    delta: np.ndarray = None
    theta_plus: np.ndarray = None
    theta_minus: np.ndarray = None

    def __post_init__(self):
        z = np.zeros_like(self.t)
        for name in ("gamma_b", "delta", "theta_plus", "theta_minus"):
            if getattr(self, name) is None:
                setattr(self, name, z.copy())

    def final(self) -> dict:
        keys = ("gamma1", "gamma2", "alpha", "beta", "gamma_b", "delta", "theta_plus", "theta_minus",
                "ratio1", "ratio2")
        out = {k: getattr(self, k)[-1] for k in keys}
        out["t"] = self.t[-1]
        return out

    def factor1(self):
        """exp(-gamma0 alpha + i gamma1) at each sample (0 where undefined)."""
        return np.nan_to_num(self.ratio1, nan=0.0)

    def factor2(self):
        return np.nan_to_num(self.ratio2, nan=0.0)


def _dark_ratios(coeffs, start_coeffs):
    out = []
    for k in (model.D1, model.D2):
        c0 = start_coeffs[k]
        if abs(c0) < 1e-12:
            out.append(np.full(coeffs.shape[0], np.nan + 0j))
        else:
            out.append(coeffs[:, k] / c0)
    return out


def _phase_views(ratio, gamma0):
    if np.all(np.isnan(ratio)):
        nan = np.full(ratio.shape, np.nan)
        return nan, nan.copy()
    return extract_phase(ratio, 1.0, gamma0)


def _build_ledger(schedule, t, coeffs, start_coeffs, gamma0, bright: bool) -> PhaseLedger:
    r1, r2 = _dark_ratios(coeffs, start_coeffs)
    g1, a = _phase_views(r1, gamma0)
    g2, b = _phase_views(r2, gamma0)
    kw = {}
    if bright:
        s01 = math.sin(schedule.theta01_configured)
        kw["delta"] = drive.cumulative_integral(
            schedule, lambda s: 0.5 * s01**2 * np.sin(s.theta_h) ** 2, t)
        kw["gamma_b"] = drive.cumulative_integral(
            schedule, lambda s: -0.5 * schedule.phi2_rate * np.cos(s.theta_h) ** 2, t)
        kw["theta_plus"] = drive.cumulative_integral(schedule, lambda s: -0.5 * s.rms, t)
        kw["theta_minus"] = -kw["theta_plus"]
    return PhaseLedger(t, gamma0, float(t[0]), r1, r2, g1, g2, a, b, **kw)


def _interaction_coeffs(schedule, gamma0, t, states_s):
    """Left-eigenvector coefficients of Schroedinger-picture states."""
    f = model.picture_factor(gamma0, t, schedule.t_i)
    states_i = np.array(states_s, dtype=complex)
    states_i[:, model.G0] *= f
    frame = model.eigensystem_open(drive.sample(schedule, t), gamma0, t, schedule.t_i, allow_degenerate=True)
    return frame.project(states_i), frame


# --------------------------------------------------------------------------
# No-jump evolution


@dataclass
class NoJumpRun:
    t: np.ndarray
    states: np.ndarray  # Schroedinger picture, not renormalized
    states_interaction: np.ndarray
    coeffs: np.ndarray  # (+, -, D1, D2) from the left eigenvectors
    ledger: PhaseLedger
    initial_coeffs: np.ndarray

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    @property
    def norm_sq(self) -> np.ndarray:
        return np.sum(np.abs(self.states) ** 2, axis=1)

    @property
    def populations(self) -> np.ndarray:
        """Normalized populations along the run."""
        return np.abs(self.states) ** 2 / self.norm_sq[:, None]


def _as_state4(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    if psi.shape == (2,):
        return np.array([psi[0], psi[1], 0, 0], dtype=complex)
    return psi


def nojump_run(psi_i, schedule: drive.PulseSchedule, gamma0: float, *, dt: float = propagate.DEFAULT_DT,
               cadence: int = 200, threshold: float = BRIGHT_THRESHOLD) -> NoJumpRun:
    """Integrate the interaction-picture no-jump equation and fill the phase ledger."""
    psi_i = _as_state4(psi_i)
    s0 = drive.sample(schedule, schedule.t_i)
    f0 = model.eigensystem_open(s0, gamma0, schedule.t_i, schedule.t_i, allow_degenerate=True)
    c0 = f0.project(psi_i)
    if abs(c0[model.PLUS]) ** 2 + abs(c0[model.MINUS]) ** 2 > 1e-12:
        raise ValueError("initial state must lie in the dark subspace at t_i")
    ctl = propagate.StepControl.for_schedule(schedule, dt=dt, cadence=cadence)
    H = propagate.hamiltonian_source(schedule, gamma0, picture="interaction")
    tr = propagate.evolve_state(psi_i, H, ctl)
    t = tr.t
    frame = model.eigensystem_open(drive.sample(schedule, t), gamma0, t, schedule.t_i, allow_degenerate=True)
    coeffs = frame.project(tr.states)
    nrm = np.sum(np.abs(coeffs) ** 2, axis=1)
    bright = (np.abs(coeffs[:, model.PLUS]) ** 2 + np.abs(coeffs[:, model.MINUS]) ** 2) / nrm
    if np.max(bright) > threshold:
        k = int(np.argmax(bright))
        raise AdiabaticityError(f"bright population {bright[k]:.3g} at t={t[k]:.4g} exceeds {threshold}")
    states_s = np.array(tr.states)
    states_s[:, model.G0] /= model.picture_factor(gamma0, t, schedule.t_i)
    ledger = _build_ledger(schedule, t, coeffs, c0, gamma0, bright=False)
    return NoJumpRun(t, states_s, tr.states, coeffs, ledger, c0)


def l_matrix(ledger: PhaseLedger | dict, theta01: float, phi01: float, gamma0: float) -> np.ndarray:
    """2x2 map from the initial qubit state to the final non-normalized one."""
    fin = ledger.final() if isinstance(ledger, PhaseLedger) else ledger
    z1 = complex(np.nan_to_num(fin["ratio1"], nan=0.0))
    z2 = complex(np.nan_to_num(fin["ratio2"], nan=0.0))
    c, s = math.cos(theta01), math.sin(theta01)
    off = c * s * (z1 - z2)
    return np.array(
        [
            [z2 * c * c + z1 * s * s, off * np.exp(-1j * phi01)],
            [off * np.exp(1j * phi01), z2 * s * s + z1 * c * c],
        ]
    )


def nojump_populations(ledger, psi_q, theta01: float, phi01: float, gamma0: float):
    """(P0, P1) after the no-jump sequence from the L matrix and its normalization.

    N = |C_D1(t_i)|^2 exp(-2 gamma0 alpha) + |C_D2(t_i)|^2 exp(-2 gamma0 beta).
    """
    psi_q = np.asarray(psi_q, dtype=complex)
    fin = ledger.final() if isinstance(ledger, PhaseLedger) else ledger
    c, s = math.cos(theta01), math.sin(theta01)
    e01 = np.exp(1j * phi01)
    cd1 = -(s * psi_q[0] + c * np.conj(e01) * psi_q[1])
    cd2 = c * psi_q[0] - s * np.conj(e01) * psi_q[1]
    z1 = complex(np.nan_to_num(fin["ratio1"], nan=0.0))
    z2 = complex(np.nan_to_num(fin["ratio2"], nan=0.0))
    N = abs(cd1) ** 2 * abs(z1) ** 2 + abs(cd2) ** 2 * abs(z2) ** 2
    out = l_matrix(fin, theta01, phi01, gamma0) @ psi_q
    return np.abs(out) ** 2 / N


# --------------------------------------------------------------------------
# Post-jump evolution


@dataclass
class PostJumpRun:
    t_jump: float
    theta_h_jump: float
    ledger: PhaseLedger
    populations: np.ndarray  # closed form from the ledger
    populations_direct: np.ndarray  # normalized direct integration
    norm: float  # N of the closed form
    t: np.ndarray = field(repr=False, default=None)
    states: np.ndarray = field(repr=False, default=None)


def post_jump_populations(fin: dict, theta_h_jump: float, theta01: float, gamma0: float):
    """Final (P0, P1, Pe, P2) and N after a jump, from the segment's phases.

    The state right after the jump is |0> = -cos(theta_H) sin(theta01)|D1>
    + cos(theta01)|D2> + sin(theta_H) sin(theta01)(|+> + |->)/sqrt(2);
    each component then picks up its own complex phase.
    """
    z1 = complex(np.nan_to_num(fin["ratio1"], nan=0.0))
    z2 = complex(np.nan_to_num(fin["ratio2"], nan=0.0))
    s, c = math.sin(theta01), math.cos(theta01)
    sh, ch = math.sin(theta_h_jump), math.cos(theta_h_jump)
    bright = math.exp(-2.0 * gamma0 * fin["delta"]) if gamma0 > 0 else 1.0
    N = s * s * ch * ch * abs(z1) ** 2 + c * c * abs(z2) ** 2 + s * s * sh * sh * bright
    p0 = abs(c * c * z2 + s * s * ch * z1) ** 2 / N
    p1 = s * s * c * c * abs(z2 - ch * z1) ** 2 / N
    pe = s * s * sh * sh * bright * math.sin(fin["theta_minus"]) ** 2 / N
    p2 = s * s * sh * sh * bright * math.cos(fin["theta_minus"]) ** 2 / N
    return np.array([p0, p1, pe, p2]), N


def post_jump_run(t_j: float, schedule: drive.PulseSchedule, gamma0: float, *,
                  dt: float = propagate.DEFAULT_DT, cadence: int = 200) -> PostJumpRun:
    """Restart from |0> at ``t_j`` and compare closed-form and integrated final populations."""
    if not schedule.t_i < t_j < schedule.t_f:
        raise ValueError("jump time must lie inside (t_i, t_f)")
    ctl = propagate.StepControl.for_schedule(schedule, dt=dt, cadence=cadence, t_start=t_j)
    H = propagate.hamiltonian_source(schedule, gamma0, picture="interaction")
    psi0 = np.zeros(4, dtype=complex)
    psi0[model.G0] = model.picture_factor(gamma0, t_j, schedule.t_i)
    tr = propagate.evolve_state(psi0, H, ctl)
    t = tr.t
    frame = model.eigensystem_open(drive.sample(schedule, t), gamma0, t, schedule.t_i, allow_degenerate=True)
    coeffs = frame.project(tr.states)
    sj = drive.sample(schedule, t_j)
    th = float(sj.theta_h)
    s01 = math.sin(schedule.theta01_configured)
    start = np.array([s01 * math.sin(th) / math.sqrt(2.0)] * 2
                     + [-math.cos(th) * s01, math.cos(schedule.theta01_configured)], dtype=complex)
    ledger = _build_ledger(schedule, t, coeffs, start, gamma0, bright=True)
    pops, N = post_jump_populations(ledger.final(), th, schedule.theta01_configured, gamma0)
    states_s = np.array(tr.states)
    states_s[:, model.G0] /= model.picture_factor(gamma0, t, schedule.t_i)
    fin = states_s[-1]
    direct = np.abs(fin) ** 2 / np.vdot(fin, fin).real
    return PostJumpRun(t_j, th, ledger, pops, direct, N, t, states_s)


# --------------------------------------------------------------------------
# Stochastic trajectories


def trajectory_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for trajectory ``index``: child ``index`` of SeedSequence(seed)."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


class NoJumpTable:
    """No-jump propagator K(t_n, t_i) (Schroedinger picture) on every grid point.

    A segment that starts at grid index m with normalized state psi is
    represented by w = K_m^{-1} psi, so the state at n >= m is K_n w.
    """

    def __init__(self, schedule: drive.PulseSchedule, gamma0: float, dt: float = propagate.DEFAULT_DT,
                 extra_times=()):
        self.schedule = schedule
        self.gamma0 = gamma0
        ctl = propagate.StepControl.for_schedule(schedule, dt=dt, extra=tuple(extra_times))
        tr = propagate.propagator_table(propagate.hamiltonian_source(schedule, gamma0), ctl)
        self.t = tr.t
        self.K = tr.states
        self.last = len(self.t) - 1

    def index(self, t: float) -> int:
        return int(np.argmin(np.abs(self.t - t)))

    def state(self, w: np.ndarray, idx) -> np.ndarray:
        return self.K[idx] @ w

    def norm_sq(self, w: np.ndarray, idx):
        v = self.K[idx] @ w
        return np.sum(np.abs(v) ** 2, axis=-1)

    def anchor(self, m: int, psi: np.ndarray) -> np.ndarray:
        """w such that the segment state at index m equals ``psi``."""
        return np.linalg.solve(self.K[m], psi)

    def states_from(self, w: np.ndarray, m: int, idx=None) -> np.ndarray:
        idx = np.arange(m, self.last + 1) if idx is None else idx
        return np.einsum("nij,j->ni", self.K[idx], w)


def _first_crossing(norm_at, start: int, last: int, u: float):
    """Smallest n in (start, last] with norm_at(n) <= u, by bisection; None if none."""
    if norm_at(last) > u:
        return None
    lo, hi = start, last
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if norm_at(mid) <= u:
            hi = mid
        else:
            lo = mid
    return hi


def sample_jumps(table: NoJumpTable, psi_i, rng: np.random.Generator, method: str = "threshold",
                 n0: np.ndarray | None = None) -> list[int]:
    """Grid indices of the jumps of one trajectory.

    ``threshold``: draw u, evolve until the squared norm falls to u, jump,
    repeat.  ``bernoulli``: per-step jump decisions with probability
    2 gamma0 dt |<0|psi>|^2, kept as a first-order cross-check.
    """
    psi_i = _as_state4(psi_i)
    jumps = []
    m = 0
    w = psi_i
    e0 = np.zeros(4, dtype=complex)
    e0[model.G0] = 1.0
    while m < table.last:
        if method == "threshold":
            u = rng.random()
            if m == 0 and n0 is not None:
                n = _first_crossing(lambda k: n0[k], m, table.last, u)
            else:
                n = _first_crossing(lambda k: table.norm_sq(w, k), m, table.last, u)
        elif method == "bernoulli":
            idx = np.arange(m, table.last)
            v = table.states_from(w, m, idx)
            h = table.t[idx + 1] - table.t[idx]
            p = 2.0 * table.gamma0 * h * np.abs(v[:, model.G0]) ** 2 / np.sum(np.abs(v) ** 2, axis=1)
            hit = np.nonzero(rng.random(len(idx)) < p)[0]
            n = int(idx[hit[0]] + 1) if len(hit) else None
        else:
            raise ValueError(f"unknown sampling method {method!r}")
        if n is None:
            break
        jumps.append(n)
        m = n
        w = table.anchor(m, e0)
    return jumps


@dataclass
class TrajectoryRecord:
    jump_times: list
    jump_indices: list
    final_state_nonnorm: np.ndarray
    final_norm_sq: float
    ledgers: list
    final_populations: np.ndarray


def _segment_vector(table: NoJumpTable, psi_i, jumps):
    e0 = np.zeros(4, dtype=complex)
    e0[model.G0] = 1.0
    if not jumps:
        return 0, _as_state4(psi_i)
    return jumps[-1], table.anchor(jumps[-1], e0)


def run_trajectory(psi_i, schedule: drive.PulseSchedule, gamma0: float, seed: int, *, index: int = 0,
                   dt: float = propagate.DEFAULT_DT, table: NoJumpTable | None = None,
                   method: str = "threshold", cadence: int = 200, ledgers: bool = True) -> TrajectoryRecord:
    """One Monte Carlo wave-function trajectory with its per-segment phase ledgers."""
    psi_i = _as_state4(psi_i)
    if abs(np.vdot(psi_i, psi_i) - 1.0) > 1e-10:
        raise ValueError("initial state must be normalized")
    if table is None:
        table = NoJumpTable(schedule, gamma0, dt)
    jumps = sample_jumps(table, psi_i, trajectory_rng(seed, index), method) if gamma0 > 0 else []
    e0 = np.zeros(4, dtype=complex)
    e0[model.G0] = 1.0
    books = []
    if ledgers:
        starts = [0] + jumps
        ends = jumps + [table.last]
        for k, (a, b) in enumerate(zip(starts, ends)):
            w = psi_i if k == 0 else table.anchor(a, e0)
            idx = np.unique(np.concatenate((np.arange(a, b, cadence), [b])))
            t = table.t[idx]
            coeffs, _ = _interaction_coeffs(schedule, gamma0, t, table.states_from(w, a, idx))
            books.append(_build_ledger(schedule, t, coeffs, coeffs[0], gamma0, bright=k > 0))
    m, w = _segment_vector(table, psi_i, jumps)
    fin = table.state(w, table.last)
    nsq = float(np.vdot(fin, fin).real)
    return TrajectoryRecord([float(table.t[j]) for j in jumps], jumps, fin, nsq, books, np.abs(fin) ** 2 / nsq)


_CHUNK = 2048
_POOL_TABLE = None


def _sample_chunk(args):
    psi_i, seed, start, stop, method = args
    table = _POOL_TABLE
    n0 = table.norm_sq(psi_i, slice(None)) if method == "threshold" else None
    return [sample_jumps(table, psi_i, trajectory_rng(seed, i), method, n0) for i in range(start, stop)]


def sample_many(table: NoJumpTable, psi_i, n: int, seed: int, method: str = "threshold", workers: int = 1) -> list:
    """Jump-index lists for trajectories 0..n-1; independent of ``workers``."""
    global _POOL_TABLE
    psi_i = _as_state4(psi_i)
    if table.gamma0 == 0:
        return [[] for _ in range(n)]
    tasks = [(psi_i, seed, a, min(n, a + _CHUNK), method) for a in range(0, n, _CHUNK)]
    _POOL_TABLE = table
    try:
        if workers and workers > 1 and len(tasks) > 1 and hasattr(os, "fork"):
            import multiprocessing as mp

            with ProcessPoolExecutor(workers, mp_context=mp.get_context("fork")) as ex:
                parts = list(ex.map(_sample_chunk, tasks))
        else:
            parts = [_sample_chunk(task) for task in tasks]
    finally:
        _POOL_TABLE = None
    return [j for part in parts for j in part]


def average_trajectories(psi_i, schedule: drive.PulseSchedule, gamma0: float, n: int, seed: int, *,
                         dt: float = propagate.DEFAULT_DT, table: NoJumpTable | None = None,
                         method: str = "threshold", workers: int = 1, return_jumps: bool = False):
    """Mean of the normalized final outer products over ``n`` trajectories.

    Trajectory k draws from :func:`trajectory_rng` ``(seed, k)``, so the
    result does not depend on ``workers``.
    """
    if n < 1:
        raise ValueError("need at least one trajectory")
    if table is None:
        table = NoJumpTable(schedule, gamma0, dt)
    psi_i = _as_state4(psi_i)
    jumps = sample_many(table, psi_i, n, seed, method, workers)
    rho = _final_density(table, psi_i, jumps)
    return (rho, jumps) if return_jumps else rho


def final_states(table: NoJumpTable, psi_i, jumps: list):
    """Distinct normalized final states and their trajectory counts.

    A trajectory's final state depends only on its last jump, so the
    ensemble collapses to a handful of branches keyed by that index.
    """
    psi_i = _as_state4(psi_i)
    counts = {}
    for js in jumps:
        key = js[-1] if js else -1
        counts[key] = counts.get(key, 0) + 1
    e0 = np.zeros(4, dtype=complex)
    e0[model.G0] = 1.0
    keys = sorted(counts)
    states = []
    for key in keys:
        w = psi_i if key < 0 else table.anchor(key, e0)
        v = table.state(w, table.last)
        states.append(v / np.linalg.norm(v))
    return np.array(states), np.array([counts[k] for k in keys])


def _final_density(table, psi_i, jumps):
    states, counts = final_states(table, psi_i, jumps)
    rho = np.einsum("k,ki,kj->ij", counts, states, states.conj())
    return rho / len(jumps)


def ensemble_populations(table: NoJumpTable, psi_i, jumps: list, idx: np.ndarray) -> np.ndarray:
    """Trajectory-averaged normalized populations at grid indices ``idx``."""
    psi_i = _as_state4(psi_i)
    idx = np.asarray(idx)
    e0 = np.zeros(4, dtype=complex)
    e0[model.G0] = 1.0
    v = table.states_from(psi_i, 0, idx)
    p_nj = np.abs(v) ** 2 / np.sum(np.abs(v) ** 2, axis=1, keepdims=True)
    total = np.zeros((len(idx), 4))
    # Segment [start, end) of a trajectory contributes with that segment's state.
    weight_nj = np.zeros(len(idx))
    for js in jumps:
        first = js[0] if js else table.last + 1
        weight_nj += idx < first
        for k, m in enumerate(js):
            end = js[k + 1] if k + 1 < len(js) else table.last + 1
            sel = (idx >= m) & (idx < end)
            if not np.any(sel):
                continue
            u = table.states_from(table.anchor(m, e0), m, idx[sel])
            total[sel] += np.abs(u) ** 2 / np.sum(np.abs(u) ** 2, axis=1, keepdims=True)
    total += weight_nj[:, None] * p_nj
    return total / len(jumps)
