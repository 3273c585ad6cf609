"""Fixed-step RK4 propagation of state vectors and density matrices.

The equations of motion are linear, so one classical RK4 step is a matrix
``M_n`` that depends only on the generator at t_n, t_n + h/2 and t_n + h.
The step matrices are built in vectorized chunks and then chained; the
numbers are the same as stepping the vector directly.

Grids are uniform between consecutive breakpoints (pulse support edges),
so no step straddles a point where the drive is not smooth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

from . import drive, model

__all__ = [
    "StepControl",
    "StepSizeError",
    "PositivityError",
    "StateTrace",
    "DensityTrace",
    "time_grid",
    "rk4_maps",
    "iter_step_maps",
    "hamiltonian_source",
    "evolve_state",
    "propagator_table",
    "final_propagator",
    "lindblad_superoperator",
    "dephasing_dissipator",
    "evolve_density",
]

DEFAULT_DT = 1.0 / 40000.0
MAX_PHASE_STEP = 0.1
_CHUNK = 16384


class StepSizeError(ValueError):
    """dt * ||H|| exceeds the resolution bound somewhere on the grid."""


class PositivityError(ArithmeticError):
    """A propagated density matrix lost positivity beyond tolerance."""


@dataclass(frozen=True)
class StepControl:
    """Integration window, nominal step and observer cadence (every k-th step)."""

    t_start: float
    t_end: float
    dt: float = DEFAULT_DT
    cadence: int = 1
    breakpoints: tuple = ()
    max_phase_step: float = MAX_PHASE_STEP

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.t_end < self.t_start:
            raise ValueError("t_end must not precede t_start")
        if self.cadence < 1:
            raise ValueError("cadence must be >= 1")

    @classmethod
    def for_schedule(cls, schedule: drive.PulseSchedule, dt: float = DEFAULT_DT, cadence: int = 1,
                     t_start: float | None = None, t_end: float | None = None,
                     extra: tuple = ()) -> "StepControl":
        t0 = schedule.t_i if t_start is None else t_start
        t1 = schedule.t_f if t_end is None else t_end
        bps = tuple(float(b) for b in schedule.breakpoints()) + tuple(float(x) for x in extra)
        return cls(t0, t1, dt, cadence, bps)

    def grid(self) -> np.ndarray:
        return time_grid(self.t_start, self.t_end, self.dt, self.breakpoints)


def time_grid(t_start: float, t_end: float, dt: float, breakpoints=()) -> np.ndarray:
    """Piecewise-uniform grid with step <= dt that hits every breakpoint in range."""
    pts = [t_start, t_end]
    pts += [b for b in breakpoints if t_start < b < t_end]
    pts = np.unique(np.asarray(pts, dtype=float))
    pieces = []
    for a, b in zip(pts[:-1], pts[1:]):
        if b - a <= 1e-13:
            continue
        n = max(1, math.ceil((b - a) / dt - 1e-9))
        pieces.append(np.linspace(a, b, n + 1)[:-1])
    pieces.append(np.array([pts[-1]]))
    return np.concatenate(pieces)


def rk4_maps(generator: Callable, t: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Classical RK4 step matrices for y' = B(t) y, one per (t_n, h_n)."""
    B1 = generator(t)
    B2 = generator(t + 0.5 * h)
    B3 = generator(t + h)
    d = B1.shape[-1]
    eye = np.eye(d, dtype=complex)
    hh = h[:, None, None]
    K1 = B1
    K2 = B2 @ (eye + 0.5 * hh * K1)
    K3 = B2 @ (eye + 0.5 * hh * K2)
    K4 = B3 @ (eye + hh * K3)
    return eye + (hh / 6.0) * (K1 + 2.0 * K2 + 2.0 * K3 + K4)


def iter_step_maps(generator: Callable, grid: np.ndarray, chunk: int = _CHUNK) -> Iterator[tuple[int, np.ndarray]]:
    """Yield (first step index, step matrices) in chunks along ``grid``."""
    n = len(grid) - 1
    for start in range(0, n, chunk):
        stop = min(n, start + chunk)
        t = grid[start:stop]
        h = grid[start + 1:stop + 1] - t
        yield start, rk4_maps(generator, t, h)


def hamiltonian_source(schedule: drive.PulseSchedule, gamma0: float = 0.0, picture: str = "schrodinger") -> Callable:
    """Vectorized H(t) for the schedule: closed, no-jump, or interaction picture."""
    if picture not in ("schrodinger", "interaction"):
        raise ValueError(f"unknown picture {picture!r}")

    def H(t):
        s = drive.sample(schedule, t)
        if picture == "interaction":
            return model.hamiltonian_interaction(s, gamma0, t, schedule.t_i)
        if gamma0:
            return model.hamiltonian_nonhermitian(s, gamma0)
        return model.hamiltonian_closed(s)

    return H


def _check_steps(H: np.ndarray, h: np.ndarray, bound: float):
    # Frobenius norm bounds the spectral norm from above.
    nrm = np.sqrt(np.sum(np.abs(H) ** 2, axis=(-2, -1)))
    worst = np.max(h * nrm) if len(h) else 0.0
    if worst > bound:
        raise StepSizeError(f"dt*||H|| reaches {worst:.3g} > {bound}; reduce dt")


@dataclass
class StateTrace:
    """Observer samples of an evolved state (or a block of column states)."""

    t: np.ndarray
    states: np.ndarray
    grid: np.ndarray = field(repr=False, default=None)

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    @property
    def norm_sq(self) -> np.ndarray:
        return np.sum(np.abs(self.states) ** 2, axis=1)

    @property
    def populations(self) -> np.ndarray:
        """|amplitude|^2 in the (|0>, |1>, |e>, |2>) basis; no renormalization."""
        return np.abs(self.states) ** 2


def _chain(generator, grid, y0, cadence, observer, check=None):
    y = np.array(y0, dtype=complex)
    n = len(grid) - 1
    keep = list(range(0, n + 1, cadence))
    if keep[-1] != n:
        keep.append(n)
    keep_set = set(keep)
    ts, ys = [grid[0]], [y.copy()]
    if observer is not None:
        observer(grid[0], y)
    for start, maps in iter_step_maps(generator, grid):
        if check is not None:
            check(start, maps)
        for k in range(maps.shape[0]):
            y = maps[k] @ y
            idx = start + k + 1
            if idx in keep_set:
                ts.append(grid[idx])
                ys.append(y.copy())
                if observer is not None:
                    observer(grid[idx], y)
    return np.array(ts), np.array(ys)


def evolve_state(psi0, hamiltonian: Callable, ctl: StepControl, observer: Callable | None = None) -> StateTrace:
    """Integrate i psi' = H(t) psi without renormalizing.

    ``hamiltonian`` maps an array of times to an ``(n, 4, 4)`` stack.
    ``psi0`` may also be a ``(4, k)`` block of column states.  Samples are
    kept every ``ctl.cadence`` steps plus the final point; ``observer`` is
    called as ``observer(t, state)`` at the same samples.
    """
    grid = ctl.grid()

    def gen(t):
        return -1j * hamiltonian(t)

    def check(start, maps):
        t = grid[start:start + maps.shape[0]]
        h = grid[start + 1:start + 1 + maps.shape[0]] - t
        _check_steps(hamiltonian(t), h, ctl.max_phase_step)

    ts, ys = _chain(gen, grid, psi0, ctl.cadence, observer, check)
    return StateTrace(ts, ys, grid)


def propagator_table(hamiltonian: Callable, ctl: StepControl) -> StateTrace:
    """Propagator K(t_n, t_start) at every grid point (cadence ignored)."""
    full = StepControl(ctl.t_start, ctl.t_end, ctl.dt, 1, ctl.breakpoints, ctl.max_phase_step)
    return evolve_state(np.eye(4, dtype=complex), hamiltonian, full)


def _tree_product(maps: np.ndarray) -> np.ndarray:
    # maps[k] acts after maps[k-1]; returns maps[-1] @ ... @ maps[0].
    while maps.shape[0] > 1:
        if maps.shape[0] % 2:
            tail = maps[-1:]
            maps = maps[:-1]
        else:
            tail = None
        maps = maps[1::2] @ maps[0::2]
        if tail is not None:
            maps = np.concatenate([maps, tail])
    return maps[0]


def final_propagator(generator: Callable, grid: np.ndarray) -> np.ndarray:
    """Product of all RK4 step matrices over ``grid`` (generator is B = dy/dt operator)."""
    total = None
    for _, maps in iter_step_maps(generator, grid):
        p = _tree_product(maps)
        total = p if total is None else p @ total
    return total


def dephasing_dissipator(gamma0: float) -> np.ndarray:
    """Superoperator of C = sqrt(2 gamma0)|0><0| on row-major vec(rho)."""
    C = np.zeros((4, 4), dtype=complex)
    C[0, 0] = math.sqrt(2.0 * gamma0)
    return _dissipator(C)


def _dissipator(C: np.ndarray) -> np.ndarray:
    d = C.shape[0]
    eye = np.eye(d)
    CdC = C.conj().T @ C
    # row-major vec: vec(A rho B) = kron(A, B.T) vec(rho)
    return np.kron(C, C.conj()) - 0.5 * np.kron(CdC, eye) - 0.5 * np.kron(eye, CdC.T)


def lindblad_superoperator(H: np.ndarray, dissipator: np.ndarray) -> np.ndarray:
    """-i[H, .] plus a fixed dissipator, batched over leading axes of H."""
    d = H.shape[-1]
    eye = np.eye(d)
    comm = np.einsum("...ij,kl->...ikjl", H, eye) - np.einsum("ij,...lk->...ikjl", eye, H)
    comm = comm.reshape(H.shape[:-2] + (d * d, d * d))
    return -1j * comm + dissipator


@dataclass
class DensityTrace:
    t: np.ndarray
    rho: np.ndarray

    @property
    def final(self) -> np.ndarray:
        return self.rho[-1]

    @property
    def populations(self) -> np.ndarray:
        return np.real(np.einsum("nii->ni", self.rho))


def evolve_density(rho0, gamma0: float, schedule: drive.PulseSchedule | Callable, ctl: StepControl,
                   observer: Callable | None = None, positivity_tol: float = 1e-6) -> DensityTrace:
    """Integrate the dephasing master equation for the tripod drive.

    ``schedule`` may also be a Hamiltonian callable (array of times ->
    stack of 4x4 matrices), which is how toy models are run.
    """
    if gamma0 < 0:
        raise ValueError("gamma0 must be non-negative")
    rho0 = np.asarray(rho0, dtype=complex)
    if not np.allclose(rho0, rho0.conj().T, atol=1e-10):
        raise ValueError("rho0 must be Hermitian")
    H = hamiltonian_source(schedule) if isinstance(schedule, drive.PulseSchedule) else schedule
    D = dephasing_dissipator(gamma0)
    grid = ctl.grid()
    d = rho0.shape[0]

    def gen(t):
        return lindblad_superoperator(H(t), D)

    def check(start, maps):
        t = grid[start:start + maps.shape[0]]
        h = grid[start + 1:start + 1 + maps.shape[0]] - t
        _check_steps(H(t), h, ctl.max_phase_step)

    def watch(t, v):
        r = v.reshape(d, d)
        lo = np.linalg.eigvalsh(0.5 * (r + r.conj().T))[0]
        if lo < -positivity_tol:
            raise PositivityError(f"rho eigenvalue {lo:.3g} at t={t:.6g}; step too coarse")
        if observer is not None:
            observer(t, r)

    ts, vs = _chain(gen, grid, rho0.reshape(-1), ctl.cadence, watch, check)
    return DensityTrace(ts, vs.reshape(-1, d, d))
