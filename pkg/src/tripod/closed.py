"""Closed-system analysis: dark-state phase, gate matrix and full runs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import drive, model, propagate

__all__ = [
    "AdiabaticityError",
    "ClosedRun",
    "DarkTrace",
    "geometric_phase",
    "phase_trace",
    "gate_matrix",
    "propagate_dark",
    "run_closed",
    "match_global_phase",
    "BRIGHT_THRESHOLD",
]

BRIGHT_THRESHOLD = 1e-3


class AdiabaticityError(RuntimeError):
    """Population left the dark subspace beyond the configured threshold."""


def geometric_phase(schedule: drive.PulseSchedule, t_start: float | None = None,
                    t_end: float | None = None) -> float:
    """-int phi2_rate sin^2(theta_H) dt over [t_start, t_end] (defaults: whole sequence).

    Composite Gauss-Legendre on the smooth pieces between pulse edges, so
    the result is additive over any split of the interval to rounding.
    """
    t0 = schedule.t_i if t_start is None else t_start
    t1 = schedule.t_f if t_end is None else t_end
    if t1 < t0:
        return -geometric_phase(schedule, t1, t0)
    if schedule.phi2_rate == 0 or t1 == t0:
        return 0.0
    return -schedule.phi2_rate * drive.integrate(schedule, lambda s: np.sin(s.theta_h) ** 2, t0, t1)


def phase_trace(schedule: drive.PulseSchedule, times: np.ndarray) -> np.ndarray:
    """Cumulative dark-state phase from t_i to each entry of the sorted ``times``."""
    times = np.asarray(times, dtype=float)
    start = geometric_phase(schedule, schedule.t_i, times[0])
    run = drive.cumulative_integral(schedule, lambda s: np.sin(s.theta_h) ** 2, times)
    return start - schedule.phi2_rate * run


def gate_matrix(theta01: float, phi01: float, gamma_d1: float) -> np.ndarray:
    """2x2 rotation on span{|0>, |1>} produced by the dark-state phase."""
    c, s = np.cos(theta01), np.sin(theta01)
    g = np.exp(1j * gamma_d1)
    off = c * s * (g - 1.0)
    return np.array(
        [
            [c * c + g * s * s, off * np.exp(-1j * phi01)],
            [off * np.exp(1j * phi01), s * s + g * c * c],
        ]
    )


def match_global_phase(psi: np.ndarray, ref: np.ndarray) -> np.ndarray:
    """``psi`` times the unit phase that maximizes its overlap with ``ref``."""
    ov = np.vdot(psi, ref)
    if abs(ov) == 0:
        return psi
    return psi * (ov / abs(ov))


@dataclass
class DarkTrace:
    t: np.ndarray
    c_d1: np.ndarray
    c_d2: np.ndarray
    bright: np.ndarray
    gamma_d1: np.ndarray
    states: np.ndarray


def _dark_projection(schedule, trace: propagate.StateTrace):
    s = drive.sample(schedule, trace.t)
    frame = model.eigensystem_closed(s, allow_degenerate=True)
    c = frame.project(trace.states)
    return c, frame


def propagate_dark(psi_i, schedule: drive.PulseSchedule, *, dt: float = propagate.DEFAULT_DT,
                   cadence: int = 200, threshold: float = BRIGHT_THRESHOLD) -> DarkTrace:
    """Integrate the full Schroedinger equation and track the dark-state coefficients.

    Raises :class:`AdiabaticityError` if the bright plus excited population
    exceeds ``threshold`` at any observer sample.
    """
    psi_i = np.asarray(psi_i, dtype=complex)
    s0 = drive.sample(schedule, schedule.t_i)
    f0 = model.eigensystem_closed(s0, allow_degenerate=True)
    c0 = f0.project(psi_i)
    if abs(c0[model.PLUS]) ** 2 + abs(c0[model.MINUS]) ** 2 > 1e-12:
        raise ValueError("initial state must lie in the dark subspace at t_i")
    ctl = propagate.StepControl.for_schedule(schedule, dt=dt, cadence=cadence)
    tr = propagate.evolve_state(psi_i, propagate.hamiltonian_source(schedule), ctl)
    c, _ = _dark_projection(schedule, tr)
    bright = np.abs(c[:, model.PLUS]) ** 2 + np.abs(c[:, model.MINUS]) ** 2
    leak = bright + np.abs(tr.states[:, model.E]) ** 2
    if np.max(leak) > threshold:
        k = int(np.argmax(leak))
        raise AdiabaticityError(f"dark-subspace leakage {leak[k]:.3g} at t={tr.t[k]:.4g} exceeds {threshold}")
    return DarkTrace(tr.t, c[:, model.D1], c[:, model.D2], bright, phase_trace(schedule, tr.t), tr.states)


@dataclass
class ClosedRun:
    t: np.ndarray
    populations: np.ndarray
    final_state: np.ndarray
    gate: np.ndarray
    gamma_d1: float
    target: np.ndarray  # analytic gate applied to the initial qubit state

    def qubit_error(self) -> float:
        """Distance of the final |0>,|1> restriction from the gate output, global phase removed."""
        got = self.final_state[[model.G0, model.G1]]
        return float(np.linalg.norm(match_global_phase(got, self.target) - self.target))


def run_closed(psi_i, schedule: drive.PulseSchedule, *, dt: float = propagate.DEFAULT_DT,
               cadence: int = 200, threshold: float = BRIGHT_THRESHOLD) -> ClosedRun:
    """Full four-level run from a qubit state; checks adiabaticity along the way.

    ``psi_i`` is either a 2-vector on {|0>, |1>} or a 4-vector supported there.
    """
    psi_i = np.asarray(psi_i, dtype=complex)
    if psi_i.shape == (2,):
        q = psi_i
        psi_i = np.array([q[0], q[1], 0, 0], dtype=complex)
    else:
        if abs(psi_i[model.E]) > 0 or abs(psi_i[model.G2]) > 0:
            raise ValueError("initial state must be supported on {|0>, |1>}")
        q = psi_i[[model.G0, model.G1]]
    if abs(np.vdot(psi_i, psi_i) - 1.0) > 1e-10:
        raise ValueError("initial state must be normalized")
    dark = propagate_dark(psi_i, schedule, dt=dt, cadence=cadence, threshold=threshold)
    gamma = geometric_phase(schedule)
    U = gate_matrix(schedule.theta01_configured, schedule.phi01, gamma)
    return ClosedRun(dark.t, np.abs(dark.states) ** 2, dark.states[-1], U, gamma, U @ q)
